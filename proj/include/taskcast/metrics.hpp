#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace taskcast {

struct MetricsReport {
  std::vector<std::string> class_names;
  std::size_t total = 0;
  double forecast_accuracy = 0.0;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<std::size_t> support;  // true samples per class
  double mean_precision = 0.0;       // over classes with support
  double mean_recall = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::map<int, double> progress_accuracy;          // keyed by granularity

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  void print_table(std::ostream& out) const;
};

// Confusion matrix and derived rates. A class with no predicted positives
// gets precision 0; classes without support are left out of the means.
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                              std::size_t num_classes);

}  // namespace taskcast
