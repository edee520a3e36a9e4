#include "taskcast/metrics.hpp"

#include <iomanip>

#include "taskcast/errors.hpp"

namespace taskcast {

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                              std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(truth.size()) + " labels vs " +
                     std::to_string(predicted.size()) + " predictions");
  }
  MetricsReport r;
  r.total = truth.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw DomainError("compute_metrics: class index out of range");
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }

  r.per_class_precision.assign(num_classes, 0.0);
  r.per_class_recall.assign(num_classes, 0.0);
  r.support.assign(num_classes, 0);
  std::size_t correct = 0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t predicted_c = 0;
    for (std::size_t t = 0; t < num_classes; ++t) {
      r.support[c] += r.confusion[c][t];
      predicted_c += r.confusion[t][c];
    }
    const std::size_t tp = r.confusion[c][c];
    correct += tp;
    if (predicted_c > 0) r.per_class_precision[c] = static_cast<double>(tp) / static_cast<double>(predicted_c);
    if (r.support[c] > 0) {
      r.per_class_recall[c] = static_cast<double>(tp) / static_cast<double>(r.support[c]);
      r.mean_precision += r.per_class_precision[c];
      r.mean_recall += r.per_class_recall[c];
      ++supported;
    }
  }
  if (supported > 0) {
    r.mean_precision /= static_cast<double>(supported);
    r.mean_recall /= static_cast<double>(supported);
  }
  if (r.total > 0) r.forecast_accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json progress = nlohmann::json::object();
  for (const auto& [n, acc] : progress_accuracy) progress[std::to_string(n)] = acc;
  return {{"class_names", class_names},
          {"total", total},
          {"forecast_accuracy", forecast_accuracy},
          {"per_class_precision", per_class_precision},
          {"per_class_recall", per_class_recall},
          {"support", support},
          {"mean_precision", mean_precision},
          {"mean_recall", mean_recall},
          {"confusion", confusion},
          {"progress_accuracy", progress}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.class_names = j.at("class_names").get<std::vector<std::string>>();
  r.total = j.at("total").get<std::size_t>();
  r.forecast_accuracy = j.at("forecast_accuracy").get<double>();
  r.per_class_precision = j.at("per_class_precision").get<std::vector<double>>();
  r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  r.support = j.at("support").get<std::vector<std::size_t>>();
  r.mean_precision = j.at("mean_precision").get<double>();
  r.mean_recall = j.at("mean_recall").get<double>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& [k, v] : j.at("progress_accuracy").items()) {
    r.progress_accuracy[std::stoi(k)] = v.get<double>();
  }
  return r;
}

void MetricsReport::print_table(std::ostream& out) const {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(1);
  out << "samples         " << total << '\n'
      << "accuracy        " << 100.0 * forecast_accuracy << "%\n"
      << "mean precision  " << 100.0 * mean_precision << "%\n"
      << "mean recall     " << 100.0 * mean_recall << "%\n";
  for (const auto& [n, acc] : progress_accuracy) {
    out << "progress N=" << std::setw(2) << n << "   " << 100.0 * acc << "%\n";
  }
  out << "\n" << std::left << std::setw(16) << "class" << std::right << std::setw(9) << "support"
      << std::setw(11) << "precision" << std::setw(9) << "recall" << '\n';
  for (std::size_t c = 0; c < per_class_recall.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    out << std::left << std::setw(16) << name << std::right << std::setw(9) << support[c]
        << std::setw(10) << 100.0 * per_class_precision[c] << '%' << std::setw(8)
        << 100.0 * per_class_recall[c] << "%\n";
  }
  out << "\nconfusion (rows = true, cols = predicted)\n";
  for (const auto& row : confusion) {
    for (std::size_t v : row) out << std::setw(5) << v;
    out << '\n';
  }
  out.flags(flags);
}

}  // namespace taskcast
