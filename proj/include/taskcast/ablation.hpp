#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskcast/trainer.hpp"

namespace taskcast {

struct AblationCell {
  std::string config;  // local, +5, +5+10, +5+10+20
  ProgressLossKind loss = ProgressLossKind::CrossEntropy;
  std::vector<MetricsReport> per_seed;
  double accuracy = 0.0;  // means over seeds
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  std::map<int, double> progress_accuracy;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<ProgressLossKind> losses;
  std::vector<AblationCell> cells;  // config-major, loss-minor

  const AblationCell& cell(const std::string& config, ProgressLossKind loss) const;
  // Accuracy of the full model minus the local baseline.
  double improvement(ProgressLossKind loss) const;

  nlohmann::json to_json() const;
  void print(std::ostream& out) const;
};

// Trains and evaluates every (config, loss, seed) cell. The local model has
// no progress streams, so it is trained once per seed and shared by all
// loss columns.
AblationTable run_ablation(const Dataset& train_set, const Dataset& test_set,
                           const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                           const std::vector<ProgressLossKind>& losses,
                           const std::vector<std::string>& configs = ablation_names(),
                           std::ostream* progress_log = nullptr);

}  // namespace taskcast
