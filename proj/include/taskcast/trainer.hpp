#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskcast/adam.hpp"
#include "taskcast/dataset_io.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/model.hpp"
#include "taskcast/sampler.hpp"

namespace taskcast {

struct TrainConfig {
  ModelConfig model;  // input_dim / num_classes are taken from the data
  SamplerConfig sampler;
  AdamConfig optimizer;
  LossSpec loss;
  std::size_t epochs = 10;
  std::size_t batches_per_epoch = 100;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double validation_fraction = 0.1;
  bool standardize = false;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // checkpoints and history; empty = in memory only

  nlohmann::json to_json() const;
};

struct LossRecord {
  std::size_t step = 0;
  std::string term;
  double value = 0.0;
};

struct TrainResult {
  CombinedModelParams params;  // best by validation accuracy, else last
  CombinedModelParams last;
  std::optional<Standardizer> standardizer;
  std::vector<LossRecord> history;
  std::vector<double> validation_accuracy;  // per epoch
  std::vector<std::string> validation_ids;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic given cfg.seed. Holds out cfg.validation_fraction of the
// sequences (by sorted id) for checkpoint selection.
TrainResult train(const Dataset& train_set, const TrainConfig& cfg, std::ostream* log = nullptr);

// step,term,value
void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history);

// Uniform window coverage of every sequence; deterministic.
MetricsReport evaluate(const CombinedModelParams& params, const Dataset& test,
                       const SamplerConfig& cfg, ProgressLossKind progress_kind);

}  // namespace taskcast
