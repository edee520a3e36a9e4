#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskcast/dense.hpp"
#include "taskcast/losses.hpp"
#include "taskcast/lstm.hpp"
#include "taskcast/params.hpp"
#include "taskcast/tensor.hpp"

namespace taskcast {

enum class ProgressLossKind { CrossEntropy, CpLoss, L2 };

std::string to_string(ProgressLossKind kind);
// Accepts "cross-entropy" / "ce", "cploss" / "cp", "l2".
ProgressLossKind parse_progress_loss(const std::string& name);

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_size = 32;
  std::size_t feature_size = 100;
  double dropout = 0.2;
  std::vector<int> granularities{5, 10, 20};

  std::size_t fusion_input_size() const noexcept {
    return feature_size * (1 + granularities.size());
  }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Granularity sets of the ablation ladder: "local", "+5", "+5+10", "+5+10+20".
std::vector<int> ablation_granularities(const std::string& name);
const std::vector<std::string>& ablation_names();

// Stacked LSTM -> tanh projection (the stream feature) -> linear head.
struct StreamParams {
  LstmStack lstm;
  Dense projection;
  Dense head;

  static StreamParams zeros(std::size_t input_dim, std::size_t hidden, std::size_t feature,
                            std::size_t head_size);
  void init_uniform(Rng& rng);

  std::size_t head_size() const noexcept { return head.out_size(); }

  void visit(const std::string& prefix, const TensorVisitor& fn);
  void visit(const std::string& prefix, const ConstTensorVisitor& fn) const;
};

struct CombinedModelParams {
  ModelConfig config;
  StreamParams action;
  std::vector<StreamParams> progress;  // one per config.granularities entry
  Dense fusion;                        // concatenated stream features -> class logits

  static CombinedModelParams zeros(const ModelConfig& config);
  static CombinedModelParams create(const ModelConfig& config, std::uint64_t seed);

  void visit(const std::string& prefix, const TensorVisitor& fn);
  void visit(const std::string& prefix, const ConstTensorVisitor& fn) const;
};

// One training or evaluation example.
struct ForecastSample {
  Matrix clip;  // l x D
  int next_action = 0;
  std::map<int, ProgressBin> progress_bins;  // keyed by granularity
  std::string sequence_id;
  std::vector<std::size_t> clip_frame_indices;
};

// Label of the first frame after last_index whose class differs from
// labels[last_index]. Throws DomainError when no such frame exists.
int forecast_target(std::span<const int> labels, std::size_t last_index);

struct StreamOutput {
  Vector logits;
  Vector feature;
};

struct StreamTrace {
  StackTrace lstm;
  Vector top;      // final upper hidden state
  Vector feature;  // tanh(projection(top))
};

StreamOutput run_stream(const StreamParams& stream, const Matrix& clip, double dropout,
                        bool train, Rng* rng, StreamTrace* trace);

// d_logits flows in through the head; d_feature_extra (may be empty) is added
// at the stream feature, e.g. from the fusion head.
void backward_stream(const StreamParams& stream, const StreamTrace& trace,
                     std::span<const double> d_logits, std::span<const double> d_feature_extra,
                     StreamParams& grads);

// Eval-mode forward of the local forecasting stream.
StreamOutput forward_local(const StreamParams& stream, const Matrix& clip);

// Eval-mode forward of a progress stream; its head must have N outputs.
StreamOutput forward_progress(const StreamParams& stream, const Matrix& clip, int granularity);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;
  // Feed zeros in place of the progress-stream features to the fusion head.
  bool zero_progress_features = false;
};

struct CombinedOutput {
  Vector fused_logits;
  Vector action_logits;
  std::vector<Vector> progress_logits;  // aligned with config.granularities
};

struct CombinedTrace {
  StreamTrace action;
  std::vector<StreamTrace> progress;
  Vector fusion_input;
  bool zero_progress_features = false;
};

CombinedOutput forward_combined(const CombinedModelParams& params, const Matrix& clip,
                                const ForwardOptions& options = {},
                                CombinedTrace* trace = nullptr);

struct LossWeights {
  double fused = 1.0;
  double local = 1.0;
  std::vector<double> progress;  // per granularity; empty means all 1
};

struct LossSpec {
  ProgressLossKind progress_kind = ProgressLossKind::CrossEntropy;
  LossWeights weights;
};

struct OutputGradients {
  Vector fused;
  Vector action;
  std::vector<Vector> progress;
};

struct LossBreakdown {
  double total = 0.0;
  double fused = 0.0;
  double local = 0.0;
  std::vector<double> progress;  // unweighted, per granularity
  OutputGradients grads;         // of the weighted total
};

// w_fused * CE(fused) + w_local * CE(action head) + sum_N w_N * progress loss.
// For the L2 kind the first output of each progress head is the regressed bin.
LossBreakdown combined_loss(const CombinedOutput& outputs, const ModelConfig& config,
                            const ForecastSample& sample, const LossSpec& spec);

// Accumulates parameter gradients for the given output gradients.
void backward_combined(const CombinedModelParams& params, const CombinedTrace& trace,
                       const OutputGradients& output_grads, CombinedModelParams& grads);

// Bin predicted by a progress head under the given loss kind.
int predicted_progress(std::span<const double> logits, ProgressLossKind kind);

}  // namespace taskcast
