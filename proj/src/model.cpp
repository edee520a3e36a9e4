#include "taskcast/model.hpp"

#include <algorithm>
#include <cmath>

#include "taskcast/errors.hpp"

namespace taskcast {

std::string to_string(ProgressLossKind kind) {
  switch (kind) {
    case ProgressLossKind::CrossEntropy: return "cross-entropy";
    case ProgressLossKind::CpLoss: return "cploss";
    case ProgressLossKind::L2: return "l2";
  }
  return "unknown";
}

ProgressLossKind parse_progress_loss(const std::string& name) {
  if (name == "cross-entropy" || name == "ce" || name == "crossentropy") {
    return ProgressLossKind::CrossEntropy;
  }
  if (name == "cploss" || name == "cp") return ProgressLossKind::CpLoss;
  if (name == "l2") return ProgressLossKind::L2;
  throw DomainError("unknown progress loss '" + name + "' (cross-entropy, cploss, l2)");
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ShapeError("model config: input_dim must be set");
  if (num_classes < 2) throw ShapeError("model config: need at least two classes");
  if (hidden_size == 0 || feature_size == 0) throw ShapeError("model config: zero layer width");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("model config: dropout not in [0,1)");
  for (int n : granularities) {
    if (n < 1) throw DomainError("model config: granularity must be >= 1");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_dim", input_dim},       {"num_classes", num_classes},
          {"hidden_size", hidden_size},   {"feature_size", feature_size},
          {"dropout", dropout},           {"granularities", granularities}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.feature_size = j.at("feature_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.granularities = j.at("granularities").get<std::vector<int>>();
  return c;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"local", "+5", "+5+10", "+5+10+20"};
  return names;
}

std::vector<int> ablation_granularities(const std::string& name) {
  if (name == "local") return {};
  if (name == "+5") return {5};
  if (name == "+5+10") return {5, 10};
  if (name == "+5+10+20" || name == "combined") return {5, 10, 20};
  throw DomainError("unknown model configuration '" + name +
                    "' (local, +5, +5+10, +5+10+20, combined)");
}

StreamParams StreamParams::zeros(std::size_t input_dim, std::size_t hidden, std::size_t feature,
                                 std::size_t head_size) {
  return StreamParams{LstmStack::zeros(input_dim, hidden), Dense::zeros(hidden, feature),
                      Dense::zeros(feature, head_size)};
}

void StreamParams::init_uniform(Rng& rng) {
  lstm.init_uniform(rng);
  projection.init_uniform(rng);
  head.init_uniform(rng);
}

void StreamParams::visit(const std::string& prefix, const TensorVisitor& fn) {
  lstm.visit(prefix + ".lstm", fn);
  projection.visit(prefix + ".projection", fn);
  head.visit(prefix + ".head", fn);
}

void StreamParams::visit(const std::string& prefix, const ConstTensorVisitor& fn) const {
  lstm.visit(prefix + ".lstm", fn);
  projection.visit(prefix + ".projection", fn);
  head.visit(prefix + ".head", fn);
}

CombinedModelParams CombinedModelParams::zeros(const ModelConfig& config) {
  config.validate();
  CombinedModelParams p;
  p.config = config;
  p.action = StreamParams::zeros(config.input_dim, config.hidden_size, config.feature_size,
                                 config.num_classes);
  for (int n : config.granularities) {
    p.progress.push_back(StreamParams::zeros(config.input_dim, config.hidden_size,
                                             config.feature_size, static_cast<std::size_t>(n)));
  }
  p.fusion = Dense::zeros(config.fusion_input_size(), config.num_classes);
  return p;
}

CombinedModelParams CombinedModelParams::create(const ModelConfig& config, std::uint64_t seed) {
  CombinedModelParams p = zeros(config);
  Rng rng(seed);
  p.action.init_uniform(rng);
  for (StreamParams& s : p.progress) s.init_uniform(rng);
  p.fusion.init_uniform(rng);
  return p;
}

void CombinedModelParams::visit(const std::string& prefix, const TensorVisitor& fn) {
  action.visit(prefix + "act", fn);
  for (std::size_t k = 0; k < progress.size(); ++k) {
    progress[k].visit(prefix + "progress" + std::to_string(config.granularities[k]), fn);
  }
  fusion.visit(prefix + "fusion", fn);
}

void CombinedModelParams::visit(const std::string& prefix, const ConstTensorVisitor& fn) const {
  action.visit(prefix + "act", fn);
  for (std::size_t k = 0; k < progress.size(); ++k) {
    progress[k].visit(prefix + "progress" + std::to_string(config.granularities[k]), fn);
  }
  fusion.visit(prefix + "fusion", fn);
}

int forecast_target(std::span<const int> labels, std::size_t last_index) {
  if (last_index >= labels.size()) {
    throw DomainError("forecast_target: index " + std::to_string(last_index) +
                      " beyond sequence of length " + std::to_string(labels.size()));
  }
  const int current = labels[last_index];
  for (std::size_t m = last_index + 1; m < labels.size(); ++m) {
    if (labels[m] != current) return labels[m];
  }
  throw DomainError("forecast_target: no action follows index " + std::to_string(last_index));
}

StreamOutput run_stream(const StreamParams& stream, const Matrix& clip, double dropout,
                        bool train, Rng* rng, StreamTrace* trace) {
  StackTrace* lstm_trace = trace != nullptr ? &trace->lstm : nullptr;
  Vector top = stacked_lstm_forward(stream.lstm, clip, dropout, train, rng, lstm_trace);
  Vector feature = stream.projection.forward(top);
  for (double& v : feature) v = std::tanh(v);
  StreamOutput out{stream.head.forward(feature), feature};
  if (trace != nullptr) {
    trace->top = std::move(top);
    trace->feature = std::move(feature);
  }
  return out;
}

StreamOutput forward_local(const StreamParams& stream, const Matrix& clip) {
  return run_stream(stream, clip, 0.0, false, nullptr, nullptr);
}

StreamOutput forward_progress(const StreamParams& stream, const Matrix& clip, int granularity) {
  if (granularity < 1 || stream.head_size() != static_cast<std::size_t>(granularity)) {
    throw ShapeError("forward_progress: head has " + std::to_string(stream.head_size()) +
                     " outputs, asked for granularity " + std::to_string(granularity));
  }
  return run_stream(stream, clip, 0.0, false, nullptr, nullptr);
}

CombinedOutput forward_combined(const CombinedModelParams& params, const Matrix& clip,
                                const ForwardOptions& options, CombinedTrace* trace) {
  const ModelConfig& cfg = params.config;
  if (clip.cols() != cfg.input_dim) {
    throw ShapeError("forward_combined: clip has " + std::to_string(clip.cols()) +
                     " features, model expects " + std::to_string(cfg.input_dim));
  }
  const double dropout = cfg.dropout;
  CombinedOutput out;
  Vector fusion_input;
  fusion_input.reserve(cfg.fusion_input_size());

  if (trace != nullptr) {
    trace->progress.assign(params.progress.size(), StreamTrace{});
    trace->zero_progress_features = options.zero_progress_features;
  }

  StreamOutput act = run_stream(params.action, clip, dropout, options.train, options.rng,
                                trace != nullptr ? &trace->action : nullptr);
  fusion_input.insert(fusion_input.end(), act.feature.begin(), act.feature.end());
  out.action_logits = std::move(act.logits);

  for (std::size_t k = 0; k < params.progress.size(); ++k) {
    StreamOutput s = run_stream(params.progress[k], clip, dropout, options.train, options.rng,
                                trace != nullptr ? &trace->progress[k] : nullptr);
    if (options.zero_progress_features) {
      fusion_input.insert(fusion_input.end(), s.feature.size(), 0.0);
    } else {
      fusion_input.insert(fusion_input.end(), s.feature.begin(), s.feature.end());
    }
    out.progress_logits.push_back(std::move(s.logits));
  }

  out.fused_logits = params.fusion.forward(fusion_input);
  if (trace != nullptr) trace->fusion_input = std::move(fusion_input);
  return out;
}

LossBreakdown combined_loss(const CombinedOutput& outputs, const ModelConfig& config,
                            const ForecastSample& sample, const LossSpec& spec) {
  const LossWeights& w = spec.weights;
  const std::size_t k_streams = config.granularities.size();
  if (!w.progress.empty() && w.progress.size() != k_streams) {
    throw ShapeError("combined_loss: " + std::to_string(w.progress.size()) +
                     " progress weights for " + std::to_string(k_streams) + " streams");
  }
  if (sample.next_action < 0 || static_cast<std::size_t>(sample.next_action) >= config.num_classes) {
    throw DomainError("combined_loss: next action " + std::to_string(sample.next_action) +
                      " outside the class range");
  }
  const auto target = static_cast<std::size_t>(sample.next_action);

  LossBreakdown out;
  out.grads.fused.assign(outputs.fused_logits.size(), 0.0);
  out.grads.action.assign(outputs.action_logits.size(), 0.0);
  out.grads.progress.resize(k_streams);
  out.progress.assign(k_streams, 0.0);

  const VectorLoss fused = cross_entropy_loss(outputs.fused_logits, target);
  out.fused = fused.loss;
  if (w.fused != 0.0) {
    out.total += w.fused * fused.loss;
    for (std::size_t i = 0; i < fused.grad.size(); ++i) out.grads.fused[i] = w.fused * fused.grad[i];
  }

  const VectorLoss local = cross_entropy_loss(outputs.action_logits, target);
  out.local = local.loss;
  if (w.local != 0.0) {
    out.total += w.local * local.loss;
    for (std::size_t i = 0; i < local.grad.size(); ++i) out.grads.action[i] = w.local * local.grad[i];
  }

  for (std::size_t k = 0; k < k_streams; ++k) {
    const int n = config.granularities[k];
    const Vector& logits = outputs.progress_logits[k];
    Vector& grad = out.grads.progress[k];
    grad.assign(logits.size(), 0.0);
    const double weight = w.progress.empty() ? 1.0 : w.progress[k];

    const auto it = sample.progress_bins.find(n);
    if (it == sample.progress_bins.end()) {
      if (weight != 0.0) {
        throw DomainError("combined_loss: sample has no progress target for N=" +
                          std::to_string(n));
      }
      continue;
    }
    const ProgressBin& bin = it->second;

    switch (spec.progress_kind) {
      case ProgressLossKind::CrossEntropy: {
        const VectorLoss l = cross_entropy_loss(logits, static_cast<std::size_t>(bin.bin));
        out.progress[k] = l.loss;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = weight * l.grad[i];
        break;
      }
      case ProgressLossKind::CpLoss: {
        const VectorLoss l = cp_loss(logits, bin);
        out.progress[k] = l.loss;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = weight * l.grad[i];
        break;
      }
      case ProgressLossKind::L2: {
        const ScalarLoss l = l2_progress_loss(static_cast<double>(bin.bin), logits[0]);
        out.progress[k] = l.loss;
        grad[0] = weight * l.grad;
        break;
      }
    }
    out.total += weight * out.progress[k];
  }
  return out;
}

void backward_stream(const StreamParams& stream, const StreamTrace& trace,
                     std::span<const double> d_logits, std::span<const double> d_feature_extra,
                     StreamParams& grads) {
  const std::size_t f = stream.projection.out_size();
  Vector d_feature(f, 0.0);
  stream.head.backward(trace.feature, d_logits, grads.head, d_feature);
  if (!d_feature_extra.empty()) {
    for (std::size_t i = 0; i < f; ++i) d_feature[i] += d_feature_extra[i];
  }
  for (std::size_t i = 0; i < f; ++i) d_feature[i] *= 1.0 - trace.feature[i] * trace.feature[i];
  Vector d_top(stream.projection.in_size(), 0.0);
  stream.projection.backward(trace.top, d_feature, grads.projection, d_top);
  stacked_lstm_backward(stream.lstm, trace.lstm, d_top, grads.lstm);
}

void backward_combined(const CombinedModelParams& params, const CombinedTrace& trace,
                       const OutputGradients& output_grads, CombinedModelParams& grads) {
  const std::size_t f = params.config.feature_size;
  Vector d_fusion_input(params.fusion.in_size(), 0.0);
  params.fusion.backward(trace.fusion_input, output_grads.fused, grads.fusion, d_fusion_input);

  backward_stream(params.action, trace.action, output_grads.action,
                  std::span<const double>(d_fusion_input).subspan(0, f), grads.action);
  for (std::size_t k = 0; k < params.progress.size(); ++k) {
    std::span<const double> extra;
    if (!trace.zero_progress_features) {
      extra = std::span<const double>(d_fusion_input).subspan((k + 1) * f, f);
    }
    backward_stream(params.progress[k], trace.progress[k], output_grads.progress[k], extra,
                    grads.progress[k]);
  }
}

int predicted_progress(std::span<const double> logits, ProgressLossKind kind) {
  if (kind == ProgressLossKind::L2) {
    const auto n = static_cast<double>(logits.size());
    const double clamped = std::clamp(std::round(logits[0]), 0.0, n - 1.0);
    return static_cast<int>(clamped);
  }
  return predicted_bin(logits).bin;
}

}  // namespace taskcast
