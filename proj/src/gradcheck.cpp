#include "taskcast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "taskcast/errors.hpp"
#include "taskcast/losses.hpp"
#include "taskcast/model.hpp"

namespace taskcast {
namespace {

constexpr double kStep = 1e-5;

double central_difference(double& x, const std::function<double()>& f) {
  const double saved = x;
  x = saved + kStep;
  const double up = f();
  x = saved - kStep;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * kStep);
}

// Central differences carry roundoff of about eps * |loss| / step, so the
// floor that guards near-zero entries grows with the loss being probed.
double noise_floor(double loss) { return 1e-6 * std::max(1.0, std::abs(loss)); }

struct Tally {
  std::size_t entries = 0;
  double worst = 0.0;
  void add(double analytic, double numeric, double floor = noise_floor(1.0)) {
    ++entries;
    worst = std::max(worst, relative_error(analytic, numeric, floor));
  }
};

// Compares every entry of `params` against the matching entry of `analytic`.
template <class Params>
void check_tensors(Params& params, const Params& analytic, const std::function<double()>& loss,
                   Tally& tally) {
  const std::vector<Matrix*> p = tensor_list(params);
  const std::vector<const Matrix*> a = tensor_list(analytic);
  const double floor = noise_floor(loss());
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto values = p[k]->values();
    auto grads = a[k]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      tally.add(grads[i], central_difference(values[i], loss), floor);
    }
  }
}

Matrix random_clip(std::size_t len, std::size_t dim, Rng& rng) {
  Matrix clip(len, dim);
  for (double& v : clip.values()) v = rng.normal(0.0, 1.0);
  return clip;
}

void check_cp_loss(Rng& rng, bool truncated, Tally& tally) {
  static constexpr int kSizes[] = {5, 10, 20};
  const int n = kSizes[rng.index(3)];
  Vector logits(static_cast<std::size_t>(n));
  for (double& v : logits) v = rng.uniform(-3.0, 3.0);
  const ProgressBin g{static_cast<int>(rng.index(static_cast<std::size_t>(n))), n};
  const Vector analytic = truncated ? cp_loss_truncated_gradient(logits, g) : cp_loss(logits, g).grad;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    tally.add(analytic[k], central_difference(logits[k], [&] { return cp_loss(logits, g).loss; }));
  }
}

void check_cross_entropy(Rng& rng, Tally& tally) {
  const std::size_t c = 2 + rng.index(10);
  Vector logits(c);
  for (double& v : logits) v = rng.uniform(-3.0, 3.0);
  const std::size_t target = rng.index(c);
  const Vector analytic = cross_entropy_loss(logits, target).grad;
  for (std::size_t k = 0; k < c; ++k) {
    tally.add(analytic[k],
              central_difference(logits[k], [&] { return cross_entropy_loss(logits, target).loss; }));
  }
}

void check_lstm(Rng& rng, Tally& tally) {
  const std::size_t dim = 4, len = 5, hidden = 3;
  LstmStack stack = LstmStack::zeros(dim, hidden);
  stack.init_uniform(rng);
  for (double& v : stack.lower.biases.values()) v += rng.uniform(-0.5, 0.5);
  const Matrix clip = random_clip(len, dim, rng);
  Vector weights(hidden);
  for (double& w : weights) w = rng.normal(0.0, 1.0);
  const std::uint64_t mask_seed = rng.engine()();

  auto loss = [&] {
    Rng masks(mask_seed);
    const Vector h = stacked_lstm_forward(stack, clip, 0.3, true, &masks);
    double l = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) l += weights[j] * h[j];
    return l;
  };
  StackTrace trace;
  Rng masks(mask_seed);
  stacked_lstm_forward(stack, clip, 0.3, true, &masks, &trace);
  LstmStack grads = zeros_like(stack);
  stacked_lstm_backward(stack, trace, weights, grads);
  check_tensors(stack, grads, loss, tally);
}

void check_streams(Rng& rng, Tally& tally) {
  const std::size_t dim = 4, len = 5, hidden = 3, feature = 6, classes = 3;
  const Matrix clip = random_clip(len, dim, rng);

  // Local stream under cross-entropy.
  StreamParams local = StreamParams::zeros(dim, hidden, feature, classes);
  local.init_uniform(rng);
  const std::size_t target = rng.index(classes);
  {
    StreamTrace trace;
    const StreamOutput out = run_stream(local, clip, 0.0, false, nullptr, &trace);
    StreamParams grads = zeros_like(local);
    backward_stream(local, trace, cross_entropy_loss(out.logits, target).grad, {}, grads);
    check_tensors(local, grads, [&] {
      return cross_entropy_loss(forward_local(local, clip).logits, target).loss;
    }, tally);
  }

  // Progress stream under the cumulative probability loss.
  const int n = 5;
  StreamParams prog = StreamParams::zeros(dim, hidden, feature, n);
  prog.init_uniform(rng);
  const ProgressBin bin{static_cast<int>(rng.index(n)), n};
  StreamTrace trace;
  const StreamOutput out = run_stream(prog, clip, 0.0, false, nullptr, &trace);
  StreamParams grads = zeros_like(prog);
  backward_stream(prog, trace, cp_loss(out.logits, bin).grad, {}, grads);
  check_tensors(prog, grads, [&] {
    return cp_loss(forward_progress(prog, clip, n).logits, bin).loss;
  }, tally);
}

void check_combined(Rng& rng, std::size_t trial, Tally& tally) {
  ModelConfig cfg{4, 3, 3, 100, 0.2, {5, 10, 20}};
  CombinedModelParams params = CombinedModelParams::create(cfg, rng.engine()());
  const Matrix clip = random_clip(5, cfg.input_dim, rng);
  ForecastSample sample;
  sample.clip = clip;
  sample.next_action = static_cast<int>(rng.index(cfg.num_classes));
  for (int n : cfg.granularities) {
    sample.progress_bins[n] = ProgressBin{static_cast<int>(rng.index(static_cast<std::size_t>(n))), n};
  }
  static constexpr ProgressLossKind kKinds[] = {ProgressLossKind::CpLoss,
                                                ProgressLossKind::CrossEntropy,
                                                ProgressLossKind::L2};
  LossSpec spec;
  spec.progress_kind = kKinds[trial % 3];
  spec.weights.progress = {1.0, 0.5, 2.0};
  const std::uint64_t mask_seed = rng.engine()();

  auto loss = [&] {
    Rng masks(mask_seed);
    ForwardOptions opts{true, &masks, false};
    return combined_loss(forward_combined(params, clip, opts), cfg, sample, spec).total;
  };
  Rng masks(mask_seed);
  CombinedTrace trace;
  const CombinedOutput out = forward_combined(params, clip, ForwardOptions{true, &masks, false}, &trace);
  const LossBreakdown lb = combined_loss(out, cfg, sample, spec);
  CombinedModelParams grads = zeros_like(params);
  backward_combined(params, trace, lb.grads, grads);
  check_tensors(params, grads, loss, tally);
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckComponent parse_grad_check_component(const std::string& name) {
  for (GradCheckComponent c : all_grad_check_components()) {
    if (to_string(c) == name) return c;
  }
  if (name == "losses") return GradCheckComponent::CpLoss;
  throw DomainError("unknown grad-check component '" + name + "'");
}

std::string to_string(GradCheckComponent c) {
  switch (c) {
    case GradCheckComponent::CpLoss: return "cploss";
    case GradCheckComponent::CpLossTruncated: return "cploss-truncated";
    case GradCheckComponent::CrossEntropy: return "cross-entropy";
    case GradCheckComponent::Lstm: return "lstm";
    case GradCheckComponent::Streams: return "streams";
    case GradCheckComponent::Combined: return "combined";
  }
  return "unknown";
}

const std::vector<GradCheckComponent>& all_grad_check_components() {
  static const std::vector<GradCheckComponent> all{
      GradCheckComponent::CpLoss, GradCheckComponent::CpLossTruncated,
      GradCheckComponent::CrossEntropy, GradCheckComponent::Lstm, GradCheckComponent::Streams,
      GradCheckComponent::Combined};
  return all;
}

GradCheckReport grad_check(GradCheckComponent component, std::size_t trials, double tolerance,
                           std::uint64_t seed) {
  Rng rng(seed);
  Tally tally;
  for (std::size_t t = 0; t < trials; ++t) {
    switch (component) {
      case GradCheckComponent::CpLoss: check_cp_loss(rng, false, tally); break;
      case GradCheckComponent::CpLossTruncated: check_cp_loss(rng, true, tally); break;
      case GradCheckComponent::CrossEntropy: check_cross_entropy(rng, tally); break;
      case GradCheckComponent::Lstm: check_lstm(rng, tally); break;
      case GradCheckComponent::Streams: check_streams(rng, tally); break;
      case GradCheckComponent::Combined: check_combined(rng, t, tally); break;
    }
  }
  return GradCheckReport{to_string(component), trials, tally.entries, tally.worst, tolerance,
                         tally.entries > 0 && tally.worst < tolerance};
}

}  // namespace taskcast
