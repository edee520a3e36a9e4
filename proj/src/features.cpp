#include "taskcast/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "taskcast/errors.hpp"

namespace taskcast {
namespace {

void random_direction(std::span<double> out, double norm, Rng& rng) {
  double sq = 0.0;
  for (double& v : out) {
    v = rng.normal(0.0, 1.0);
    sq += v * v;
  }
  const double scale = norm / std::sqrt(sq);
  for (double& v : out) v *= scale;
}

}  // namespace

void FeatureModel::validate() const {
  if (class_means.cols() == 0 || class_means.rows() == 0) {
    throw DomainError("feature model: need at least one class and one dimension");
  }
  if (noise_std < 0.0) throw DomainError("feature model: negative noise");
  if (smoothing_window == 0) throw DomainError("feature model: smoothing window must be >= 1");
  if (!progress_anchors.empty() && progress_anchors.cols() != class_means.cols()) {
    throw ShapeError("feature model: progress anchors have the wrong width");
  }
  for (std::size_t a = 0; a < class_means.rows(); ++a) {
    for (std::size_t b = a + 1; b < class_means.rows(); ++b) {
      if (std::equal(class_means.row(a).begin(), class_means.row(a).end(),
                     class_means.row(b).begin())) {
        throw DomainError("feature model: classes " + std::to_string(a) + " and " +
                          std::to_string(b) + " share a mean");
      }
    }
  }
}

FeatureModel make_feature_model(std::size_t num_classes, const FeatureModelOptions& opts,
                                Rng& rng) {
  FeatureModel fm;
  fm.class_means = Matrix(num_classes, opts.dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    random_direction(fm.class_means.row(c), opts.class_separation, rng);
  }
  fm.noise_std = opts.noise_std;
  fm.smoothing_window = opts.smoothing_window;
  if (opts.progress_anchors >= 2 && opts.progress_drift > 0.0) {
    fm.progress_anchors = Matrix(opts.progress_anchors, opts.dim);
    for (std::size_t k = 0; k < opts.progress_anchors; ++k) {
      random_direction(fm.progress_anchors.row(k), opts.progress_drift, rng);
    }
  }
  fm.validate();
  return fm;
}

LabeledSequence emit_features(std::span<const ActionSpan> order, const FeatureModel& model,
                              Rng& rng, std::string source_id) {
  if (order.empty()) throw DomainError("emit_features: empty action order");
  std::size_t total = 0;
  for (const ActionSpan& s : order) {
    if (s.frames < 1) throw DomainError("emit_features: action with no frames");
    if (s.action < 0 || static_cast<std::size_t>(s.action) >= model.class_means.rows()) {
      throw DomainError("emit_features: action " + std::to_string(s.action) +
                        " has no class mean");
    }
    total += static_cast<std::size_t>(s.frames);
  }
  const std::size_t dim = model.dim();

  LabeledSequence seq;
  seq.source_id = std::move(source_id);
  seq.labels.reserve(total);
  Matrix raw(total, dim);
  std::size_t t = 0;
  for (const ActionSpan& s : order) {
    for (int f = 0; f < s.frames; ++f, ++t) {
      seq.labels.push_back(s.action);
      auto row = raw.row(t);
      auto mean = model.class_means.row(static_cast<std::size_t>(s.action));
      for (std::size_t d = 0; d < dim; ++d) {
        row[d] = mean[d] + (model.noise_std > 0.0 ? rng.normal(0.0, model.noise_std) : 0.0);
      }
      if (!model.progress_anchors.empty()) {
        const std::size_t k = model.progress_anchors.rows();
        const double pos = total > 1 ? static_cast<double>(t) / static_cast<double>(total - 1) *
                                           static_cast<double>(k - 1)
                                     : 0.0;
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), k - 2);
        const double w = pos - static_cast<double>(lo);
        auto a = model.progress_anchors.row(lo);
        auto b = model.progress_anchors.row(lo + 1);
        for (std::size_t d = 0; d < dim; ++d) row[d] += (1.0 - w) * a[d] + w * b[d];
      }
    }
  }

  // Centred moving average, truncated at the sequence ends.
  const auto half = static_cast<std::ptrdiff_t>(model.smoothing_window / 2);
  const auto n = static_cast<std::ptrdiff_t>(total);
  seq.features = Matrix(total, dim);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi =
        std::min<std::ptrdiff_t>(n - 1, i - half + static_cast<std::ptrdiff_t>(model.smoothing_window) - 1);
    auto out = seq.features.row(static_cast<std::size_t>(i));
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      auto in = raw.row(static_cast<std::size_t>(j));
      for (std::size_t d = 0; d < dim; ++d) out[d] += in[d];
    }
    const double count = static_cast<double>(hi - lo + 1);
    for (double& v : out) v = static_cast<double>(static_cast<float>(v / count));
  }
  return seq;
}

std::vector<LabeledSequence> generate_sequences(const TaskGrammar& grammar,
                                                const SyntheticOptions& opts) {
  grammar.validate();
  Rng model_rng = Rng::derive(opts.seed, 0xfea7u);
  const FeatureModel fm = make_feature_model(grammar.actions.size(), opts.features, model_rng);

  const std::size_t total = opts.train_sequences + opts.test_sequences;
  std::vector<LabeledSequence> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng = Rng::derive(opts.seed, i);
    const std::vector<ActionSpan> order = generate_action_order(grammar, rng);
    char id[32];
    std::snprintf(id, sizeof id, "seq_%04zu", i);
    LabeledSequence seq = emit_features(order, fm, rng, id);
    seq.split = i < opts.train_sequences ? "train" : "test";
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace taskcast
