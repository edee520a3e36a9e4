#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskcast/grammar.hpp"
#include "taskcast/rng.hpp"
#include "taskcast/tensor.hpp"

namespace taskcast {

// One full task execution: a feature row and an action label per frame.
struct LabeledSequence {
  Matrix features;          // M x D
  std::vector<int> labels;  // M
  std::string source_id;
  std::string split;  // "train", "test" or empty
};

// Synthetic stand-in for per-frame appearance features.
struct FeatureModel {
  Matrix class_means;  // C x D
  double noise_std = 0.0;
  std::size_t smoothing_window = 1;
  // Scene appearance that drifts with task progress: row k is the offset at
  // progress k / (K - 1), linearly interpolated between rows. May be empty.
  Matrix progress_anchors;

  std::size_t dim() const noexcept { return class_means.cols(); }
  void validate() const;
};

struct FeatureModelOptions {
  std::size_t dim = 64;
  double class_separation = 1.0;  // norm of each class mean
  double noise_std = 1.0;
  std::size_t smoothing_window = 5;
  std::size_t progress_anchors = 12;
  double progress_drift = 0.5;  // norm of each anchor offset
};

FeatureModel make_feature_model(std::size_t num_classes, const FeatureModelOptions& opts,
                                Rng& rng);

// Class mean + gaussian noise + progress drift per frame, then a centred
// moving average over time. Values are rounded to float precision so the
// on-disk format round-trips exactly.
LabeledSequence emit_features(std::span<const ActionSpan> order, const FeatureModel& model,
                              Rng& rng, std::string source_id = {});

struct SyntheticOptions {
  std::size_t train_sequences = 40;
  std::size_t test_sequences = 8;
  std::uint64_t seed = 1;
  FeatureModelOptions features;
};

// Raw sequences (null frames included). Sequence i draws from the stream
// derived from (seed, i), so generation is reproducible and order independent.
std::vector<LabeledSequence> generate_sequences(const TaskGrammar& grammar,
                                                const SyntheticOptions& opts);

}  // namespace taskcast
