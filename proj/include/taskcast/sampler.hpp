#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskcast/dataset_io.hpp"
#include "taskcast/model.hpp"
#include "taskcast/rng.hpp"

namespace taskcast {

// Which frame decides a clip's progress bin.
enum class ProgressLabelMode {
  PrefixEnd,    // prefix length = last clip frame + 1
  WindowStart,  // prefix length = first clip frame + 1
};

struct SamplerConfig {
  std::size_t clip_len = 10;
  bool balance_classes = true;
  std::vector<int> granularities{5, 10, 20};
  // Training strides are uniform over 1..min(max_stride, feasible).
  std::size_t max_stride = 4;
  ProgressLabelMode progress_label = ProgressLabelMode::PrefixEnd;
  // Deterministic evaluation clips: window start advances by eval_step
  // (0 means clip_len); frames inside a clip are eval_stride apart.
  std::size_t eval_step = 0;
  std::size_t eval_stride = 2;
};

// i, i+s, ..., i+(l-1)s
std::vector<std::size_t> clip_indices(std::size_t start, std::size_t stride, std::size_t clip_len);

// Clip ending at frame `end`: features, forecast target and progress bins.
// Throws DomainError when the end frame lies in the first or the last action
// of the sequence or the clip does not fit.
ForecastSample make_sample(const LabeledSequence& seq, std::size_t start, std::size_t stride,
                           const SamplerConfig& cfg);

// Frames that can end a clip: room for l frames at stride 1, not inside the
// first or last action segment.
std::vector<std::size_t> valid_clip_ends(const LabeledSequence& seq, std::size_t clip_len);

// Random end, random feasible stride. nullopt (with a warning) when the
// sequence admits no clip.
std::optional<ForecastSample> sample_clip(const LabeledSequence& seq, const SamplerConfig& cfg,
                                          Rng& rng, std::vector<std::string>* warnings = nullptr);

// Index of every feasible clip end in a dataset, grouped by forecast target,
// for repeated batch drawing.
class ClipSampler {
 public:
  ClipSampler(const Dataset& data, SamplerConfig cfg,
              std::vector<std::string>* warnings = nullptr);

  ForecastSample draw(Rng& rng) const;
  std::vector<ForecastSample> batch(std::size_t size, Rng& rng) const;

  // Classes that take part in balancing (those with at least one clip).
  const std::vector<int>& balanced_classes() const noexcept { return classes_; }
  std::size_t candidate_count() const noexcept { return all_.size(); }

 private:
  struct Candidate {
    std::size_t sequence;
    std::size_t end;
  };
  ForecastSample realise(const Candidate& c, Rng& rng) const;

  const Dataset* data_;
  SamplerConfig cfg_;
  std::vector<Candidate> all_;
  std::vector<std::vector<Candidate>> by_target_;
  std::vector<int> classes_;
};

// Two-stage draw when cfg.balance_classes: uniform target class, then a
// uniform clip with that target. Otherwise uniform over all feasible clips.
std::vector<ForecastSample> balanced_batch(const Dataset& data, const SamplerConfig& cfg,
                                           std::size_t batch_size, Rng& rng,
                                           std::vector<std::string>* warnings = nullptr);

// Evaluation windows striding deterministically across the sequence.
std::vector<ForecastSample> evaluation_clips(const LabeledSequence& seq, const SamplerConfig& cfg);

}  // namespace taskcast
