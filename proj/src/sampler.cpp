#include "taskcast/sampler.hpp"

#include <algorithm>
#include <iostream>

#include "taskcast/errors.hpp"

namespace taskcast {
namespace {

void warn(std::vector<std::string>* warnings, std::string msg) {
  if (warnings != nullptr) {
    warnings->push_back(std::move(msg));
  } else {
    std::cerr << "warning: " << msg << '\n';
  }
}

// Index of the first frame of the first and of the last action segment.
std::pair<std::size_t, std::size_t> outer_segments(const std::vector<int>& labels) {
  std::size_t first_end = 0;
  while (first_end < labels.size() && labels[first_end] == labels.front()) ++first_end;
  std::size_t last_begin = labels.size();
  while (last_begin > 0 && labels[last_begin - 1] == labels.back()) --last_begin;
  return {first_end, last_begin};
}

std::size_t max_stride_for(std::size_t end, const SamplerConfig& cfg) {
  if (cfg.clip_len <= 1) return std::max<std::size_t>(1, cfg.max_stride);
  const std::size_t feasible = end / (cfg.clip_len - 1);
  return std::max<std::size_t>(1, std::min(feasible, std::max<std::size_t>(1, cfg.max_stride)));
}

}  // namespace

std::vector<std::size_t> clip_indices(std::size_t start, std::size_t stride,
                                      std::size_t clip_len) {
  std::vector<std::size_t> idx(clip_len);
  for (std::size_t k = 0; k < clip_len; ++k) idx[k] = start + k * stride;
  return idx;
}

std::vector<std::size_t> valid_clip_ends(const LabeledSequence& seq, std::size_t clip_len) {
  if (clip_len == 0) throw DomainError("clip length must be >= 1");
  const auto [first_end, last_begin] = outer_segments(seq.labels);
  std::vector<std::size_t> ends;
  for (std::size_t e = std::max(first_end, clip_len - 1); e < last_begin; ++e) ends.push_back(e);
  return ends;
}

ForecastSample make_sample(const LabeledSequence& seq, std::size_t start, std::size_t stride,
                           const SamplerConfig& cfg) {
  if (cfg.clip_len == 0 || stride == 0) throw DomainError("clip length and stride must be >= 1");
  const std::size_t end = start + (cfg.clip_len - 1) * stride;
  const std::size_t m = seq.labels.size();
  if (end >= m) throw DomainError("clip runs past the end of " + seq.source_id);
  const auto [first_end, last_begin] = outer_segments(seq.labels);
  if (end < first_end || end >= last_begin) {
    throw DomainError("clip in " + seq.source_id + " ends inside the first or last action");
  }

  ForecastSample s;
  s.sequence_id = seq.source_id;
  s.clip_frame_indices = clip_indices(start, stride, cfg.clip_len);
  s.clip = Matrix(cfg.clip_len, seq.features.cols());
  for (std::size_t k = 0; k < cfg.clip_len; ++k) {
    auto src = seq.features.row(s.clip_frame_indices[k]);
    std::copy(src.begin(), src.end(), s.clip.row(k).begin());
  }
  s.next_action = forecast_target(seq.labels, end);
  const std::size_t prefix = cfg.progress_label == ProgressLabelMode::PrefixEnd ? end + 1 : start + 1;
  for (int n : cfg.granularities) s.progress_bins[n] = progress_bin(prefix, m, n);
  return s;
}

std::optional<ForecastSample> sample_clip(const LabeledSequence& seq, const SamplerConfig& cfg,
                                          Rng& rng, std::vector<std::string>* warnings) {
  const std::vector<std::size_t> ends = valid_clip_ends(seq, cfg.clip_len);
  if (ends.empty()) {
    warn(warnings, "sequence " + seq.source_id + " admits no clip of length " +
                       std::to_string(cfg.clip_len) + "; skipped");
    return std::nullopt;
  }
  const std::size_t end = ends[rng.index(ends.size())];
  const std::size_t stride = 1 + rng.index(max_stride_for(end, cfg));
  return make_sample(seq, end - (cfg.clip_len - 1) * stride, stride, cfg);
}

ClipSampler::ClipSampler(const Dataset& data, SamplerConfig cfg,
                         std::vector<std::string>* warnings)
    : data_(&data), cfg_(std::move(cfg)), by_target_(data.num_classes()) {
  for (std::size_t si = 0; si < data.sequences.size(); ++si) {
    const LabeledSequence& seq = data.sequences[si];
    const std::vector<std::size_t> ends = valid_clip_ends(seq, cfg_.clip_len);
    if (ends.empty()) {
      warn(warnings, "sequence " + seq.source_id + " admits no clip; skipped");
      continue;
    }
    // Forecast targets by a backward sweep.
    std::vector<int> target(seq.labels.size(), -1);
    for (std::size_t t = seq.labels.size() - 1; t-- > 0;) {
      target[t] = seq.labels[t + 1] != seq.labels[t] ? seq.labels[t + 1] : target[t + 1];
    }
    for (std::size_t e : ends) {
      all_.push_back({si, e});
      by_target_[static_cast<std::size_t>(target[e])].push_back({si, e});
    }
  }
  if (all_.empty()) throw DomainError("clip sampler: no sequence admits a clip");
  for (std::size_t c = 0; c < by_target_.size(); ++c) {
    if (by_target_[c].empty()) {
      if (cfg_.balance_classes) {
        warn(warnings, "class " + data.class_names[c] +
                           " has no feasible clip; excluded from balancing");
      }
    } else {
      classes_.push_back(static_cast<int>(c));
    }
  }
}

ForecastSample ClipSampler::realise(const Candidate& c, Rng& rng) const {
  const std::size_t stride = 1 + rng.index(max_stride_for(c.end, cfg_));
  return make_sample(data_->sequences[c.sequence], c.end - (cfg_.clip_len - 1) * stride, stride,
                     cfg_);
}

ForecastSample ClipSampler::draw(Rng& rng) const {
  if (cfg_.balance_classes) {
    const int cls = classes_[rng.index(classes_.size())];
    const auto& pool = by_target_[static_cast<std::size_t>(cls)];
    return realise(pool[rng.index(pool.size())], rng);
  }
  return realise(all_[rng.index(all_.size())], rng);
}

std::vector<ForecastSample> ClipSampler::batch(std::size_t size, Rng& rng) const {
  std::vector<ForecastSample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(draw(rng));
  return out;
}

std::vector<ForecastSample> balanced_batch(const Dataset& data, const SamplerConfig& cfg,
                                           std::size_t batch_size, Rng& rng,
                                           std::vector<std::string>* warnings) {
  return ClipSampler(data, cfg, warnings).batch(batch_size, rng);
}

std::vector<ForecastSample> evaluation_clips(const LabeledSequence& seq, const SamplerConfig& cfg) {
  if (cfg.clip_len == 0) throw DomainError("clip length must be >= 1");
  const std::size_t step = cfg.eval_step == 0 ? cfg.clip_len : cfg.eval_step;
  const std::size_t stride = std::max<std::size_t>(1, cfg.eval_stride);
  const std::size_t span = (cfg.clip_len - 1) * stride;
  const auto [first_end, last_begin] = outer_segments(seq.labels);
  std::vector<ForecastSample> out;
  for (std::size_t start = 0; start + span < seq.labels.size(); start += step) {
    const std::size_t end = start + span;
    if (end < first_end || end >= last_begin) continue;
    out.push_back(make_sample(seq, start, stride, cfg));
  }
  return out;
}

}  // namespace taskcast
