#include "taskcast/errors.hpp"
#include "taskcast/trainer.hpp"

namespace taskcast {

MetricsReport evaluate(const CombinedModelParams& params, const Dataset& test,
                       const SamplerConfig& cfg, ProgressLossKind progress_kind) {
  if (test.sequences.empty()) throw DomainError("evaluate: empty test split");
  SamplerConfig scfg = cfg;
  scfg.granularities = params.config.granularities;

  std::vector<int> truth, predicted;
  std::vector<std::size_t> progress_hits(params.config.granularities.size(), 0);
  for (const LabeledSequence& seq : test.sequences) {
    for (const ForecastSample& s : evaluation_clips(seq, scfg)) {
      const CombinedOutput out = forward_combined(params, s.clip);
      truth.push_back(s.next_action);
      predicted.push_back(predicted_bin(out.fused_logits).bin);
      for (std::size_t k = 0; k < progress_hits.size(); ++k) {
        const int n = params.config.granularities[k];
        if (predicted_progress(out.progress_logits[k], progress_kind) == s.progress_bins.at(n).bin) {
          ++progress_hits[k];
        }
      }
    }
  }
  if (truth.empty()) throw DomainError("evaluate: no evaluation clip fits the test sequences");

  MetricsReport report = compute_metrics(truth, predicted, params.config.num_classes);
  report.class_names = test.class_names;
  for (std::size_t k = 0; k < progress_hits.size(); ++k) {
    report.progress_accuracy[params.config.granularities[k]] =
        static_cast<double>(progress_hits[k]) / static_cast<double>(truth.size());
  }
  return report;
}

}  // namespace taskcast
