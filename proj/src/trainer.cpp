#include "taskcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "taskcast/checkpoint.hpp"
#include "taskcast/errors.hpp"

namespace fs = std::filesystem;

namespace taskcast {
namespace {

std::string progress_label_name(ProgressLabelMode m) {
  return m == ProgressLabelMode::PrefixEnd ? "prefix-end" : "window-start";
}

void split_validation(const Dataset& all, double fraction, Dataset& train, Dataset& val) {
  std::vector<std::string> ids;
  for (const auto& s : all.sequences) ids.push_back(s.source_id);
  std::sort(ids.begin(), ids.end());
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ids.size())));
  const std::set<std::string> val_ids(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end());
  train = Dataset{all.class_names, all.feature_dim, {}};
  val = Dataset{all.class_names, all.feature_dim, {}};
  for (const auto& s : all.sequences) {
    (val_ids.count(s.source_id) ? val : train).sequences.push_back(s);
  }
}

void dump_divergence(const TrainConfig& cfg, std::size_t step,
                     const std::vector<ForecastSample>& batch, const LossBreakdown& loss) {
  nlohmann::json j;
  j["step"] = step;
  j["total"] = loss.total;
  j["fused"] = loss.fused;
  j["local"] = loss.local;
  j["progress"] = loss.progress;
  j["batch"] = nlohmann::json::array();
  for (const auto& s : batch) {
    j["batch"].push_back({{"sequence", s.sequence_id},
                          {"frames", s.clip_frame_indices},
                          {"next_action", s.next_action}});
  }
  if (!cfg.out_dir.empty()) {
    std::ofstream(cfg.out_dir / "divergence.json") << j.dump(2) << '\n';
  }
  std::cerr << "diverged at step " << step << ": " << j.dump() << '\n';
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  return {{"model", model.to_json()},
          {"sampler",
           {{"clip_len", sampler.clip_len},
            {"balance_classes", sampler.balance_classes},
            {"granularities", sampler.granularities},
            {"max_stride", sampler.max_stride},
            {"progress_label", progress_label_name(sampler.progress_label)},
            {"eval_step", sampler.eval_step},
            {"eval_stride", sampler.eval_stride}}},
          {"optimizer",
           {{"learning_rate", optimizer.learning_rate},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"epsilon", optimizer.epsilon}}},
          {"loss",
           {{"progress_loss", to_string(loss.progress_kind)},
            {"w_fused", loss.weights.fused},
            {"w_local", loss.weights.local},
            {"w_progress", loss.weights.progress}}},
          {"epochs", epochs},
          {"batches_per_epoch", batches_per_epoch},
          {"batch_size", batch_size},
          {"clip_norm", clip_norm},
          {"validation_fraction", validation_fraction},
          {"standardize", standardize},
          {"seed", seed}};
}

TrainResult train(const Dataset& train_set, const TrainConfig& cfg, std::ostream* log) {
  if (train_set.sequences.empty()) throw DomainError("train: empty training split");
  if (cfg.batch_size == 0) throw DomainError("train: batch size must be >= 1");

  TrainResult result;
  Dataset data = train_set;
  if (cfg.standardize) {
    result.standardizer = Standardizer::fit(data);
    result.standardizer->apply(data);
  }
  Dataset fit_set, val_set;
  split_validation(data, cfg.validation_fraction, fit_set, val_set);
  for (const auto& s : val_set.sequences) result.validation_ids.push_back(s.source_id);

  ModelConfig mcfg = cfg.model;
  mcfg.input_dim = data.feature_dim;
  mcfg.num_classes = data.num_classes();
  SamplerConfig scfg = cfg.sampler;
  scfg.granularities = mcfg.granularities;

  CombinedModelParams params = CombinedModelParams::create(mcfg, Rng::derive(cfg.seed, 1).engine()());
  CombinedModelParams grads = zeros_like(params);
  const std::vector<Matrix*> param_list = tensor_list(params);
  const std::vector<Matrix*> grad_list = tensor_list(grads);
  const std::vector<const Matrix*> grad_view(grad_list.begin(), grad_list.end());
  AdamState adam = AdamState::for_params(
      std::vector<const Matrix*>(param_list.begin(), param_list.end()), cfg.optimizer);

  const ClipSampler sampler(fit_set, scfg);
  Rng sample_rng = Rng::derive(cfg.seed, 2);
  Rng dropout_rng = Rng::derive(cfg.seed, 3);

  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir / "checkpoints");
  auto checkpoint = [&](const CombinedModelParams& p, const std::string& name) {
    if (cfg.out_dir.empty()) return;
    save_checkpoint(cfg.out_dir / "checkpoints" / name,
                    Checkpoint{p, result.standardizer, cfg.to_json()});
  };

  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  double best_val = -1.0;
  std::size_t step = 0;
  CombinedTrace trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b, ++step) {
      for (Matrix* g : grad_list) g->fill(0.0);
      const std::vector<ForecastSample> batch = sampler.batch(cfg.batch_size, sample_rng);

      double sum_total = 0.0, sum_fused = 0.0, sum_local = 0.0;
      std::vector<double> sum_progress(mcfg.granularities.size(), 0.0);
      for (const ForecastSample& sample : batch) {
        ForwardOptions opts;
        opts.train = true;
        opts.rng = &dropout_rng;
        const CombinedOutput out = forward_combined(params, sample.clip, opts, &trace);
        LossBreakdown loss = combined_loss(out, mcfg, sample, cfg.loss);
        if (!std::isfinite(loss.total)) {
          dump_divergence(cfg, step, batch, loss);
          throw TrainingDiverged("training loss became non-finite at step " + std::to_string(step));
        }
        backward_combined(params, trace, loss.grads, grads);
        sum_total += loss.total;
        sum_fused += loss.fused;
        sum_local += loss.local;
        for (std::size_t k = 0; k < sum_progress.size(); ++k) sum_progress[k] += loss.progress[k];
      }
      for (Matrix* g : grad_list) {
        for (double& v : g->values()) v *= inv_batch;
      }
      clip_global_norm(grad_list, cfg.clip_norm);
      adam_step(param_list, grad_view, adam);

      result.history.push_back({step, "total", sum_total * inv_batch});
      result.history.push_back({step, "fused_ce", sum_fused * inv_batch});
      result.history.push_back({step, "local_ce", sum_local * inv_batch});
      for (std::size_t k = 0; k < sum_progress.size(); ++k) {
        result.history.push_back({step, "progress_" + std::to_string(mcfg.granularities[k]),
                                  sum_progress[k] * inv_batch});
      }
    }

    checkpoint(params, "last.ckpt");
    if (log != nullptr) {
      double mean = 0.0;
      const std::size_t terms = 3 + mcfg.granularities.size();
      const std::size_t n = cfg.batches_per_epoch;
      for (std::size_t i = result.history.size() - n * terms; i < result.history.size(); i += terms) {
        mean += result.history[i].value / static_cast<double>(n);
      }
      *log << "epoch " << epoch + 1 << '/' << cfg.epochs << "  loss " << mean;
    }
    if (!val_set.sequences.empty()) {
      const double acc =
          evaluate(params, val_set, scfg, cfg.loss.progress_kind).forecast_accuracy;
      result.validation_accuracy.push_back(acc);
      if (log != nullptr) *log << "  val acc " << acc;
      if (acc > best_val) {
        best_val = acc;
        result.params = params;
        checkpoint(params, "best.ckpt");
      }
    }
    if (log != nullptr) *log << std::endl;
  }

  result.last = params;
  if (best_val < 0.0) {
    result.params = params;
    checkpoint(params, "best.ckpt");
  }
  if (!cfg.out_dir.empty()) write_loss_history(cfg.out_dir / "loss_history.csv", result.history);
  return result;
}

void write_loss_history(const fs::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,term,value\n";
  out.precision(17);
  for (const LossRecord& r : history) out << r.step << ',' << r.term << ',' << r.value << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace taskcast
