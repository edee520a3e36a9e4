// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "support.hpp"
#include "taskcast/ablation.hpp"
#include "taskcast/checkpoint.hpp"
#include "taskcast/features.hpp"
#include "taskcast/grammar.hpp"
#include "taskcast/losses.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/params.hpp"
#include "taskcast/sampler.hpp"
#include "taskcast/trainer.hpp"

using namespace taskcast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Dataset default_dataset() {
  const TaskGrammar g = ikea_default_grammar();
  std::vector<std::string> warnings;
  return strip_null_classes(generate_sequences(g, SyntheticOptions{}), g.actions, {0}, &warnings);
}

// Criteria 5 and 6 share one ablation run.
const AblationTable& ablation() {
  static const AblationTable table = [] {
    const Dataset d = default_dataset();
    TrainConfig cfg;
    cfg.optimizer.learning_rate = 1e-3;
    return run_ablation(d.subset("train"), d.subset("test"), cfg, {1, 2, 3},
                        {ProgressLossKind::CrossEntropy, ProgressLossKind::CpLoss},
                        {"local", "+5+10+20"});
  }();
  return table;
}

Outcome cp_gradient() {
  Rng rng(101);
  const int sizes[] = {5, 10, 20};
  double exact = 0.0, truncated = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = sizes[t % 3];
    Vector logits = testing::random_vector(static_cast<std::size_t>(n), rng, -3, 3);
    const ProgressBin g{static_cast<int>(rng.index(static_cast<std::size_t>(n))), n};
    auto f = [&] { return cp_loss(logits, g).loss; };
    exact = std::max(exact, testing::worst_relative_error(logits, cp_loss(logits, g).grad, f));
    truncated = std::max(truncated,
                         testing::worst_relative_error(logits, cp_loss_truncated_gradient(logits, g), f));
  }
  return {exact < 1e-5 && truncated >= 1e-5,
          "exact " + fmt(exact) + " < 1e-5, truncated " + fmt(truncated) + " >= 1e-5"};
}

Outcome combined_gradient() {
  ModelConfig c;
  c.input_dim = 4;
  c.num_classes = 3;
  c.hidden_size = 3;
  Rng rng(102);
  double worst = 0.0;
  for (ProgressLossKind kind :
       {ProgressLossKind::CrossEntropy, ProgressLossKind::CpLoss, ProgressLossKind::L2}) {
    CombinedModelParams p = CombinedModelParams::create(c, rng.engine()());
    ForecastSample s;
    s.clip = testing::random_matrix(5, c.input_dim, rng);
    s.next_action = static_cast<int>(rng.index(c.num_classes));
    for (int n : c.granularities) {
      s.progress_bins[n] = ProgressBin{static_cast<int>(rng.index(static_cast<std::size_t>(n))), n};
    }
    LossSpec spec;
    spec.progress_kind = kind;
    const std::uint64_t mask_seed = rng.engine()();
    auto loss = [&] {
      Rng masks(mask_seed);
      return combined_loss(forward_combined(p, s.clip, {true, &masks, false}), c, s, spec).total;
    };
    Rng masks(mask_seed);
    CombinedTrace trace;
    const CombinedOutput out = forward_combined(p, s.clip, {true, &masks, false}, &trace);
    CombinedModelParams grads = zeros_like(p);
    backward_combined(p, trace, combined_loss(out, c, s, spec).grads, grads);
    const auto ps = tensor_list(p);
    const auto gs = tensor_list(std::as_const(grads));
    for (std::size_t k = 0; k < ps.size(); ++k) {
      worst = std::max(worst, testing::worst_relative_error(ps[k]->values(), gs[k]->values(), loss));
    }
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " < 1e-4"};
}

Outcome cdf_identity() {
  std::size_t checked = 0, wrong = 0;
  for (int n = 1; n <= 50; ++n) {
    for (int b = 0; b < n; ++b) {
      const Vector p = one_hot({b, n});
      for (int g = 0; g < n; ++g) {
        ++checked;
        if (cdf_distance(p, {g, n}) != static_cast<double>(std::abs(b - g))) ++wrong;
      }
    }
  }
  return {wrong == 0, std::to_string(checked - wrong) + "/" + std::to_string(checked) + " exact"};
}

Outcome l2_bias() {
  const double ratio = l2_progress_loss(1.0, 9.0).loss / l2_progress_loss(1.0, 4.0).loss;
  return {std::abs(ratio - 64.0 / 9.0) < 1e-12, "ratio " + fmt(ratio, 6) + " vs 64/9"};
}

Outcome forecast_gain() {
  const AblationTable& t = ablation();
  const double ce = 100.0 * t.improvement(ProgressLossKind::CrossEntropy);
  const double cp = 100.0 * t.improvement(ProgressLossKind::CpLoss);
  const double local = 100.0 * t.cell("local", ProgressLossKind::CrossEntropy).accuracy;
  return {std::max(ce, cp) >= 3.0, "local " + fmt(local) + "%, gain cross-entropy " + fmt(ce) +
                                       " pp, cploss " + fmt(cp) + " pp (need >= 3)"};
}

Outcome progress_learnability() {
  const AblationTable& t = ablation();
  const double ce = 100.0 * t.cell("+5+10+20", ProgressLossKind::CrossEntropy).progress_accuracy.at(5);
  const double cp = 100.0 * t.cell("+5+10+20", ProgressLossKind::CpLoss).progress_accuracy.at(5);
  return {ce > 60.0, "5-bin accuracy cross-entropy " + fmt(ce) + "% (cploss " + fmt(cp) +
                         "%), need > 60%"};
}

Outcome balanced_sampler() {
  const Dataset d = default_dataset().subset("train");
  std::vector<std::string> warnings;
  const ClipSampler sampler(d, SamplerConfig{}, &warnings);
  const auto& classes = sampler.balanced_classes();
  Rng rng(107);
  std::map<int, std::size_t> counts;
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) ++counts[sampler.draw(rng).next_action];
  const double uniform = 1.0 / static_cast<double>(classes.size());
  double worst = 0.0;
  for (int c : classes) {
    worst = std::max(worst, std::abs(static_cast<double>(counts[c]) / draws - uniform) / uniform);
  }
  const bool covered = counts.size() == classes.size();
  return {covered && worst <= 0.2, std::to_string(classes.size()) + " classes, worst deviation " +
                                       fmt(100.0 * worst) + "% of uniform (limit 20%)"};
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / ("taskcast_accept_" + std::to_string(std::random_device{}()));
  SyntheticOptions opts;
  opts.train_sequences = 6;
  opts.test_sequences = 2;
  opts.seed = 5;
  const TaskGrammar g = ikea_default_grammar();
  const auto seqs = generate_sequences(g, opts);
  save_dataset(seqs, g.actions, {0}, dir / "data");
  const Dataset loaded = load_dataset(read_manifest(dir / "data"));
  std::vector<std::string> warnings;
  const Dataset direct = strip_null_classes(seqs, g.actions, {0}, &warnings);
  bool data_ok = loaded.sequences.size() == direct.sequences.size();
  for (std::size_t i = 0; data_ok && i < loaded.sequences.size(); ++i) {
    const auto& a = loaded.sequences[i].features.values();
    const auto& b = direct.sequences[i].features.values();
    data_ok = a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0 &&
              loaded.sequences[i].labels == direct.sequences[i].labels;
  }

  TrainConfig cfg;
  cfg.model.hidden_size = 8;
  cfg.model.feature_size = 16;
  cfg.epochs = 2;
  cfg.batches_per_epoch = 5;
  cfg.batch_size = 4;
  cfg.seed = 9;
  const Dataset train_set = loaded.subset("train"), test_set = loaded.subset("test");
  const TrainResult a = train(train_set, cfg);
  const TrainResult b = train(train_set, cfg);
  const std::string ma = evaluate(a.params, test_set, cfg.sampler, cfg.loss.progress_kind).to_json().dump();
  const std::string mb = evaluate(b.params, test_set, cfg.sampler, cfg.loss.progress_kind).to_json().dump();
  bool deterministic = ma == mb && a.history.size() == b.history.size();
  for (std::size_t i = 0; deterministic && i < a.history.size(); ++i) {
    deterministic = a.history[i].value == b.history[i].value;
  }

  save_checkpoint(dir / "model.ckpt", Checkpoint{a.params, std::nullopt, cfg.to_json()});
  const Checkpoint back = load_checkpoint(dir / "model.ckpt");
  const auto pa = tensor_list(a.params);
  const auto pb = tensor_list(back.params);
  bool ckpt_ok = pa.size() == pb.size();
  for (std::size_t k = 0; ckpt_ok && k < pa.size(); ++k) {
    ckpt_ok = pa[k]->size() == pb[k]->size() &&
              std::memcmp(pa[k]->values().data(), pb[k]->values().data(), pa[k]->size() * sizeof(double)) == 0;
  }
  ckpt_ok = ckpt_ok &&
            evaluate(back.params, test_set, cfg.sampler, cfg.loss.progress_kind).to_json().dump() == ma;
  fs::remove_all(dir);
  auto yn = [](bool ok) { return ok ? "ok" : "MISMATCH"; };
  return {data_ok && deterministic && ckpt_ok, std::string("rerun ") + yn(deterministic) + ", checkpoint " +
                                                   yn(ckpt_ok) + ", dataset " + yn(data_ok)};
}

Outcome metrics_algebra() {
  bool ok = true;
  const std::vector<int> perfect{0, 1, 2, 2, 1};
  const MetricsReport p = compute_metrics(perfect, perfect, 3);
  ok = ok && p.forecast_accuracy == 1.0 && p.mean_precision == 1.0 && p.mean_recall == 1.0;

  // Constant predictor over four classes, one of them absent.
  const MetricsReport c = compute_metrics(std::vector<int>{0, 0, 1, 2, 2, 2}, std::vector<int>(6, 2), 4);
  ok = ok && c.per_class_recall[2] == 1.0 && c.per_class_recall[0] == 0.0 &&
       std::abs(c.mean_recall - 1.0 / 3.0) < 1e-12 && std::abs(c.per_class_precision[2] - 0.5) < 1e-12 &&
       c.per_class_precision[0] == 0.0 && std::abs(c.mean_precision - 0.5 / 3.0) < 1e-12;

  const MetricsReport m = compute_metrics(std::vector<int>{0, 0, 0, 1, 1, 2, 2, 2, 2},
                                          std::vector<int>{0, 1, 0, 1, 2, 2, 2, 0, 2}, 3);
  ok = ok && m.confusion == std::vector<std::vector<std::size_t>>{{2, 1, 0}, {0, 1, 1}, {1, 0, 3}} &&
       std::abs(m.forecast_accuracy - 6.0 / 9.0) < 1e-12 &&
       std::abs(m.mean_precision - (2.0 / 3.0 + 0.5 + 0.75) / 3.0) < 1e-12 &&
       std::abs(m.mean_recall - (2.0 / 3.0 + 0.5 + 0.75) / 3.0) < 1e-12;

  Rng rng(109);
  for (int trial = 0; ok && trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(8), n = 1 + rng.index(200);
    std::vector<int> t(n), pr(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(k));
      pr[i] = static_cast<int>(rng.index(k));
    }
    const MetricsReport r = compute_metrics(t, pr, k);
    std::size_t trace = 0, sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
      trace += r.confusion[i][i];
      for (std::size_t j = 0; j < k; ++j) sum += r.confusion[i][j];
    }
    ok = sum == n && std::abs(r.forecast_accuracy - static_cast<double>(trace) / n) < 1e-12;
  }
  return {ok, "perfect, constant, hand-computed and 100 random fixtures"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"cp_loss gradient vs finite differences", cp_gradient},
      {"combined model gradient vs finite differences", combined_gradient},
      {"cdf distance of point masses", cdf_identity},
      {"squared euclidean progress bias", l2_bias},
      {"progress streams improve forecasting", forecast_gain},
      {"progress learnability", progress_learnability},
      {"balanced sampler", balanced_sampler},
      {"determinism and round trips", reproducibility},
      {"metrics algebra", metrics_algebra},
  };
  int failures = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << name << ": " << o.detail << " ("
              << fmt(secs, 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
