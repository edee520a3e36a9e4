#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "support.hpp"
#include "taskcast/errors.hpp"
#include "taskcast/features.hpp"
#include "taskcast/grammar.hpp"
#include "taskcast/metrics.hpp"
#include "taskcast/sampler.hpp"
#include "taskcast/trainer.hpp"

using namespace taskcast;
namespace fs = std::filesystem;

namespace {

Dataset synthetic(std::size_t train, std::size_t test, std::uint64_t seed) {
  SyntheticOptions opts;
  opts.train_sequences = train;
  opts.test_sequences = test;
  opts.seed = seed;
  const TaskGrammar g = ikea_default_grammar();
  std::vector<std::string> warnings;
  return strip_null_classes(generate_sequences(g, opts), g.actions, {0}, &warnings);
}

LabeledSequence labelled(const std::string& id, std::vector<int> labels, std::size_t dim) {
  LabeledSequence s;
  s.source_id = id;
  s.split = "train";
  s.labels = std::move(labels);
  s.features = Matrix(s.labels.size(), dim);
  for (std::size_t t = 0; t < s.labels.size(); ++t) {
    s.features(t, static_cast<std::size_t>(s.labels[t]) % dim) = 1.0;
    s.features(t, dim - 1) = static_cast<double>(t) / static_cast<double>(s.labels.size());
  }
  return s;
}

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.model.hidden_size = 8;
  cfg.model.feature_size = 16;
  cfg.epochs = 2;
  cfg.batches_per_epoch = 5;
  cfg.batch_size = 4;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("train-eval") {
  TEST_CASE("clip indices") {
    const auto idx = clip_indices(0, 1, 10);
    std::vector<std::size_t> want(10);
    std::iota(want.begin(), want.end(), 0);
    CHECK(idx == want);
    CHECK(clip_indices(3, 4, 3) == std::vector<std::size_t>{3, 7, 11});
  }

  TEST_CASE("sampled clips are ordered, equi-spaced and well targeted") {
    const Dataset d = synthetic(3, 0, 5);
    SamplerConfig cfg;
    Rng rng(1);
    for (int draw = 0; draw < 10000; ++draw) {
      const LabeledSequence& seq = d.sequences[static_cast<std::size_t>(draw) % d.sequences.size()];
      const auto sample = sample_clip(seq, cfg, rng);
      REQUIRE(sample.has_value());
      const auto& ix = sample->clip_frame_indices;
      REQUIRE(ix.size() == cfg.clip_len);
      const std::size_t stride = ix[1] - ix[0];
      REQUIRE(stride >= 1);
      REQUIRE(stride <= cfg.max_stride);
      for (std::size_t i = 1; i < ix.size(); ++i) REQUIRE(ix[i] - ix[i - 1] == stride);
      const int last = seq.labels[ix.back()];
      REQUIRE(sample->next_action != last);
      // The end frame lies in neither the first nor the last action segment.
      std::size_t first_end = 0, last_start = seq.labels.size() - 1;
      while (seq.labels[first_end + 1] == seq.labels.front()) ++first_end;
      while (seq.labels[last_start - 1] == seq.labels.back()) --last_start;
      REQUIRE(ix.back() > first_end);
      REQUIRE(ix.back() < last_start);
      REQUIRE(sample->next_action == forecast_target(seq.labels, ix.back()));
      for (std::size_t i = 0; i < ix.size(); ++i) {
        REQUIRE(sample->clip(i, 0) == seq.features(ix[i], 0));
      }
      const auto& bin5 = sample->progress_bins.at(5);
      REQUIRE(bin5 == progress_bin(ix.back() + 1, seq.labels.size(), 5));
    }
  }

  TEST_CASE("window-start progress labels") {
    const LabeledSequence s = labelled("w", {0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3}, 5);
    SamplerConfig cfg;
    cfg.clip_len = 3;
    cfg.progress_label = ProgressLabelMode::WindowStart;
    const ForecastSample a = make_sample(s, 2, 3, cfg);
    CHECK(a.clip_frame_indices == std::vector<std::size_t>{2, 5, 8});
    CHECK(a.progress_bins.at(10) == progress_bin(3, 20, 10));
    cfg.progress_label = ProgressLabelMode::PrefixEnd;
    CHECK(make_sample(s, 2, 3, cfg).progress_bins.at(10) == progress_bin(9, 20, 10));
    CHECK_THROWS_AS(make_sample(s, 0, 1, cfg), DomainError);   // ends in the first action
    CHECK_THROWS_AS(make_sample(s, 14, 2, cfg), DomainError);  // ends in the last action
  }

  TEST_CASE("sequences without a feasible clip are skipped with a warning") {
    const LabeledSequence s = labelled("short", {0, 0, 1, 2, 2}, 3);
    SamplerConfig cfg;
    Rng rng(2);
    std::vector<std::string> warnings;
    CHECK_FALSE(sample_clip(s, cfg, rng, &warnings).has_value());
    CHECK(warnings.size() == 1);
  }

  TEST_CASE("balanced sampling is near uniform over forecast targets") {
    const Dataset d = synthetic(40, 0, 1);
    SamplerConfig cfg;
    std::vector<std::string> warnings;
    const ClipSampler sampler(d, cfg, &warnings);
    const auto& classes = sampler.balanced_classes();
    REQUIRE(classes.size() >= 8);
    Rng rng(3);
    std::map<int, std::size_t> counts;
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws; ++i) ++counts[sampler.draw(rng).next_action];
    const double uniform = 1.0 / static_cast<double>(classes.size());
    for (int c : classes) {
      const double f = static_cast<double>(counts[c]) / draws;
      CAPTURE(c);
      CHECK(std::abs(f - uniform) <= 0.2 * uniform);
    }
    CHECK(counts.size() == classes.size());
  }

  TEST_CASE("unbalanced sampling follows natural target frequency") {
    const Dataset d = synthetic(40, 0, 1);
    SamplerConfig cfg;
    cfg.balance_classes = false;
    // Natural frequency: share of feasible clip ends preceding each target.
    std::map<int, double> natural;
    std::size_t total = 0;
    for (const auto& s : d.sequences) {
      for (std::size_t e : valid_clip_ends(s, cfg.clip_len)) {
        natural[forecast_target(s.labels, e)] += 1.0;
        ++total;
      }
    }
    const ClipSampler sampler(d, cfg);
    CHECK(sampler.candidate_count() == total);
    Rng rng(4);
    std::map<int, double> seen;
    const std::size_t draws = 20000;
    for (std::size_t i = 0; i < draws; ++i) seen[sampler.draw(rng).next_action] += 1.0;
    double max_share = 0.0, min_share = 1.0;
    for (auto& [c, n] : natural) {
      n /= static_cast<double>(total);
      CHECK(std::abs(seen[c] / draws - n) < 0.02);
      max_share = std::max(max_share, n);
      min_share = std::min(min_share, n);
    }
    CHECK(max_share > 3.0 * min_share);
  }

  TEST_CASE("single feasible class") {
    Dataset d;
    d.class_names = {"a", "b", "c"};
    d.feature_dim = 3;
    d.sequences.push_back(labelled("only", {0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2}, 3));
    SamplerConfig cfg;
    cfg.clip_len = 4;
    std::vector<std::string> warnings;
    Rng rng(5);
    const auto batch = balanced_batch(d, cfg, 200, rng, &warnings);
    for (const auto& s : batch) CHECK(s.next_action == 2);
    CHECK(warnings.size() == 2);
  }

  TEST_CASE("evaluation clips cover the sequence deterministically") {
    const Dataset d = synthetic(1, 0, 6);
    SamplerConfig cfg;
    const auto a = evaluation_clips(d.sequences[0], cfg);
    const auto b = evaluation_clips(d.sequences[0], cfg);
    REQUIRE(a.size() > 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].clip_frame_indices == b[i].clip_frame_indices);
      CHECK(a[i].clip_frame_indices[1] - a[i].clip_frame_indices[0] == cfg.eval_stride);
      if (i > 0) {
        CHECK(a[i].clip_frame_indices[0] > a[i - 1].clip_frame_indices[0]);
      }
    }
  }

  TEST_CASE("metrics fixtures") {
    SUBCASE("perfect predictor") {
      const std::vector<int> t{0, 1, 2, 2, 1};
      const MetricsReport r = compute_metrics(t, t, 3);
      CHECK(r.forecast_accuracy == 1.0);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(r.confusion[i][j] == (i == j ? r.support[i] : 0));
      }
      CHECK(r.mean_precision == 1.0);
      CHECK(r.mean_recall == 1.0);
    }
    SUBCASE("constant predictor") {
      // Four classes, class 3 absent from the truth.
      const std::vector<int> t{0, 0, 1, 2, 2, 2};
      const std::vector<int> p(6, 2);
      const MetricsReport r = compute_metrics(t, p, 4);
      CHECK(r.per_class_recall[2] == 1.0);
      CHECK(r.per_class_recall[0] == 0.0);
      CHECK(r.per_class_recall[1] == 0.0);
      CHECK(r.mean_recall == doctest::Approx(1.0 / 3.0));
      CHECK(r.per_class_precision[2] == doctest::Approx(0.5));
      CHECK(r.per_class_precision[0] == 0.0);
      CHECK(r.mean_precision == doctest::Approx(0.5 / 3.0));
      CHECK(r.forecast_accuracy == doctest::Approx(0.5));
    }
    SUBCASE("hand computed mixed case") {
      const std::vector<int> t{0, 0, 0, 1, 1, 2, 2, 2, 2};
      const std::vector<int> p{0, 1, 0, 1, 2, 2, 2, 0, 2};
      const MetricsReport r = compute_metrics(t, p, 3);
      CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{2, 1, 0}, {0, 1, 1}, {1, 0, 3}});
      CHECK(r.total == 9);
      CHECK(r.forecast_accuracy == doctest::Approx(6.0 / 9.0));
      CHECK(r.per_class_precision[0] == doctest::Approx(2.0 / 3.0));
      CHECK(r.per_class_precision[1] == doctest::Approx(1.0 / 2.0));
      CHECK(r.per_class_precision[2] == doctest::Approx(3.0 / 4.0));
      CHECK(r.per_class_recall[0] == doctest::Approx(2.0 / 3.0));
      CHECK(r.per_class_recall[1] == doctest::Approx(1.0 / 2.0));
      CHECK(r.per_class_recall[2] == doctest::Approx(3.0 / 4.0));
      CHECK(r.mean_precision == doctest::Approx((2.0 / 3.0 + 0.5 + 0.75) / 3.0));
      CHECK(r.support == std::vector<std::size_t>{3, 2, 4});
    }
    SUBCASE("algebra on random predictions") {
      Rng rng(7);
      for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.index(8), n = 1 + rng.index(200);
        std::vector<int> t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
          t[i] = static_cast<int>(rng.index(c));
          p[i] = static_cast<int>(rng.index(c));
        }
        const MetricsReport r = compute_metrics(t, p, c);
        std::size_t trace = 0;
        for (std::size_t i = 0; i < c; ++i) {
          const std::size_t row = std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), std::size_t{0});
          CHECK(row == static_cast<std::size_t>(std::count(t.begin(), t.end(), static_cast<int>(i))));
          CHECK(row == r.support[i]);
          trace += r.confusion[i][i];
        }
        CHECK(r.forecast_accuracy == doctest::Approx(static_cast<double>(trace) / n));
        CHECK(r.forecast_accuracy >= 0.0);
        CHECK(r.forecast_accuracy <= 1.0);
      }
    }
    SUBCASE("json round trip and errors") {
      MetricsReport r = compute_metrics(std::vector<int>{0, 1}, std::vector<int>{1, 1}, 2);
      r.class_names = {"a", "b"};
      r.progress_accuracy[5] = 0.25;
      const MetricsReport back = MetricsReport::from_json(r.to_json());
      CHECK(back.to_json() == r.to_json());
      CHECK_THROWS(compute_metrics(std::vector<int>{0}, std::vector<int>{0, 1}, 2));
      CHECK_THROWS(compute_metrics(std::vector<int>{0}, std::vector<int>{2}, 2));
    }
  }

  TEST_CASE("training loss halves on a two-sequence toy set within 200 steps") {
    Dataset d;
    d.class_names = {"a", "b", "c", "d"};
    d.feature_dim = 5;
    std::vector<int> l1, l2;
    for (int c : {0, 1, 2, 3}) l1.insert(l1.end(), 12, c);
    for (int c : {0, 2, 1, 3}) l2.insert(l2.end(), 12, c);
    d.sequences.push_back(labelled("toy_a", l1, 5));
    d.sequences.push_back(labelled("toy_b", l2, 5));
    TrainConfig cfg;
    cfg.model.granularities = {5};
    cfg.sampler.clip_len = 4;
    cfg.sampler.max_stride = 2;
    cfg.optimizer.learning_rate = 1e-2;
    cfg.epochs = 1;
    cfg.batches_per_epoch = 200;
    cfg.batch_size = 8;
    cfg.validation_fraction = 0.0;
    cfg.seed = 1;
    const TrainResult r = train(d, cfg);
    std::vector<double> total;
    for (const auto& rec : r.history) {
      if (rec.term == "total") total.push_back(rec.value);
    }
    REQUIRE(total.size() == 200);
    auto mean = [](auto b, auto e) { return std::accumulate(b, e, 0.0) / static_cast<double>(e - b); };
    const double head = mean(total.begin(), total.begin() + 10);
    const double tail = mean(total.end() - 10, total.end());
    CAPTURE(head);
    CAPTURE(tail);
    CHECK(tail <= 0.5 * head);
  }

  TEST_CASE("training is deterministic and writes its artifacts") {
    const Dataset d = synthetic(6, 2, 8);
    const Dataset train_set = d.subset("train"), test_set = d.subset("test");
    const fs::path out = fs::temp_directory_path() / ("taskcast_train_" + std::to_string(std::random_device{}()));
    TrainConfig cfg = small_train_config();
    cfg.out_dir = out;
    const TrainResult a = train(train_set, cfg);
    cfg.out_dir.clear();
    const TrainResult b = train(train_set, cfg);
    const MetricsReport ma = evaluate(a.params, test_set, cfg.sampler, cfg.loss.progress_kind);
    const MetricsReport mb = evaluate(b.params, test_set, cfg.sampler, cfg.loss.progress_kind);
    CHECK(ma.to_json().dump() == mb.to_json().dump());
    CHECK(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].value == b.history[i].value);
      CHECK(std::isfinite(a.history[i].value));
    }
    CHECK(fs::exists(out / "checkpoints" / "last.ckpt"));
    CHECK(fs::exists(out / "checkpoints" / "best.ckpt"));
    std::ifstream csv(out / "loss_history.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "step,term,value");
    std::set<std::string> terms;
    for (const auto& rec : a.history) terms.insert(rec.term);
    CHECK(terms == std::set<std::string>{"total", "fused_ce", "local_ce", "progress_5", "progress_10", "progress_20"});
    CHECK(a.validation_ids.size() == 0);
    fs::remove_all(out);

    // A different seed gives a different model.
    cfg.seed = 4;
    CHECK(train(train_set, cfg).history[0].value != a.history[0].value);
  }

  TEST_CASE("validation split takes the last tenth by id") {
    const Dataset d = synthetic(20, 0, 9);
    TrainConfig cfg = small_train_config();
    cfg.epochs = 1;
    cfg.batches_per_epoch = 1;
    const TrainResult r = train(d, cfg);
    CHECK(r.validation_ids == std::vector<std::string>{"seq_0018", "seq_0019"});
    CHECK(r.validation_accuracy.size() == 1);
  }

  TEST_CASE("every ablation configuration trains") {
    const Dataset d = synthetic(4, 1, 10);
    for (const std::string& name : ablation_names()) {
      for (ProgressLossKind kind : {ProgressLossKind::CrossEntropy, ProgressLossKind::CpLoss, ProgressLossKind::L2}) {
        TrainConfig cfg = small_train_config();
        cfg.epochs = 1;
        cfg.model.granularities = ablation_granularities(name);
        cfg.loss.progress_kind = kind;
        const TrainResult r = train(d.subset("train"), cfg);
        const MetricsReport m = evaluate(r.params, d.subset("test"), cfg.sampler, kind);
        CHECK(m.total > 0);
        CHECK(m.progress_accuracy.size() == cfg.model.granularities.size());
      }
    }
  }

  TEST_CASE("non-finite loss aborts with a dump") {
    Dataset d = synthetic(3, 0, 11);
    d.sequences[0].features(30, 0) = std::numeric_limits<double>::quiet_NaN();
    for (auto& s : d.sequences) {
      for (double& v : s.features.values()) v = std::numeric_limits<double>::quiet_NaN();
    }
    const fs::path out = fs::temp_directory_path() / ("taskcast_nan_" + std::to_string(std::random_device{}()));
    TrainConfig cfg = small_train_config();
    cfg.out_dir = out;
    CHECK_THROWS_AS(train(d, cfg), TrainingDiverged);
    CHECK(fs::exists(out / "divergence.json"));
    fs::remove_all(out);
  }

  TEST_CASE("evaluation is order independent and rejects empty splits") {
    const Dataset d = synthetic(2, 3, 12);
    TrainConfig cfg = small_train_config();
    cfg.epochs = 1;
    const TrainResult r = train(d.subset("train"), cfg);
    Dataset test = d.subset("test");
    const MetricsReport a = evaluate(r.params, test, cfg.sampler, ProgressLossKind::CrossEntropy);
    std::reverse(test.sequences.begin(), test.sequences.end());
    const MetricsReport b = evaluate(r.params, test, cfg.sampler, ProgressLossKind::CrossEntropy);
    CHECK(a.to_json() == b.to_json());
    test.sequences.clear();
    CHECK_THROWS_AS(evaluate(r.params, test, cfg.sampler, ProgressLossKind::CrossEntropy), DomainError);
  }
}
