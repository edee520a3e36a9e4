#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "taskcast/checkpoint.hpp"
#include "taskcast/errors.hpp"
#include "taskcast/losses.hpp"
#include "taskcast/model.hpp"
#include "taskcast/params.hpp"

using namespace taskcast;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(std::vector<int> granularities = {5, 10, 20}) {
  ModelConfig c;
  c.input_dim = 4;
  c.num_classes = 3;
  c.hidden_size = 3;
  c.feature_size = 100;
  c.granularities = std::move(granularities);
  return c;
}

ForecastSample random_sample(const ModelConfig& c, std::size_t len, Rng& rng) {
  ForecastSample s;
  s.clip = testing::random_matrix(len, c.input_dim, rng);
  s.next_action = static_cast<int>(rng.index(c.num_classes));
  for (int n : c.granularities) {
    s.progress_bins[n] = ProgressBin{static_cast<int>(rng.index(static_cast<std::size_t>(n))), n};
  }
  return s;
}

// Checks every parameter of `params` against `grads` for the given loss.
template <class Params>
double worst_over_tensors(Params& params, const Params& grads, const std::function<double()>& f) {
  const auto ps = tensor_list(params);
  const auto gs = tensor_list(grads);
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    worst = std::max(worst, testing::worst_relative_error(ps[k]->values(), gs[k]->values(), f));
  }
  return worst;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("forecast target") {
    const std::vector<int> labels{0, 0, 1, 1, 2};
    CHECK(forecast_target(labels, 1) == 1);
    CHECK(forecast_target(labels, 3) == 2);
    CHECK(forecast_target(labels, 0) == 1);
    CHECK_THROWS_AS(forecast_target(std::vector<int>{0, 1, 1}, 2), DomainError);
    CHECK_THROWS_AS(forecast_target(labels, 4), DomainError);
    CHECK_THROWS_AS(forecast_target(labels, 9), DomainError);
  }

  TEST_CASE("loss kind names") {
    CHECK(parse_progress_loss("cploss") == ProgressLossKind::CpLoss);
    CHECK(parse_progress_loss("cross-entropy") == ProgressLossKind::CrossEntropy);
    CHECK(parse_progress_loss("l2") == ProgressLossKind::L2);
    CHECK(parse_progress_loss(to_string(ProgressLossKind::CpLoss)) == ProgressLossKind::CpLoss);
    CHECK_THROWS(parse_progress_loss("hinge"));
  }

  TEST_CASE("stream shapes") {
    Rng rng(1);
    StreamParams local = StreamParams::zeros(16, 32, 100, 12);
    local.init_uniform(rng);
    const Matrix clip = testing::random_matrix(10, 16, rng);
    const StreamOutput a = forward_local(local, clip);
    CHECK(a.logits.size() == 12);
    CHECK(a.feature.size() == 100);
    for (double v : a.logits) CHECK(std::isfinite(v));
    CHECK(forward_local(local, clip).logits == a.logits);
    CHECK_THROWS_AS(forward_local(local, testing::random_matrix(10, 15, rng)), ShapeError);

    for (int n : {5, 10, 20}) {
      StreamParams prog = StreamParams::zeros(16, 32, 100, static_cast<std::size_t>(n));
      prog.init_uniform(rng);
      const StreamOutput p = forward_progress(prog, clip, n);
      CHECK(p.logits.size() == static_cast<std::size_t>(n));
      CHECK(p.feature.size() == 100);
      CHECK_THROWS_AS(forward_progress(prog, clip, n + 1), ShapeError);
    }
  }

  TEST_CASE("stream gradients match finite differences") {
    Rng rng(2);
    const Matrix clip = testing::random_matrix(5, 4, rng);
    SUBCASE("local stream, cross entropy") {
      StreamParams s = StreamParams::zeros(4, 3, 7, 3);
      s.init_uniform(rng);
      StreamTrace trace;
      const StreamOutput out = run_stream(s, clip, 0.0, false, nullptr, &trace);
      StreamParams grads = zeros_like(s);
      backward_stream(s, trace, cross_entropy_loss(out.logits, 2).grad, {}, grads);
      CHECK(worst_over_tensors(s, std::as_const(grads), [&] {
              return cross_entropy_loss(forward_local(s, clip).logits, 2).loss;
            }) < 1e-4);
    }
    SUBCASE("progress stream, cumulative probability loss") {
      StreamParams s = StreamParams::zeros(4, 3, 7, 10);
      s.init_uniform(rng);
      StreamTrace trace;
      const StreamOutput out = run_stream(s, clip, 0.0, false, nullptr, &trace);
      StreamParams grads = zeros_like(s);
      const ProgressBin g{6, 10};
      backward_stream(s, trace, cp_loss(out.logits, g).grad, {}, grads);
      CHECK(worst_over_tensors(s, std::as_const(grads), [&] {
              return cp_loss(forward_progress(s, clip, 10).logits, g).loss;
            }) < 1e-4);
    }
  }

  TEST_CASE("combined model layout") {
    ModelConfig c = tiny_config();
    c.input_dim = 64;
    c.num_classes = 12;
    c.hidden_size = 32;
    CHECK(c.granularities == std::vector<int>{5, 10, 20});
    CHECK(c.fusion_input_size() == 400);
    const CombinedModelParams p = CombinedModelParams::create(c, 3);
    CHECK(p.fusion.in_size() == 400);
    CHECK(p.fusion.out_size() == 12);
    REQUIRE(p.progress.size() == 3);
    CHECK(p.progress[2].head_size() == 20);
    CombinedTrace trace;
    Rng rng(3);
    const CombinedOutput out =
        forward_combined(p, testing::random_matrix(10, 64, rng), {}, &trace);
    CHECK(trace.fusion_input.size() == 400);
    CHECK(out.fused_logits.size() == 12);
    CHECK(out.progress_logits[1].size() == 10);
    CHECK_THROWS_AS(forward_combined(p, testing::random_matrix(10, 63, rng)), ShapeError);
  }

  TEST_CASE("ablation ladder widens the fusion head") {
    ModelConfig base = tiny_config();
    std::size_t prev_count = 0;
    std::size_t width = 100;
    for (const std::string& name : ablation_names()) {
      ModelConfig c = base;
      c.granularities = ablation_granularities(name);
      const CombinedModelParams p = CombinedModelParams::create(c, 1);
      CHECK(p.fusion.in_size() == width);
      CHECK(parameter_count(p) > prev_count);
      prev_count = parameter_count(p);
      width += 100;
    }
    CHECK(ablation_names() == std::vector<std::string>{"local", "+5", "+5+10", "+5+10+20"});
    CHECK(ablation_granularities("combined") == std::vector<int>{5, 10, 20});
    CHECK_THROWS(ablation_granularities("+7"));
  }

  TEST_CASE("zeroed progress features leave only the local contribution") {
    const ModelConfig c = tiny_config();
    const CombinedModelParams p = CombinedModelParams::create(c, 4);
    Rng rng(5);
    const Matrix clip = testing::random_matrix(6, 4, rng);
    ForwardOptions opts;
    opts.zero_progress_features = true;
    CombinedTrace trace;
    const CombinedOutput out = forward_combined(p, clip, opts, &trace);
    const StreamOutput local = forward_local(p.action, clip);
    for (std::size_t i = 0; i < 400; ++i) {
      CHECK(trace.fusion_input[i] == (i < 100 ? local.feature[i] : 0.0));
    }
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      double want = p.fusion.bias(k, 0);
      for (std::size_t i = 0; i < 100; ++i) want += p.fusion.weights(k, i) * local.feature[i];
      CHECK(out.fused_logits[k] == doctest::Approx(want).epsilon(1e-13));
    }
    // The auxiliary outputs are untouched by the switch.
    const CombinedOutput full = forward_combined(p, clip);
    CHECK(full.progress_logits == out.progress_logits);
    CHECK(full.action_logits == out.action_logits);
  }

  TEST_CASE("fusion weights do not reach the auxiliary heads") {
    const ModelConfig c = tiny_config();
    CombinedModelParams p = CombinedModelParams::create(c, 6);
    Rng rng(7);
    const Matrix clip = testing::random_matrix(5, 4, rng);
    const CombinedOutput before = forward_combined(p, clip);
    for (double& w : p.fusion.weights.values()) w = rng.normal(0.0, 3.0);
    const CombinedOutput after = forward_combined(p, clip);
    CHECK(before.action_logits == after.action_logits);
    CHECK(before.progress_logits == after.progress_logits);
    CHECK(before.fused_logits != after.fused_logits);
  }

  TEST_CASE("combined loss terms") {
    const ModelConfig c = tiny_config();
    const CombinedModelParams p = CombinedModelParams::create(c, 8);
    Rng rng(9);
    const ForecastSample s = random_sample(c, 5, rng);
    const CombinedOutput out = forward_combined(p, s.clip);

    SUBCASE("fused only is plain cross entropy") {
      LossSpec spec;
      spec.weights = {1.0, 0.0, {0.0, 0.0, 0.0}};
      const LossBreakdown lb = combined_loss(out, c, s, spec);
      const VectorLoss ce = cross_entropy_loss(out.fused_logits, static_cast<std::size_t>(s.next_action));
      CHECK(lb.total == doctest::Approx(ce.loss).epsilon(1e-15));
      CHECK(lb.grads.fused == ce.grad);
      for (double g : lb.grads.action) CHECK(g == 0.0);
    }
    SUBCASE("changing the progress loss changes only progress terms") {
      LossSpec ce, cp;
      cp.progress_kind = ProgressLossKind::CpLoss;
      const LossBreakdown a = combined_loss(out, c, s, ce);
      const LossBreakdown b = combined_loss(out, c, s, cp);
      CHECK(a.fused == b.fused);
      CHECK(a.local == b.local);
      CHECK(a.grads.fused == b.grads.fused);
      CHECK(a.grads.action == b.grads.action);
      CHECK(a.progress != b.progress);
      for (std::size_t k = 0; k < 3; ++k) {
        const int n = c.granularities[k];
        CHECK(b.progress[k] == doctest::Approx(cp_loss(out.progress_logits[k], s.progress_bins.at(n)).loss));
      }
      CHECK(b.total == doctest::Approx(b.fused + b.local + b.progress[0] + b.progress[1] + b.progress[2]));
    }
    SUBCASE("weights scale the total") {
      LossSpec spec;
      spec.progress_kind = ProgressLossKind::L2;
      spec.weights = {0.5, 2.0, {1.0, 0.0, 3.0}};
      const LossBreakdown lb = combined_loss(out, c, s, spec);
      CHECK(lb.total == doctest::Approx(0.5 * lb.fused + 2.0 * lb.local + lb.progress[0] + 3.0 * lb.progress[2]));
      const double target = s.progress_bins.at(5).bin;
      CHECK(lb.progress[0] == doctest::Approx(l2_progress_loss(target, out.progress_logits[0][0]).loss));
    }
    SUBCASE("missing targets are errors") {
      ForecastSample bad = s;
      bad.progress_bins.erase(10);
      CHECK_THROWS_AS(combined_loss(out, c, bad, LossSpec{}), DomainError);
      bad = s;
      bad.next_action = 3;
      CHECK_THROWS(combined_loss(out, c, bad, LossSpec{}));
    }
  }

  TEST_CASE("full model gradient matches finite differences") {
    const ModelConfig c = tiny_config();
    Rng rng(10);
    const ProgressLossKind kinds[] = {ProgressLossKind::CrossEntropy, ProgressLossKind::CpLoss,
                                      ProgressLossKind::L2};
    for (ProgressLossKind kind : kinds) {
      CAPTURE(to_string(kind));
      CombinedModelParams p = CombinedModelParams::create(c, rng.engine()());
      const ForecastSample s = random_sample(c, 5, rng);
      LossSpec spec;
      spec.progress_kind = kind;
      spec.weights = {1.0, 0.7, {1.0, 2.0, 0.5}};
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
      CHECK(worst_over_tensors(p, std::as_const(grads), loss) < 1e-4);
    }
  }

  TEST_CASE("predicted progress") {
    CHECK(predicted_progress(Vector{0.0, 2.0, 1.0}, ProgressLossKind::CpLoss) == 1);
    CHECK(predicted_progress(Vector{0.0, 2.0, 1.0}, ProgressLossKind::CrossEntropy) == 1);
    CHECK(predicted_progress(Vector{1.6, 0.0, 0.0}, ProgressLossKind::L2) == 2);
    CHECK(predicted_progress(Vector{-3.0, 0.0, 0.0}, ProgressLossKind::L2) == 0);
    CHECK(predicted_progress(Vector{17.0, 0.0, 0.0}, ProgressLossKind::L2) == 2);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    const fs::path path = fs::temp_directory_path() / ("taskcast_ckpt_" + std::to_string(std::random_device{}()));
    ModelConfig c = tiny_config({5, 10});
    Checkpoint ck{CombinedModelParams::create(c, 11), Standardizer{{1.0, 2.0, 3.0, 4.0}, {0.5, 0.25, 1.0, 2.0}},
                  {{"seed", 11}}};
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    const auto a = tensor_list(ck.params);
    const auto b = tensor_list(back.params);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      REQUIRE(a[k]->rows() == b[k]->rows());
      REQUIRE(a[k]->cols() == b[k]->cols());
      CHECK(std::memcmp(a[k]->values().data(), b[k]->values().data(), a[k]->size() * sizeof(double)) == 0);
    }
    CHECK(back.params.config.granularities == c.granularities);
    REQUIRE(back.standardizer.has_value());
    CHECK(back.standardizer->scale == ck.standardizer->scale);
    CHECK(back.run_config == ck.run_config);

    SUBCASE("trailing bytes are rejected") {
      std::ofstream(path, std::ios::app | std::ios::binary) << 'x';
      CHECK_THROWS(load_checkpoint(path));
    }
    SUBCASE("bad magic is rejected") {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.write("XXXX", 4);
      f.close();
      CHECK_THROWS(load_checkpoint(path));
    }
    SUBCASE("truncation is rejected") {
      fs::resize_file(path, fs::file_size(path) / 2);
      CHECK_THROWS(load_checkpoint(path));
    }
    fs::remove(path);
  }
}
