#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taskcast/ablation.hpp"
#include "taskcast/checkpoint.hpp"
#include "taskcast/dataset_io.hpp"
#include "taskcast/errors.hpp"
#include "taskcast/features.hpp"
#include "taskcast/gradcheck.hpp"
#include "taskcast/grammar.hpp"
#include "taskcast/kernels/kernels.hpp"
#include "taskcast/trainer.hpp"
#include "taskcast/version.hpp"

namespace fs = std::filesystem;
using namespace taskcast;

namespace {

constexpr const char* kOutRootEnv = "TASKCAST_OUT_ROOT";

fs::path default_out(const std::string& leaf) {
  const char* root = std::getenv(kOutRootEnv);
  return (root != nullptr && *root != '\0') ? fs::path(root) / leaf : fs::path(leaf);
}

// Every output directory gets the fully resolved options of the command
// that produced it, in the same format --config accepts.
void echo_config(const CLI::App& cmd, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.toml");
  out << "# taskcast " << kVersion << '\n'
      << "# kernels " << kernels::active().name << '\n'
      << "[" << cmd.get_name() << "]\n"
      << cmd.config_to_str(true, false);
  if (!out) throw IoError("cannot write " + (dir / "config.toml").string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

Dataset load_all(const fs::path& dir) {
  std::vector<std::string> warnings;
  Dataset all = load_dataset(read_manifest(dir), &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
  return all;
}

Dataset require_split(const Dataset& all, const std::string& split) {
  Dataset out = all.subset(split);
  if (out.sequences.empty()) throw DomainError("dataset has no '" + split + "' sequences");
  return out;
}

struct GenDataArgs {
  std::string grammar = "ikea-default";
  std::size_t sequences = 40;
  std::size_t test_sequences = 0;
  bool test_set = false;
  std::uint64_t seed = 1;
  FeatureModelOptions features;
  std::vector<int> null_class_ids{0};
  fs::path out;
};

int run_gen_data(const CLI::App& cmd, GenDataArgs a) {
  if (a.out.empty()) a.out = default_out("data");
  const TaskGrammar grammar = resolve_grammar(a.grammar);
  SyntheticOptions opts;
  opts.train_sequences = a.sequences;
  opts.test_sequences = a.test_set ? a.test_sequences : a.sequences / 5;
  opts.seed = a.seed;
  opts.features = a.features;
  const std::vector<LabeledSequence> seqs = generate_sequences(grammar, opts);
  echo_config(cmd, a.out);
  const DatasetManifest m = save_dataset(seqs, grammar.actions, a.null_class_ids, a.out);
  write_json(a.out / "grammar.json", grammar_to_json(grammar));
  std::cout << "wrote " << m.entries.size() << " sequences (" << opts.train_sequences
            << " train, " << opts.test_sequences << " test) to " << a.out.string() << '\n';
  return 0;
}

struct TrainArgs {
  TrainConfig cfg;
  std::string model = "combined";
  std::string progress_loss = "cross-entropy";
  std::string progress_label = "prefix-end";
  fs::path data;
  fs::path out;
};

void add_training_options(CLI::App* cmd, TrainArgs& a) {
  TrainConfig& c = a.cfg;
  cmd->add_option("--data", a.data, "Dataset directory (manifest.json)")->required();
  cmd->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batches", c.batches_per_epoch, "Batches per epoch")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "Clips per batch")->capture_default_str();
  cmd->add_option("--lr", c.optimizer.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--clip-norm", c.clip_norm, "Global gradient norm limit (<= 0 disables)")
      ->capture_default_str();
  cmd->add_option("--hidden", c.model.hidden_size, "LSTM hidden units")->capture_default_str();
  cmd->add_option("--feature-size", c.model.feature_size, "Stream feature length")
      ->capture_default_str();
  cmd->add_option("--dropout", c.model.dropout, "Dropout between LSTM layers")
      ->capture_default_str();
  cmd->add_option("--clip-len", c.sampler.clip_len, "Frames per clip")->capture_default_str();
  cmd->add_option("--max-stride", c.sampler.max_stride, "Largest training stride")
      ->capture_default_str();
  cmd->add_option("--eval-step", c.sampler.eval_step, "Evaluation window step (0 = clip length)")
      ->capture_default_str();
  cmd->add_option("--eval-stride", c.sampler.eval_stride, "Frame stride of evaluation clips")
      ->capture_default_str();
  cmd->add_flag("!--no-balance", c.sampler.balance_classes, "Sample clips without balancing");
  cmd->add_option("--progress-label", a.progress_label, "prefix-end or window-start")
      ->check(CLI::IsMember({"prefix-end", "window-start"}))
      ->capture_default_str();
  cmd->add_option("--w-fused", c.loss.weights.fused, "Fused head loss weight")
      ->capture_default_str();
  cmd->add_option("--w-local", c.loss.weights.local, "Local head loss weight")
      ->capture_default_str();
  cmd->add_option("--w-progress", c.loss.weights.progress, "Per-granularity loss weights");
  cmd->add_option("--validation-fraction", c.validation_fraction,
                  "Share of training sequences held out for checkpoint selection")
      ->capture_default_str();
  cmd->add_flag("--standardize", c.standardize, "Standardize features with train statistics");
}

void finish_training_config(TrainArgs& a) {
  a.cfg.sampler.progress_label = a.progress_label == "window-start"
                                     ? ProgressLabelMode::WindowStart
                                     : ProgressLabelMode::PrefixEnd;
}

int run_train(const CLI::App& cmd, TrainArgs a) {
  if (a.out.empty()) a.out = default_out("run");
  finish_training_config(a);
  a.cfg.model.granularities = ablation_granularities(a.model);
  a.cfg.loss.progress_kind = parse_progress_loss(a.progress_loss);
  a.cfg.out_dir = a.out;

  const Dataset all = load_all(a.data);
  const Dataset train_set = require_split(all, "train");
  const Dataset test_set = all.subset("test");
  require_disjoint(train_set, test_set);

  echo_config(cmd, a.out);
  write_json(a.out / "train_config.json",
             {{"version", kVersion}, {"data", a.data.string()}, {"train", a.cfg.to_json()}});
  const TrainResult r = train(train_set, a.cfg, &std::cerr);
  if (!test_set.sequences.empty()) {
    Dataset test = test_set;
    if (r.standardizer) r.standardizer->apply(test);
    const MetricsReport m = evaluate(r.params, test, a.cfg.sampler, a.cfg.loss.progress_kind);
    write_json(a.out / "metrics.json", m.to_json());
    m.print_table(std::cout);
  }
  std::cout << "checkpoints in " << (a.out / "checkpoints").string() << '\n';
  return 0;
}

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::size_t eval_step = 0;
  std::size_t eval_stride = 0;
  fs::path out;
};

int run_eval(const CLI::App& cmd, EvalArgs a) {
  if (a.out.empty()) a.out = default_out("eval");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  Dataset test = require_split(load_all(a.data), a.split);
  if (test.feature_dim != ck.params.config.input_dim ||
      test.num_classes() != ck.params.config.num_classes) {
    throw ShapeError("dataset does not match the checkpoint's input size or class count");
  }
  if (ck.standardizer) ck.standardizer->apply(test);

  SamplerConfig scfg;
  ProgressLossKind kind = ProgressLossKind::CrossEntropy;
  if (ck.run_config.contains("sampler")) {
    const nlohmann::json& s = ck.run_config["sampler"];
    scfg.clip_len = s.at("clip_len").get<std::size_t>();
    scfg.eval_step = s.at("eval_step").get<std::size_t>();
    scfg.eval_stride = s.at("eval_stride").get<std::size_t>();
    scfg.progress_label = s.at("progress_label").get<std::string>() == "window-start"
                              ? ProgressLabelMode::WindowStart
                              : ProgressLabelMode::PrefixEnd;
  }
  if (ck.run_config.contains("loss")) {
    kind = parse_progress_loss(ck.run_config["loss"].at("progress_loss").get<std::string>());
  }
  if (a.eval_step > 0) scfg.eval_step = a.eval_step;
  if (a.eval_stride > 0) scfg.eval_stride = a.eval_stride;
  scfg.granularities = ck.params.config.granularities;

  const MetricsReport m = evaluate(ck.params, test, scfg, kind);
  echo_config(cmd, a.out);
  write_json(a.out / "metrics.json", m.to_json());
  m.print_table(std::cout);
  return 0;
}

struct GradCheckArgs {
  std::vector<std::string> components{"all"};
  std::size_t trials = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 1;
};

int run_grad_check(GradCheckArgs a) {
  std::vector<GradCheckComponent> todo;
  for (const std::string& name : a.components) {
    if (name == "all") {
      const auto& every = all_grad_check_components();
      todo.insert(todo.end(), every.begin(), every.end());
    } else if (name == "losses") {
      todo.insert(todo.end(), {GradCheckComponent::CpLoss, GradCheckComponent::CpLossTruncated,
                               GradCheckComponent::CrossEntropy});
    } else {
      todo.push_back(parse_grad_check_component(name));
    }
  }
  bool ok = true;
  std::cout << std::left << std::setw(18) << "component" << std::setw(8) << "trials"
            << std::setw(10) << "entries" << std::setw(14) << "max rel err" << std::setw(11)
            << "tolerance" << "result\n";
  for (GradCheckComponent c : todo) {
    const bool loss_level = c == GradCheckComponent::CpLoss ||
                            c == GradCheckComponent::CpLossTruncated ||
                            c == GradCheckComponent::CrossEntropy;
    const std::size_t trials = a.trials > 0 ? a.trials : (loss_level ? 100 : 5);
    const double tol = a.tolerance > 0 ? a.tolerance
                       : c == GradCheckComponent::CrossEntropy ? 1e-6
                       : loss_level                            ? 1e-5
                                                               : 1e-4;
    const GradCheckReport r = grad_check(c, trials, tol, a.seed);
    // The truncated gradient is a diagnostic; failing is the expected outcome.
    const bool expected_fail = c == GradCheckComponent::CpLossTruncated;
    const bool good = r.passed != expected_fail;
    ok = ok && good;
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << r.max_relative_error;
    std::ostringstream tol_str;
    tol_str << std::scientific << std::setprecision(0) << r.tolerance;
    std::cout << std::left << std::setw(18) << r.component << std::setw(8) << r.trials
              << std::setw(10) << r.entries << std::setw(14) << err.str() << std::setw(11)
              << tol_str.str() << (r.passed ? "PASS" : "FAIL")
              << (expected_fail ? " (expected FAIL)" : "") << '\n';
  }
  return ok ? 0 : 1;
}

struct AblateArgs {
  TrainArgs train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> losses{"cross-entropy", "cploss"};
};

int run_ablate(const CLI::App& cmd, AblateArgs a) {
  fs::path out = a.train.out.empty() ? default_out("sweep") : a.train.out;
  finish_training_config(a.train);
  std::vector<ProgressLossKind> kinds;
  for (const std::string& l : a.losses) kinds.push_back(parse_progress_loss(l));

  const Dataset all = load_all(a.train.data);
  const Dataset train_set = require_split(all, "train");
  const Dataset test_set = require_split(all, "test");
  echo_config(cmd, out);
  const AblationTable table =
      run_ablation(train_set, test_set, a.train.cfg, a.seeds, kinds, ablation_names(), &std::cerr);

  nlohmann::json j = table.to_json();
  j["version"] = kVersion;
  j["train"] = a.train.cfg.to_json();
  write_json(out / "ablation.json", j);

  std::ofstream csv(out / "ablation.csv");
  csv << "config,progress_loss,accuracy,mean_precision,mean_recall,delta_vs_local\n";
  csv.precision(10);
  for (const AblationCell& c : table.cells) {
    csv << c.config << ',' << to_string(c.loss) << ',' << c.accuracy << ',' << c.mean_precision
        << ',' << c.mean_recall << ',' << c.accuracy - table.cell("local", c.loss).accuracy
        << '\n';
  }
  if (!csv) throw IoError("cannot write " + (out / "ablation.csv").string());
  table.print(std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action forecasting with multi-granularity progress streams"};
  app.set_version_flag("--version", std::string("taskcast ") + kVersion);
  app.set_config("--config", "", "TOML or INI file; command line flags take precedence");
  app.require_subcommand(1);
  app.footer(std::string("Output directories default to $") + kOutRootEnv + "/<command>.");

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic grammar dataset");
  gen_cmd->add_option("--grammar", gen.grammar, "ikea-default or a grammar JSON file")
      ->capture_default_str();
  gen_cmd->add_option("--sequences", gen.sequences, "Training sequences")->capture_default_str();
  gen_cmd->add_option("--test-sequences", gen.test_sequences,
                      "Held-out sequences (default: a fifth of --sequences)");
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  gen_cmd->add_option("--dim", gen.features.dim, "Feature dimension")->capture_default_str();
  gen_cmd->add_option("--separation", gen.features.class_separation, "Norm of class means")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.features.noise_std, "Per-frame gaussian noise")
      ->capture_default_str();
  gen_cmd->add_option("--smoothing", gen.features.smoothing_window, "Moving average width")
      ->capture_default_str();
  gen_cmd->add_option("--progress-anchors", gen.features.progress_anchors,
                      "Anchors of the slow progress drift")
      ->capture_default_str();
  gen_cmd->add_option("--progress-drift", gen.features.progress_drift, "Norm of the drift")
      ->capture_default_str();
  gen_cmd->add_option("--null-class-ids", gen.null_class_ids, "Classes stripped on load")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  add_training_options(train_cmd, tr);
  train_cmd->add_option("--model", tr.model, "local, +5, +5+10, +5+10+20 or combined")
      ->check(CLI::IsMember({"local", "+5", "+5+10", "+5+10+20", "combined"}))
      ->capture_default_str();
  train_cmd->add_option("--progress-loss", tr.progress_loss, "cross-entropy, cploss or l2")
      ->check(CLI::IsMember({"cross-entropy", "ce", "cploss", "cp", "l2"}))
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.cfg.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Run directory");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "Split to evaluate")->capture_default_str();
  eval_cmd->add_option("--eval-step", ev.eval_step, "Override the window step");
  eval_cmd->add_option("--eval-stride", ev.eval_stride, "Override the frame stride");
  eval_cmd->add_option("--out", ev.out, "Output directory");

  GradCheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("grad-check", "Compare gradients with finite differences");
  gc_cmd->add_option("--component", gc.components,
                     "all, losses, cploss, cploss-truncated, cross-entropy, lstm, streams, "
                     "combined")
      ->capture_default_str();
  gc_cmd->add_option("--trials", gc.trials, "Random instances (default 100 for losses, 5 else)");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Relative error bound (default per component)");
  gc_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();

  AblateArgs ab;
  CLI::App* ab_cmd = app.add_subcommand("ablate", "Run the local / +5 / +5+10 / +5+10+20 sweep");
  add_training_options(ab_cmd, ab.train);
  ab_cmd->add_option("--seeds", ab.seeds, "Seeds averaged per cell")
      ->delimiter(',')
      ->capture_default_str();
  ab_cmd->add_option("--losses", ab.losses, "Progress losses to compare")
      ->delimiter(',')
      ->capture_default_str();
  ab_cmd->add_option("--out", ab.train.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    gen.test_set = gen_cmd->count("--test-sequences") > 0;
    if (gen_cmd->parsed()) return run_gen_data(*gen_cmd, gen);
    if (train_cmd->parsed()) return run_train(*train_cmd, tr);
    if (eval_cmd->parsed()) return run_eval(*eval_cmd, ev);
    if (gc_cmd->parsed()) return run_grad_check(gc);
    if (ab_cmd->parsed()) return run_ablate(*ab_cmd, ab);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
