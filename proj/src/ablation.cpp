#include "taskcast/ablation.hpp"

#include <iomanip>

#include "taskcast/errors.hpp"

namespace taskcast {

const AblationCell& AblationTable::cell(const std::string& config, ProgressLossKind loss) const {
  for (const AblationCell& c : cells) {
    if (c.config == config && c.loss == loss) return c;
  }
  throw DomainError("ablation table has no cell " + config + "/" + to_string(loss));
}

double AblationTable::improvement(ProgressLossKind loss) const {
  return cell("+5+10+20", loss).accuracy - cell("local", loss).accuracy;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["cells"] = nlohmann::json::array();
  for (const AblationCell& c : cells) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const MetricsReport& r : c.per_seed) per_seed.push_back(r.to_json());
    nlohmann::json progress = nlohmann::json::object();
    for (const auto& [n, a] : c.progress_accuracy) progress[std::to_string(n)] = a;
    j["cells"].push_back({{"config", c.config},
                          {"progress_loss", to_string(c.loss)},
                          {"accuracy", c.accuracy},
                          {"mean_precision", c.mean_precision},
                          {"mean_recall", c.mean_recall},
                          {"progress_accuracy", progress},
                          {"per_seed", per_seed}});
  }
  nlohmann::json delta = nlohmann::json::object();
  for (ProgressLossKind l : losses) delta[to_string(l)] = improvement(l);
  j["improvement_over_local"] = delta;
  return j;
}

void AblationTable::print(std::ostream& out) const {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(1);
  out << std::left << std::setw(10) << "model";
  for (ProgressLossKind l : losses) {
    out << "| " << std::setw(36) << to_string(l);
  }
  out << '\n' << std::setw(10) << "";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out << "| " << std::setw(9) << "accuracy" << std::setw(10) << "mean prec" << std::setw(9)
        << "mean rec" << std::setw(8) << "delta";
  }
  out << '\n';
  for (const std::string& config : ablation_names()) {
    bool present = false;
    for (const AblationCell& c : cells) present |= c.config == config;
    if (!present) continue;
    out << std::left << std::setw(10) << config;
    for (ProgressLossKind l : losses) {
      const AblationCell& c = cell(config, l);
      const double delta = c.accuracy - cell("local", l).accuracy;
      out << "| " << std::right << std::setw(7) << 100.0 * c.accuracy << "% " << std::setw(8)
          << 100.0 * c.mean_precision << "% " << std::setw(7) << 100.0 * c.mean_recall << "% "
          << std::showpos << std::setw(6) << 100.0 * delta << std::noshowpos << ' ' << std::left;
    }
    out << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

AblationTable run_ablation(const Dataset& train_set, const Dataset& test_set,
                           const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                           const std::vector<ProgressLossKind>& losses,
                           const std::vector<std::string>& configs, std::ostream* progress_log) {
  if (seeds.empty() || losses.empty()) throw DomainError("ablation needs seeds and losses");
  require_disjoint(train_set, test_set);
  AblationTable table;
  table.seeds = seeds;
  table.losses = losses;

  for (const std::string& config : configs) {
    const std::vector<int> granularities = ablation_granularities(config);
    const bool shared = granularities.empty();
    std::vector<AblationCell> row;
    for (ProgressLossKind l : losses) row.push_back(AblationCell{config, l, {}, 0, 0, 0, {}});

    for (std::size_t li = 0; li < losses.size(); ++li) {
      if (shared && li > 0) {
        row[li].per_seed = row[0].per_seed;
        continue;
      }
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.model.granularities = granularities;
        cfg.loss.progress_kind = losses[li];
        cfg.loss.weights.progress.clear();
        cfg.seed = seed;
        cfg.out_dir.clear();
        const TrainResult trained = train(train_set, cfg);
        Dataset test = test_set;
        if (trained.standardizer) trained.standardizer->apply(test);
        MetricsReport r = evaluate(trained.params, test, cfg.sampler, losses[li]);
        if (progress_log != nullptr) {
          *progress_log << config << " / " << (shared ? "-" : to_string(losses[li])) << " / seed "
                        << seed << ": accuracy " << r.forecast_accuracy << std::endl;
        }
        row[li].per_seed.push_back(std::move(r));
      }
    }
    for (AblationCell& c : row) {
      const double n = static_cast<double>(c.per_seed.size());
      for (const MetricsReport& r : c.per_seed) {
        c.accuracy += r.forecast_accuracy / n;
        c.mean_precision += r.mean_precision / n;
        c.mean_recall += r.mean_recall / n;
        for (const auto& [g, a] : r.progress_accuracy) c.progress_accuracy[g] += a / n;
      }
      table.cells.push_back(std::move(c));
    }
  }
  return table;
}

}  // namespace taskcast
