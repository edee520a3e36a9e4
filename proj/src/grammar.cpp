#include "taskcast/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <queue>

#include "taskcast/errors.hpp"

namespace taskcast {

void TaskGrammar::validate() const {
  const std::size_t n_actions = actions.size();
  const std::size_t n = instances.size();
  if (n_actions == 0) throw DomainError("grammar: no actions");
  if (duration_range.size() != n_actions) {
    throw DomainError("grammar: need one duration range per action");
  }
  for (std::size_t a = 0; a < n_actions; ++a) {
    const DurationRange& d = duration_range[a];
    if (d.min_frames < 1 || d.max_frames < d.min_frames) {
      throw DomainError("grammar: bad duration range for action '" + actions[a] + "'");
    }
  }
  for (int a : instances) {
    if (a < 0 || static_cast<std::size_t>(a) >= n_actions) {
      throw DomainError("grammar: instance refers to unknown action " + std::to_string(a));
    }
    if (null_action && a == *null_action) throw DomainError("grammar: null action used as instance");
  }
  if (null_action && (*null_action < 0 || static_cast<std::size_t>(*null_action) >= n_actions)) {
    throw DomainError("grammar: null action out of range");
  }
  if (null_gap_probability < 0.0 || null_gap_probability > 1.0) {
    throw DomainError("grammar: null gap probability outside [0, 1]");
  }

  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& [before, after] : precedence) {
    if (before >= n || after >= n || before == after) {
      throw DomainError("grammar: bad precedence pair (" + std::to_string(before) + ", " +
                        std::to_string(after) + ")");
    }
    succ[before].push_back(after);
    ++indegree[after];
  }

  // Kahn's algorithm; leftovers mean a cycle.
  std::queue<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::size_t i = ready.front();
    ready.pop();
    ++seen;
    for (std::size_t j : succ[i]) {
      if (--indegree[j] == 0) ready.push(j);
    }
  }
  if (seen != n) throw DomainError("grammar: precedence relation is cyclic");

  // reach[i][j]: j must come after i.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> stack(succ[s].begin(), succ[s].end());
    while (!stack.empty()) {
      const std::size_t j = stack.back();
      stack.pop_back();
      if (reach[s][j]) continue;
      reach[s][j] = true;
      stack.insert(stack.end(), succ[j].begin(), succ[j].end());
    }
  }
  for (const auto& group : interleavable_groups) {
    for (std::size_t a : group) {
      if (a >= n) throw DomainError("grammar: interleavable group member out of range");
      for (std::size_t b : group) {
        if (a != b && reach[a][b]) {
          throw DomainError("grammar: interleavable instances " + std::to_string(a) + " and " +
                            std::to_string(b) + " are ordered by precedence");
        }
      }
    }
  }
}

std::vector<int> TaskGrammar::repetitions() const {
  std::vector<int> counts(actions.size(), 0);
  for (int a : instances) ++counts[static_cast<std::size_t>(a)];
  return counts;
}

std::vector<ActionSpan> generate_action_order(const TaskGrammar& grammar, Rng& rng) {
  grammar.validate();
  const std::size_t n = grammar.instances.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto& [before, after] : grammar.precedence) {
    succ[before].push_back(after);
    ++pending[after];
  }
  std::vector<std::size_t> enabled;
  for (std::size_t i = 0; i < n; ++i) {
    if (pending[i] == 0) enabled.push_back(i);
  }

  auto duration = [&](int action) {
    const DurationRange& d = grammar.duration_range[static_cast<std::size_t>(action)];
    return static_cast<int>(rng.uniform_int(d.min_frames, d.max_frames));
  };

  std::vector<ActionSpan> order;
  order.reserve(2 * n);
  while (!enabled.empty()) {
    const std::size_t pick = rng.index(enabled.size());
    const std::size_t inst = enabled[pick];
    enabled.erase(enabled.begin() + static_cast<std::ptrdiff_t>(pick));

    if (!order.empty() && grammar.null_action && rng.uniform() < grammar.null_gap_probability) {
      order.push_back({*grammar.null_action, duration(*grammar.null_action), -1});
    }
    const int action = grammar.instances[inst];
    order.push_back({action, duration(action), static_cast<int>(inst)});

    for (std::size_t j : succ[inst]) {
      if (--pending[j] == 0) enabled.push_back(j);
    }
  }
  return order;
}

TaskGrammar ikea_default_grammar() {
  TaskGrammar g;
  g.actions = {"null",          "pick_leg",      "attach_leg_1",  "attach_leg_2", "attach_leg_3",
               "attach_leg_4",  "detach_leg_1",  "detach_leg_2",  "detach_leg_3", "detach_leg_4",
               "flip_table",    "spin_in",       "spin_out"};
  constexpr int kNull = 0, kPick = 1, kAttach = 2, kDetach = 6, kFlip = 10, kSpinIn = 11,
                kSpinOut = 12;
  g.null_action = kNull;
  g.null_gap_probability = 0.5;
  g.duration_range.assign(g.actions.size(), DurationRange{});
  g.duration_range[kNull] = {2, 8};
  g.duration_range[kPick] = {6, 14};
  for (int k = 0; k < 4; ++k) {
    g.duration_range[kAttach + k] = {10, 20};
    g.duration_range[kDetach + k] = {10, 20};
  }
  g.duration_range[kFlip] = {12, 24};
  g.duration_range[kSpinIn] = {30, 60};
  g.duration_range[kSpinOut] = {25, 50};

  auto add = [&g](int action) {
    g.instances.push_back(action);
    return g.instances.size() - 1;
  };
  std::size_t pick[4], attach[4], spin_in[4], spin_out[4], detach[4];
  for (int k = 0; k < 4; ++k) {
    pick[k] = add(kPick);
    attach[k] = add(kAttach + k);
    spin_in[k] = add(kSpinIn);
  }
  const std::size_t flip_up = add(kFlip);
  for (int k = 0; k < 4; ++k) {
    spin_out[k] = add(kSpinOut);
    detach[k] = add(kDetach + k);
  }
  const std::size_t flip_back = add(kFlip);

  auto before = [&g](std::size_t a, std::size_t b) { g.precedence.emplace_back(a, b); };
  for (int k = 0; k < 4; ++k) {
    // A leg is picked, attached to its corner, then spun in.
    before(pick[k], attach[k]);
    before(attach[k], spin_in[k]);
    if (k > 0) {
      // Corners go in order; the next leg may be picked before the previous is spun in.
      before(attach[k - 1], pick[k]);
      before(spin_in[k - 1], attach[k]);
    }
    before(spin_in[k], flip_up);
  }
  for (int k = 0; k < 4; ++k) {
    before(flip_up, spin_out[k]);
    before(spin_out[k], detach[k]);
    if (k > 0) {
      before(spin_out[k - 1], spin_out[k]);
      before(detach[k - 1], detach[k]);
    }
    before(detach[k], flip_back);
  }
  for (int k = 0; k + 1 < 4; ++k) {
    g.interleavable_groups.push_back({spin_in[k], pick[k + 1]});
    g.interleavable_groups.push_back({detach[k], spin_out[k + 1]});
  }
  g.validate();
  return g;
}

nlohmann::json grammar_to_json(const TaskGrammar& grammar) {
  nlohmann::json j;
  j["actions"] = grammar.actions;
  j["instances"] = grammar.instances;
  j["precedence"] = nlohmann::json::array();
  for (const auto& [a, b] : grammar.precedence) j["precedence"].push_back({a, b});
  j["duration_range"] = nlohmann::json::array();
  for (const auto& d : grammar.duration_range) {
    j["duration_range"].push_back({d.min_frames, d.max_frames});
  }
  j["interleavable_groups"] = grammar.interleavable_groups;
  if (grammar.null_action) j["null_action"] = *grammar.null_action;
  j["null_gap_probability"] = grammar.null_gap_probability;
  return j;
}

TaskGrammar grammar_from_json(const nlohmann::json& j) {
  TaskGrammar g;
  try {
    g.actions = j.at("actions").get<std::vector<std::string>>();
    g.instances = j.at("instances").get<std::vector<int>>();
    for (const auto& p : j.at("precedence")) {
      g.precedence.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    }
    for (const auto& d : j.at("duration_range")) {
      g.duration_range.push_back({d.at(0).get<int>(), d.at(1).get<int>()});
    }
    if (j.contains("interleavable_groups")) {
      g.interleavable_groups = j["interleavable_groups"].get<std::vector<std::vector<std::size_t>>>();
    }
    if (j.contains("null_action")) g.null_action = j["null_action"].get<int>();
    g.null_gap_probability = j.value("null_gap_probability", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("grammar json: ") + e.what());
  }
  g.validate();
  return g;
}

TaskGrammar resolve_grammar(const std::string& name_or_path) {
  if (name_or_path == "ikea-default") return ikea_default_grammar();
  std::ifstream in(name_or_path);
  if (!in) throw IoError("cannot open grammar file " + name_or_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(name_or_path + ": " + e.what());
  }
  return grammar_from_json(j);
}

}  // namespace taskcast
