#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taskcast/rng.hpp"

namespace taskcast {

struct DurationRange {
  int min_frames = 1;
  int max_frames = 1;
};

// A partially ordered task template. Each instance is one occurrence of an
// action class; precedence pairs (before, after) index into `instances`.
struct TaskGrammar {
  std::vector<std::string> actions;
  std::vector<int> instances;
  std::vector<std::pair<std::size_t, std::size_t>> precedence;
  std::vector<DurationRange> duration_range;  // per action class
  // Instances whose mutual order is free. Members must not be related by
  // any chain of precedence pairs.
  std::vector<std::vector<std::size_t>> interleavable_groups;

  // Optional background class emitted between instances.
  std::optional<int> null_action;
  double null_gap_probability = 0.0;

  // Throws DomainError on cyclic precedence or inconsistent tables.
  void validate() const;

  // Instance count per action class.
  std::vector<int> repetitions() const;
};

struct ActionSpan {
  int action = 0;
  int frames = 0;
  int instance = -1;  // -1 for null gaps
};

// Samples one linear extension by repeatedly choosing uniformly among the
// currently enabled instances, then a uniform duration per instance.
std::vector<ActionSpan> generate_action_order(const TaskGrammar& grammar, Rng& rng);

// Assemble-then-disassemble table task: 13 classes including a null class.
TaskGrammar ikea_default_grammar();

nlohmann::json grammar_to_json(const TaskGrammar& grammar);
TaskGrammar grammar_from_json(const nlohmann::json& j);

// "ikea-default" or a path to a JSON grammar file.
TaskGrammar resolve_grammar(const std::string& name_or_path);

}  // namespace taskcast
