#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace taskcast {

enum class GradCheckComponent {
  CpLoss,           // exact cumulative probability gradient
  CpLossTruncated,  // single-summand form; expected to fail
  CrossEntropy,
  Lstm,      // two-layer stack with dropout masks held fixed
  Streams,   // local and progress streams end to end
  Combined,  // full four-stream model with every loss term
};

GradCheckComponent parse_grad_check_component(const std::string& name);
std::string to_string(GradCheckComponent c);
const std::vector<GradCheckComponent>& all_grad_check_components();

struct GradCheckReport {
  std::string component;
  std::size_t trials = 0;
  std::size_t entries = 0;  // gradient entries compared
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero up
// to rounding from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Central differences with step 1e-5 on randomized small instances.
GradCheckReport grad_check(GradCheckComponent component, std::size_t trials, double tolerance,
                           std::uint64_t seed = 1);

}  // namespace taskcast
