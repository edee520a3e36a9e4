#pragma once

#include <cmath>
#include <span>

#include "taskcast/tensor.hpp"

namespace taskcast {

inline double sigmoid(double x) noexcept {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector sigmoid(std::span<const double> x);

// Max-subtracted softmax; input must be nonempty.
Vector softmax(std::span<const double> logits);

// log(sum(exp(logits))), stable.
double log_sum_exp(std::span<const double> logits);

}  // namespace taskcast
