#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "taskcast/rng.hpp"
#include "taskcast/tensor.hpp"

namespace testing {

// Central difference of f with respect to x[i], restoring x afterwards.
inline double central(std::span<double> x, std::size_t i, const std::function<double()>& f,
                      double h = 1e-5) {
  const double keep = x[i];
  x[i] = keep + h;
  const double up = f();
  x[i] = keep - h;
  const double down = f();
  x[i] = keep;
  return (up - down) / (2.0 * h);
}

// Largest |a - n| / max(|a|, |n|, floor) over all entries of x. The floor
// absorbs the eps * |f| / h roundoff of the difference quotient.
inline double worst_relative_error(std::span<double> x, std::span<const double> analytic,
                                   const std::function<double()>& f) {
  const double floor = 1e-6 * std::max(1.0, std::abs(f()));
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = central(x, i, f);
    const double denom = std::max({std::abs(analytic[i]), std::abs(n), floor});
    worst = std::max(worst, std::abs(analytic[i] - n) / denom);
  }
  return worst;
}

inline taskcast::Matrix random_matrix(std::size_t rows, std::size_t cols, taskcast::Rng& rng,
                                      double scale = 1.0) {
  taskcast::Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, scale);
  return m;
}

inline taskcast::Vector random_vector(std::size_t n, taskcast::Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  taskcast::Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testing
