#include "taskcast/dense.hpp"

#include <algorithm>
#include <cmath>

#include "taskcast/errors.hpp"
#include "taskcast/kernels/kernels.hpp"

namespace taskcast {

Dense Dense::zeros(std::size_t in, std::size_t out) {
  return Dense{Matrix(out, in), Matrix(out, 1)};
}

void Dense::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_size()));
  for (double& w : weights.values()) w = rng.uniform(-bound, bound);
  bias.fill(0.0);
}

Vector Dense::forward(std::span<const double> x) const {
  if (x.size() != in_size()) {
    throw ShapeError("dense input length " + std::to_string(x.size()) + " != " +
                     std::to_string(in_size()));
  }
  Vector y(bias.values().begin(), bias.values().end());
  kernels::gemv(weights.values(), out_size(), in_size(), x, y);
  return y;
}

void Dense::backward(std::span<const double> x, std::span<const double> dy, Dense& grads,
                     std::span<double> dx) const {
  kernels::ger(1.0, dy, x, grads.weights.values());
  kernels::axpy(1.0, dy, grads.bias.values());
  if (!dx.empty()) {
    std::fill(dx.begin(), dx.end(), 0.0);
    kernels::gemv_t(weights.values(), out_size(), in_size(), dy, dx);
  }
}

void Dense::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(prefix + ".weights", weights);
  fn(prefix + ".bias", bias);
}

void Dense::visit(const std::string& prefix, const ConstTensorVisitor& fn) const {
  fn(prefix + ".weights", weights);
  fn(prefix + ".bias", bias);
}

}  // namespace taskcast
