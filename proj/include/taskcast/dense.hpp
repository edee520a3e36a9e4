#pragma once

#include <span>
#include <string>

#include "taskcast/params.hpp"
#include "taskcast/rng.hpp"
#include "taskcast/tensor.hpp"

namespace taskcast {

// Affine map y = W x + b.
struct Dense {
  Matrix weights;  // out x in
  Matrix bias;     // out x 1

  static Dense zeros(std::size_t in, std::size_t out);

  std::size_t in_size() const noexcept { return weights.cols(); }
  std::size_t out_size() const noexcept { return weights.rows(); }

  // Uniform in [-1/sqrt(in), 1/sqrt(in)], bias zero.
  void init_uniform(Rng& rng);

  Vector forward(std::span<const double> x) const;

  // Accumulates dW, db into `grads`. Writes W^T dy into dx unless dx is empty.
  void backward(std::span<const double> x, std::span<const double> dy, Dense& grads,
                std::span<double> dx) const;

  void visit(const std::string& prefix, const TensorVisitor& fn);
  void visit(const std::string& prefix, const ConstTensorVisitor& fn) const;
};

}  // namespace taskcast
