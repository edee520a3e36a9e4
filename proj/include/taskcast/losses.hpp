#pragma once

#include <cstddef>
#include <span>

#include "taskcast/tensor.hpp"

namespace taskcast {

// A 0-based progress bin at granularity N.
struct ProgressBin {
  int bin = 0;
  int granularity = 1;

  friend bool operator==(const ProgressBin&, const ProgressBin&) = default;
};

// floor(prefix_len * N / total_len), clamped to N-1 at prefix_len == total_len.
ProgressBin progress_bin(std::size_t prefix_len, std::size_t total_len, int granularity);

// Length-N indicator of the bin.
Vector one_hot(const ProgressBin& g);

// N x N matrix with ones on and above the diagonal. A row probability vector
// times this matrix is its cumulative distribution.
Matrix cumulative_matrix(std::size_t n);

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;
};

struct VectorLoss {
  double loss = 0.0;
  Vector grad;
};

// Squared Euclidean loss on a scalar progress value; grad is d/d(predicted).
ScalarLoss l2_progress_loss(double target, double predicted);

// -log softmax(logits)[target]; grad = softmax(logits) - one_hot(target).
VectorLoss cross_entropy_loss(std::span<const double> logits, std::size_t target);

// sum_j (P_j - V_j)^2 between the CDF of p and the step CDF of bin g.
// p must sum to 1 within 1e-9.
double cdf_distance(std::span<const double> p, const ProgressBin& g);

// Cumulative probability loss with p = sigmoid(logits) / sum(sigmoid(logits)).
// The gradient is the exact derivative.
VectorLoss cp_loss(std::span<const double> logits, const ProgressBin& g);

// The single-summand (j == k) gradient form. Diagnostic only; it is not the
// derivative of cp_loss and fails a finite-difference check.
Vector cp_loss_truncated_gradient(std::span<const double> logits, const ProgressBin& g);

// argmax with ties resolved to the lowest index.
ProgressBin predicted_bin(std::span<const double> logits);

}  // namespace taskcast
