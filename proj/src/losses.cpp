#include "taskcast/losses.hpp"

#include <cmath>
#include <string>

#include "taskcast/activations.hpp"
#include "taskcast/errors.hpp"

namespace taskcast {
namespace {

void check_bin(const ProgressBin& g, std::size_t n, const char* op) {
  if (g.granularity < 1 || static_cast<std::size_t>(g.granularity) != n || g.bin < 0 ||
      g.bin >= g.granularity) {
    throw DomainError(std::string(op) + ": bin " + std::to_string(g.bin) + " of " +
                      std::to_string(g.granularity) + " does not fit a length-" +
                      std::to_string(n) + " vector");
  }
}

// Residuals P_j - V_j of the cumulative distribution against the step at g.
Vector cdf_residuals(std::span<const double> p, int g) {
  Vector r(p.size());
  double cum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    cum += p[j];
    r[j] = cum - (static_cast<int>(j) >= g ? 1.0 : 0.0);
  }
  return r;
}

}  // namespace

ProgressBin progress_bin(std::size_t prefix_len, std::size_t total_len, int granularity) {
  if (granularity < 1) throw DomainError("progress_bin: granularity must be >= 1");
  if (total_len == 0 || prefix_len == 0 || prefix_len > total_len) {
    throw DomainError("progress_bin: need 1 <= prefix (" + std::to_string(prefix_len) +
                      ") <= total (" + std::to_string(total_len) + ")");
  }
  const auto raw = static_cast<int>((prefix_len * static_cast<std::size_t>(granularity)) / total_len);
  return ProgressBin{raw >= granularity ? granularity - 1 : raw, granularity};
}

Vector one_hot(const ProgressBin& g) {
  check_bin(g, static_cast<std::size_t>(g.granularity), "one_hot");
  Vector v(static_cast<std::size_t>(g.granularity), 0.0);
  v[static_cast<std::size_t>(g.bin)] = 1.0;
  return v;
}

Matrix cumulative_matrix(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) m(i, j) = 1.0;
  }
  return m;
}

ScalarLoss l2_progress_loss(double target, double predicted) {
  const double diff = target - predicted;
  return ScalarLoss{diff * diff, -2.0 * diff};
}

VectorLoss cross_entropy_loss(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw DomainError("cross_entropy_loss: target " + std::to_string(target) +
                      " out of range for " + std::to_string(logits.size()) + " classes");
  }
  VectorLoss out;
  out.loss = log_sum_exp(logits) - logits[target];
  out.grad = softmax(logits);
  out.grad[target] -= 1.0;
  return out;
}

double cdf_distance(std::span<const double> p, const ProgressBin& g) {
  check_bin(g, p.size(), "cdf_distance");
  double sum = 0.0;
  for (double v : p) sum += v;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DomainError("cdf_distance: probabilities sum to " + std::to_string(sum));
  }
  double loss = 0.0;
  for (double r : cdf_residuals(p, g.bin)) loss += r * r;
  return loss;
}

VectorLoss cp_loss(std::span<const double> logits, const ProgressBin& g) {
  if (logits.empty()) throw DomainError("cp_loss: empty logits");
  check_bin(g, logits.size(), "cp_loss");
  const std::size_t n = logits.size();

  const Vector s = sigmoid(logits);
  double z = 0.0;
  for (double v : s) z += v;
  if (!(z > 1e-12)) throw DomainError("cp_loss: degenerate normaliser");

  Vector p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = s[i] / z;
  const Vector r = cdf_residuals(p, g.bin);

  VectorLoss out;
  out.grad.assign(n, 0.0);
  for (double v : r) out.loss += v * v;

  // d loss / d v_k = 2 s_k (1 - s_k) / Z * sum_j r_j (1[k <= j] - P_j).
  // With A = sum_j r_j P_j and T_k = sum_{j >= k} r_j this is
  // 2 s_k (1 - s_k) / Z * (T_k - A).
  double a = 0.0;
  double cum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cum += p[j];
    a += r[j] * cum;
  }
  double tail = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    tail += r[k];
    out.grad[k] = 2.0 * s[k] * (1.0 - s[k]) / z * (tail - a);
  }
  return out;
}

Vector cp_loss_truncated_gradient(std::span<const double> logits, const ProgressBin& g) {
  check_bin(g, logits.size(), "cp_loss_truncated_gradient");
  const std::size_t n = logits.size();
  const Vector s = sigmoid(logits);
  double z = 0.0;
  for (double v : s) z += v;
  Vector p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = s[i] / z;
  const Vector r = cdf_residuals(p, g.bin);

  Vector grad(n);
  for (std::size_t k = 0; k < n; ++k) {
    double upper = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) upper += s[i];
    grad[k] = 2.0 * r[k] * upper / (z * z) * s[k] * (1.0 - s[k]);
  }
  return grad;
}

ProgressBin predicted_bin(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("predicted_bin: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return ProgressBin{static_cast<int>(best), static_cast<int>(logits.size())};
}

}  // namespace taskcast
