#include "taskcast/adam.hpp"

#include <cmath>

#include "taskcast/errors.hpp"

namespace taskcast {

AdamState AdamState::for_params(std::span<const Matrix* const> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const Matrix* p : params) {
    state.first_moment.emplace_back(p->rows(), p->cols());
    state.second_moment.emplace_back(p->rows(), p->cols());
  }
  return state;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam: parameter, gradient and moment counts differ");
  }
  const AdamConfig& cfg = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    require_shape(g, p.rows(), p.cols(), "adam gradient");
    require_shape(m, p.rows(), p.cols(), "adam first moment");

    auto pv = p.values();
    auto gv = g.values();
    auto mv = m.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
      const double m_hat = mv[i] / bias1;
      const double v_hat = vv[i] / bias2;
      pv[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

double clip_global_norm(std::span<Matrix* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : grads) {
    for (double v : g->values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Matrix* g : grads) {
      for (double& v : g->values()) v *= scale;
    }
  }
  return norm;
}

}  // namespace taskcast
