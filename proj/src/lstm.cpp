#include "taskcast/lstm.hpp"

#include <cmath>

#include "taskcast/activations.hpp"
#include "taskcast/errors.hpp"
#include "taskcast/kernels/kernels.hpp"

namespace taskcast {

LstmLayerParams LstmLayerParams::zeros(std::size_t input_size, std::size_t hidden_size) {
  return LstmLayerParams{Matrix(4 * hidden_size, input_size),
                         Matrix(4 * hidden_size, hidden_size), Matrix(4 * hidden_size, 1)};
}

void LstmLayerParams::init_uniform(Rng& rng, double forget_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_size() + hidden_size()));
  for (double& w : input_weights.values()) w = rng.uniform(-bound, bound);
  for (double& w : recurrent_weights.values()) w = rng.uniform(-bound, bound);
  biases.fill(0.0);
  const std::size_t h = hidden_size();
  for (std::size_t j = 0; j < h; ++j) biases(h + j, 0) = forget_bias;
}

void LstmLayerParams::visit(const std::string& prefix, const TensorVisitor& fn) {
  fn(prefix + ".input_weights", input_weights);
  fn(prefix + ".recurrent_weights", recurrent_weights);
  fn(prefix + ".biases", biases);
}

void LstmLayerParams::visit(const std::string& prefix, const ConstTensorVisitor& fn) const {
  fn(prefix + ".input_weights", input_weights);
  fn(prefix + ".recurrent_weights", recurrent_weights);
  fn(prefix + ".biases", biases);
}

LstmStepCache lstm_cell_forward(const LstmLayerParams& params, std::span<const double> x,
                                std::span<const double> h_prev, std::span<const double> c_prev) {
  const std::size_t hs = params.hidden_size();
  if (x.size() != params.input_size() || h_prev.size() != hs || c_prev.size() != hs) {
    throw ShapeError("lstm step: input " + std::to_string(x.size()) + "/" +
                     std::to_string(params.input_size()) + ", state " +
                     std::to_string(h_prev.size()) + "," + std::to_string(c_prev.size()) + "/" +
                     std::to_string(hs));
  }
  LstmStepCache cache;
  cache.x.assign(x.begin(), x.end());
  cache.h_prev.assign(h_prev.begin(), h_prev.end());
  cache.c_prev.assign(c_prev.begin(), c_prev.end());

  Vector& z = cache.gates;
  z.assign(params.biases.values().begin(), params.biases.values().end());
  kernels::gemv(params.input_weights.values(), 4 * hs, params.input_size(), x, z);
  kernels::gemv(params.recurrent_weights.values(), 4 * hs, hs, h_prev, z);

  for (std::size_t j = 0; j < 3 * hs; ++j) z[j] = sigmoid(z[j]);
  for (std::size_t j = 3 * hs; j < 4 * hs; ++j) z[j] = std::tanh(z[j]);

  cache.c.resize(hs);
  cache.tanh_c.resize(hs);
  cache.h.resize(hs);
  for (std::size_t j = 0; j < hs; ++j) {
    const double i = z[j], f = z[hs + j], o = z[2 * hs + j], g = z[3 * hs + j];
    cache.c[j] = f * c_prev[j] + i * g;
    cache.tanh_c[j] = std::tanh(cache.c[j]);
    cache.h[j] = o * cache.tanh_c[j];
  }
  return cache;
}

LstmState lstm_cell_step(const LstmLayerParams& params, std::span<const double> x,
                         std::span<const double> h_prev, std::span<const double> c_prev) {
  LstmStepCache cache = lstm_cell_forward(params, x, h_prev, c_prev);
  return LstmState{std::move(cache.h), std::move(cache.c)};
}

void lstm_cell_backward(const LstmLayerParams& params, const LstmStepCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmLayerParams& grads, std::span<double> dx, Vector& dh_prev,
                        Vector& dc_prev) {
  const std::size_t hs = params.hidden_size();
  const Vector& z = cache.gates;
  Vector dz(4 * hs);
  dc_prev.assign(hs, 0.0);
  for (std::size_t j = 0; j < hs; ++j) {
    const double i = z[j], f = z[hs + j], o = z[2 * hs + j], g = z[3 * hs + j];
    const double tc = cache.tanh_c[j];
    const double dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
    dz[j] = dcj * g * i * (1.0 - i);
    dz[hs + j] = dcj * cache.c_prev[j] * f * (1.0 - f);
    dz[2 * hs + j] = dh[j] * tc * o * (1.0 - o);
    dz[3 * hs + j] = dcj * i * (1.0 - g * g);
    dc_prev[j] = dcj * f;
  }
  kernels::ger(1.0, dz, cache.x, grads.input_weights.values());
  kernels::ger(1.0, dz, cache.h_prev, grads.recurrent_weights.values());
  kernels::axpy(1.0, dz, grads.biases.values());

  dh_prev.assign(hs, 0.0);
  kernels::gemv_t(params.recurrent_weights.values(), 4 * hs, hs, dz, dh_prev);
  if (!dx.empty()) {
    std::fill(dx.begin(), dx.end(), 0.0);
    kernels::gemv_t(params.input_weights.values(), 4 * hs, params.input_size(), dz, dx);
  }
}

LstmStack LstmStack::zeros(std::size_t input_size, std::size_t hidden_size) {
  return LstmStack{LstmLayerParams::zeros(input_size, hidden_size),
                   LstmLayerParams::zeros(hidden_size, hidden_size)};
}

void LstmStack::init_uniform(Rng& rng) {
  lower.init_uniform(rng);
  upper.init_uniform(rng);
}

void LstmStack::visit(const std::string& prefix, const TensorVisitor& fn) {
  lower.visit(prefix + ".lower", fn);
  upper.visit(prefix + ".upper", fn);
}

void LstmStack::visit(const std::string& prefix, const ConstTensorVisitor& fn) const {
  lower.visit(prefix + ".lower", fn);
  upper.visit(prefix + ".upper", fn);
}

Vector stacked_lstm_forward(const LstmStack& stack, const Matrix& clip, double dropout_rate,
                            bool train_mode, Rng* rng, StackTrace* trace) {
  if (clip.rows() == 0) throw ShapeError("stacked lstm: empty clip");
  if (clip.cols() != stack.input_size()) {
    throw ShapeError("stacked lstm: clip has " + std::to_string(clip.cols()) +
                     " features, stack expects " + std::to_string(stack.input_size()));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw DomainError("dropout rate must lie in [0, 1)");
  }
  const bool dropout = train_mode && dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw DomainError("train-mode dropout requires an rng");

  const std::size_t hs_lower = stack.lower.hidden_size();
  const std::size_t hs_upper = stack.upper.hidden_size();
  Vector h1(hs_lower, 0.0), c1(hs_lower, 0.0), h2(hs_upper, 0.0), c2(hs_upper, 0.0);
  const double keep_scale = 1.0 / (1.0 - dropout_rate);

  if (trace != nullptr) {
    trace->lower.clear();
    trace->upper.clear();
    trace->dropout_masks.clear();
  }

  for (std::size_t t = 0; t < clip.rows(); ++t) {
    LstmStepCache lo = lstm_cell_forward(stack.lower, clip.row(t), h1, c1);
    h1 = lo.h;
    c1 = lo.c;
    Vector upper_in = h1;
    if (dropout) {
      Vector mask(hs_lower);
      for (std::size_t j = 0; j < hs_lower; ++j) {
        mask[j] = rng->uniform() >= dropout_rate ? keep_scale : 0.0;
        upper_in[j] *= mask[j];
      }
      if (trace != nullptr) trace->dropout_masks.push_back(std::move(mask));
    }
    LstmStepCache up = lstm_cell_forward(stack.upper, upper_in, h2, c2);
    h2 = up.h;
    c2 = up.c;
    if (trace != nullptr) {
      trace->lower.push_back(std::move(lo));
      trace->upper.push_back(std::move(up));
    }
  }
  return h2;
}

void stacked_lstm_backward(const LstmStack& stack, const StackTrace& trace,
                           std::span<const double> d_top, LstmStack& grads) {
  const std::size_t steps = trace.upper.size();
  const std::size_t hs_lower = stack.lower.hidden_size();
  const std::size_t hs_upper = stack.upper.hidden_size();
  const bool dropout = !trace.dropout_masks.empty();

  Vector dh2(d_top.begin(), d_top.end());
  Vector dc2(hs_upper, 0.0);
  Vector dh1(hs_lower, 0.0), dc1(hs_lower, 0.0);
  Vector d_upper_in(hs_lower);
  Vector dh_prev, dc_prev;

  for (std::size_t k = steps; k-- > 0;) {
    lstm_cell_backward(stack.upper, trace.upper[k], dh2, dc2, grads.upper, d_upper_in, dh_prev,
                       dc_prev);
    dh2.swap(dh_prev);
    dc2.swap(dc_prev);

    for (std::size_t j = 0; j < hs_lower; ++j) {
      const double through = dropout ? d_upper_in[j] * trace.dropout_masks[k][j] : d_upper_in[j];
      dh1[j] += through;
    }
    lstm_cell_backward(stack.lower, trace.lower[k], dh1, dc1, grads.lower, {}, dh_prev, dc_prev);
    dh1.swap(dh_prev);
    dc1.swap(dc_prev);
  }
}

}  // namespace taskcast
