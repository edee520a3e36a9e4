#pragma once

#include <span>
#include <string>
#include <vector>

#include "taskcast/params.hpp"
#include "taskcast/rng.hpp"
#include "taskcast/tensor.hpp"

namespace taskcast {

// One LSTM layer. Gate rows are stacked in the order input, forget, output,
// candidate, each block hidden_size rows tall.
struct LstmLayerParams {
  Matrix input_weights;      // 4H x D
  Matrix recurrent_weights;  // 4H x H
  Matrix biases;             // 4H x 1

  static LstmLayerParams zeros(std::size_t input_size, std::size_t hidden_size);

  std::size_t input_size() const noexcept { return input_weights.cols(); }
  std::size_t hidden_size() const noexcept { return recurrent_weights.cols(); }

  // Uniform in [-1/sqrt(D+H), 1/sqrt(D+H)]; forget-gate biases set to forget_bias.
  void init_uniform(Rng& rng, double forget_bias = 1.0);

  void visit(const std::string& prefix, const TensorVisitor& fn);
  void visit(const std::string& prefix, const ConstTensorVisitor& fn) const;
};

struct LstmState {
  Vector h;
  Vector c;
};

// Everything a single step needs for its backward pass.
struct LstmStepCache {
  Vector x;
  Vector h_prev;
  Vector c_prev;
  Vector gates;  // activated i, f, o, g
  Vector c;
  Vector tanh_c;
  Vector h;
};

LstmState lstm_cell_step(const LstmLayerParams& params, std::span<const double> x,
                         std::span<const double> h_prev, std::span<const double> c_prev);

LstmStepCache lstm_cell_forward(const LstmLayerParams& params, std::span<const double> x,
                                std::span<const double> h_prev, std::span<const double> c_prev);

// dh and dc are the loss gradients w.r.t. this step's h and c. Accumulates
// weight gradients into `grads` and writes dh_prev/dc_prev. dx is written
// only when non-empty.
void lstm_cell_backward(const LstmLayerParams& params, const LstmStepCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        LstmLayerParams& grads, std::span<double> dx, Vector& dh_prev,
                        Vector& dc_prev);

// Two stacked layers with dropout on the lower layer's output.
struct LstmStack {
  LstmLayerParams lower;
  LstmLayerParams upper;

  static LstmStack zeros(std::size_t input_size, std::size_t hidden_size);
  void init_uniform(Rng& rng);

  std::size_t input_size() const noexcept { return lower.input_size(); }
  std::size_t hidden_size() const noexcept { return upper.hidden_size(); }

  void visit(const std::string& prefix, const TensorVisitor& fn);
  void visit(const std::string& prefix, const ConstTensorVisitor& fn) const;
};

struct StackTrace {
  std::vector<LstmStepCache> lower;
  std::vector<LstmStepCache> upper;
  std::vector<Vector> dropout_masks;  // empty when dropout was inactive
};

// Runs the clip (one row per time step) from zero state and returns the
// upper layer's final hidden state. Dropout is inverted, so eval mode is an
// exact identity. `rng` is required only when train_mode && dropout_rate > 0.
Vector stacked_lstm_forward(const LstmStack& stack, const Matrix& clip, double dropout_rate,
                            bool train_mode, Rng* rng, StackTrace* trace = nullptr);

// Backpropagation through time from the gradient on the final top hidden state.
void stacked_lstm_backward(const LstmStack& stack, const StackTrace& trace,
                           std::span<const double> d_top, LstmStack& grads);

}  // namespace taskcast
