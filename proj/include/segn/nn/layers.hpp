#pragma once

#include <string>
#include <utility>
#include <vector>

#include "segn/nn/ops.hpp"

namespace segn::nn {

/// Fills every parameter: weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
/// biases zero, LayerNorm gains one. fan_in is the first weight dimension.
template <typename T>
void init_parameters(const ParameterList<T>& params, Rng& rng);

template <typename T>
struct Linear {
  Parameter<T> weight;  // [din, dout]
  Parameter<T> bias;    // [dout]

  Linear() = default;
  Linear(const std::string& name, std::size_t din, std::size_t dout);
  std::size_t in_dim() const { return weight.value.dim(0); }
  std::size_t out_dim() const { return weight.value.dim(1); }
  Var<T> operator()(Tape<T>& tape, Var<T> x);
  void collect(ParameterList<T>& out);
};

template <typename T>
struct LayerNorm {
  Parameter<T> gain;
  Parameter<T> bias;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);
  Var<T> operator()(Tape<T>& tape, Var<T> x);
  void collect(ParameterList<T>& out);
};

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

/// One LSTM step with gates packed (i, f, g, o) along the 4H columns.
/// x_proj is x_t * W_ih + b, already computed for the step.
template <typename T>
LstmState<T> lstm_step(Var<T> x_proj, LstmState<T> state, Var<T> w_hh);

/// Single LSTM step from raw input: x [B,din], h/c [B,H], w_ih [din,4H],
/// w_hh [H,4H], b [4H].
template <typename T>
LstmState<T> lstm_cell(Var<T> x, LstmState<T> state, Var<T> w_ih, Var<T> w_hh, Var<T> b);

/// One direction of one LSTM layer.
template <typename T>
struct LstmDirection {
  Parameter<T> w_ih;  // [din, 4H]
  Parameter<T> w_hh;  // [H, 4H]
  Parameter<T> bias;  // [4H]
  bool reverse = false;

  LstmDirection() = default;
  LstmDirection(const std::string& name, std::size_t din, std::size_t hidden, bool reverse);
  std::size_t hidden() const { return w_hh.value.dim(0); }
  /// x [B*T, din] -> hidden states [B*T, H], zero initial state.
  Var<T> operator()(Tape<T>& tape, Var<T> x, std::size_t steps);
  void collect(ParameterList<T>& out);
};

/// Stacked bidirectional LSTM; each layer outputs [B*T, 2H] (forward | backward).
template <typename T>
struct BiLstm {
  std::vector<std::pair<LstmDirection<T>, LstmDirection<T>>> layers;
  double dropout = 0.0;

  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t din, std::size_t hidden, std::size_t num_layers, double dropout);
  std::size_t out_dim() const { return 2 * layers.front().first.hidden(); }
  Var<T> operator()(Tape<T>& tape, Var<T> x, std::size_t steps, bool training, Rng& rng);
  void collect(ParameterList<T>& out);
};

/// Bias-free Q/K/V/O projections with scaled dot-product attention over time.
template <typename T>
struct MultiHeadAttention {
  Parameter<T> wq, wk, wv, wo;  // [d, d]
  std::size_t heads = 1;
  bool residual = true;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads, bool residual = true);
  Var<T> operator()(Tape<T>& tape, Var<T> x, std::size_t steps);
  void collect(ParameterList<T>& out);
};

}  // namespace segn::nn
