#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "segn/nn/tape.hpp"
#include "segn/rng.hpp"

namespace segn::nn {

// Every op checks shapes (ShapeMismatch) and records an exact analytic
// backward on the tape of its first argument.

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// x [N, din] * W [din, dout] + b [dout]
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> tanh(Var<T> x);
template <typename T> Var<T> relu(Var<T> x);
/// Inverted dropout: scales kept units by 1/(1-p) when training, identity
/// otherwise. Throws BadProbability unless 0 <= p < 1.
template <typename T> Var<T> dropout(Var<T> x, double p, bool training, Rng& rng);
/// Row-wise normalization to zero mean / unit (population) variance, then
/// gain * xhat + bias.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps = 1e-5);

template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);

// Sequence tensors are [B*T, d] with row b*T + t.
template <typename T> Var<T> time_step(Var<T> x, std::size_t t, std::size_t steps);
template <typename T> Var<T> stack_time(const std::vector<Var<T>>& steps);
template <typename T> Var<T> mean_time(Var<T> x, std::size_t steps);

/// Full LSTM recurrence over a precomputed input projection x_proj [B*T, 4H]
/// (gate order i, f, g, o) with zero initial state. Returns h for every step
/// as [B*T, H]; reverse runs from t = T-1 down to 0.
template <typename T> Var<T> lstm_sequence(Var<T> x_proj, Var<T> w_hh, std::size_t steps, bool reverse);

/// Scaled dot-product self-attention over time for each batch entry and head.
/// q, k, v are [B*T, d] with heads contiguous along d.
template <typename T> Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t steps, std::size_t heads);

/// sum(x * weights) as a [1] scalar; weights is a constant of x's shape.
template <typename T> Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights);

/// Softmax cross-entropy averaged over the batch: -(1/B) sum_i w[y_i] log p_i[y_i].
/// Throws BadLabel for labels outside [0, classes).
template <typename T>
Var<T> weighted_cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const double> class_weights);

/// Row-wise softmax (no gradient).
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& logits);

/// w_i = N_total / (N_classes * N_i). Throws EmptyClass on a zero count.
std::vector<double> class_weights(std::span<const std::size_t> counts);

}  // namespace segn::nn
