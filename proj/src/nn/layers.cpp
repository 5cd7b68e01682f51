#include "segn/nn/layers.hpp"

#include <cmath>

namespace segn::nn {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void init_parameters(const ParameterList<T>& params, Rng& rng) {
  for (auto* p : params) {
    if (p->value.rank() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p->value.dim(0)));
      for (auto& v : p->value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    } else if (ends_with(p->name, ".gain")) {
      p->value.fill(T(1));
    } else {
      p->value.fill(T(0));
    }
    p->zero_grad();
  }
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t din, std::size_t dout)
    : weight(name + ".weight", {din, dout}), bias(name + ".bias", {dout}) {}

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, Var<T> x) {
  return linear(x, tape.param(weight), tape.param(bias));
}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t dim)
    : gain(name + ".gain", {dim}), bias(name + ".bias", {dim}) {
  gain.value.fill(T(1));
}

template <typename T>
Var<T> LayerNorm<T>::operator()(Tape<T>& tape, Var<T> x) {
  return layer_norm(x, tape.param(gain), tape.param(bias), eps);
}

template <typename T>
void LayerNorm<T>::collect(ParameterList<T>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

template <typename T>
LstmState<T> lstm_step(Var<T> x_proj, LstmState<T> state, Var<T> w_hh) {
  const std::size_t H = w_hh.value().dim(0);
  if (w_hh.value().rank() != 2 || w_hh.value().dim(1) != 4 * H || x_proj.value().cols() != 4 * H ||
      state.h.value().cols() != H || state.c.value().cols() != H) {
    throw Error(ErrorKind::ShapeMismatch, "lstm: gate projection " + shape_string(x_proj.shape()) +
                                              ", recurrent kernel " + shape_string(w_hh.shape()));
  }
  Var<T> gates = add(x_proj, matmul(state.h, w_hh));
  Var<T> i = sigmoid(slice_cols(gates, 0, H));
  Var<T> f = sigmoid(slice_cols(gates, H, H));
  Var<T> g = tanh(slice_cols(gates, 2 * H, H));
  Var<T> o = sigmoid(slice_cols(gates, 3 * H, H));
  Var<T> c = add(mul(f, state.c), mul(i, g));
  Var<T> h = mul(o, tanh(c));
  return {h, c};
}

template <typename T>
LstmState<T> lstm_cell(Var<T> x, LstmState<T> state, Var<T> w_ih, Var<T> w_hh, Var<T> b) {
  return lstm_step(linear(x, w_ih, b), state, w_hh);
}

template <typename T>
LstmDirection<T>::LstmDirection(const std::string& name, std::size_t din, std::size_t hidden, bool rev)
    : w_ih(name + ".w_ih", {din, 4 * hidden}),
      w_hh(name + ".w_hh", {hidden, 4 * hidden}),
      bias(name + ".bias", {4 * hidden}),
      reverse(rev) {}

template <typename T>
Var<T> LstmDirection<T>::operator()(Tape<T>& tape, Var<T> x, std::size_t steps) {
  if (steps == 0 || x.value().rows() % steps != 0) {
    throw Error(ErrorKind::ShapeMismatch, "lstm input " + shape_string(x.shape()) + " with T=" + std::to_string(steps));
  }
  return lstm_sequence(linear(x, tape.param(w_ih), tape.param(bias)), tape.param(w_hh), steps, reverse);
}

template <typename T>
void LstmDirection<T>::collect(ParameterList<T>& out) {
  out.push_back(&w_ih);
  out.push_back(&w_hh);
  out.push_back(&bias);
}

template <typename T>
BiLstm<T>::BiLstm(const std::string& name, std::size_t din, std::size_t hidden, std::size_t num_layers, double p)
    : dropout(p) {
  if (num_layers == 0 || hidden == 0) throw Error(ErrorKind::BadConfig, "bilstm needs at least one layer and unit");
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? din : 2 * hidden;
    const std::string base = name + ".l" + std::to_string(l);
    layers.emplace_back(LstmDirection<T>(base + ".fwd", in, hidden, false),
                        LstmDirection<T>(base + ".bwd", in, hidden, true));
  }
}

template <typename T>
Var<T> BiLstm<T>::operator()(Tape<T>& tape, Var<T> x, std::size_t steps, bool training, Rng& rng) {
  Var<T> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l > 0) h = nn::dropout(h, dropout, training, rng);
    h = concat_cols<T>({layers[l].first(tape, h, steps), layers[l].second(tape, h, steps)});
  }
  return h;
}

template <typename T>
void BiLstm<T>::collect(ParameterList<T>& out) {
  for (auto& [f, b] : layers) {
    f.collect(out);
    b.collect(out);
  }
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t h, bool res)
    : wq(name + ".wq", {dim, dim}),
      wk(name + ".wk", {dim, dim}),
      wv(name + ".wv", {dim, dim}),
      wo(name + ".wo", {dim, dim}),
      heads(h),
      residual(res) {
  if (h == 0 || dim % h != 0) {
    throw Error(ErrorKind::ShapeMismatch, "attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(h));
  }
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(Tape<T>& tape, Var<T> x, std::size_t steps) {
  Var<T> q = matmul(x, tape.param(wq));
  Var<T> k = matmul(x, tape.param(wk));
  Var<T> v = matmul(x, tape.param(wv));
  Var<T> out = matmul(attention(q, k, v, steps, heads), tape.param(wo));
  return residual ? add(x, out) : out;
}

template <typename T>
void MultiHeadAttention<T>::collect(ParameterList<T>& out) {
  out.push_back(&wq);
  out.push_back(&wk);
  out.push_back(&wv);
  out.push_back(&wo);
}

#define SEGN_INSTANTIATE_LAYERS(T)                                                           \
  template void init_parameters(const ParameterList<T>&, Rng&);                             \
  template struct Linear<T>;                                                                \
  template struct LayerNorm<T>;                                                             \
  template LstmState<T> lstm_step(Var<T>, LstmState<T>, Var<T>);                            \
  template LstmState<T> lstm_cell(Var<T>, LstmState<T>, Var<T>, Var<T>, Var<T>);            \
  template struct LstmDirection<T>;                                                         \
  template struct BiLstm<T>;                                                                \
  template struct MultiHeadAttention<T>;

SEGN_INSTANTIATE_LAYERS(float)
SEGN_INSTANTIATE_LAYERS(double)

}  // namespace segn::nn
