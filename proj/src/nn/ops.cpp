#include "segn/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace segn::nn {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + detail);
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.same_shape(b), op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(B.rank() == 2 && A.cols() == B.rows(), "matmul", shape_string(A.shape()) + " x " + shape_string(B.shape()));
  Tensor<T> out({A.rows(), B.cols()});
  out.matrix().noalias() = A.matrix() * B.matrix();
  Tape<T>* tp = a.tape;
  const auto ia = a.id, ib = b.id;
  return tp->push(std::move(out), {a, b}, [tp, ia, ib](std::size_t o) {
    const auto G = tp->grad(o).matrix();
    if (tp->needs_grad(ia)) tp->grad(ia).matrix().noalias() += G * tp->value(ib).matrix().transpose();
    if (tp->needs_grad(ib)) tp->grad(ib).matrix().noalias() += tp->value(ia).matrix().transpose() * G;
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  const auto& X = x.value();
  const auto& W = w.value();
  const auto& Bv = b.value();
  require(W.rank() == 2 && X.cols() == W.rows() && Bv.size() == W.cols(), "linear",
          shape_string(X.shape()) + " x " + shape_string(W.shape()) + " + " + shape_string(Bv.shape()));
  Tensor<T> out({X.rows(), W.cols()});
  auto O = out.matrix();
  O.noalias() = X.matrix() * W.matrix();
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(Bv.data(), static_cast<Eigen::Index>(Bv.size()));
  O.rowwise() += bias;
  Tape<T>* tp = x.tape;
  const auto ix = x.id, iw = w.id, ib = b.id;
  return tp->push(std::move(out), {x, w, b}, [tp, ix, iw, ib](std::size_t o) {
    const auto G = tp->grad(o).matrix();
    if (tp->needs_grad(ix)) tp->grad(ix).matrix().noalias() += G * tp->value(iw).matrix().transpose();
    if (tp->needs_grad(iw)) tp->grad(iw).matrix().noalias() += tp->value(ix).matrix().transpose() * G;
    if (tp->needs_grad(ib)) {
      auto& gb = tp->grad(ib);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data(), static_cast<Eigen::Index>(gb.size())) +=
          G.colwise().sum();
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_same(A, B, "add");
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  Tape<T>* tp = a.tape;
  const auto ia = a.id, ib = b.id;
  return tp->push(std::move(out), {a, b}, [tp, ia, ib](std::size_t o) {
    const auto& G = tp->grad(o);
    for (auto id : {ia, ib}) {
      if (!tp->needs_grad(id)) continue;
      auto& g = tp->grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_same(A, B, "mul");
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  Tape<T>* tp = a.tape;
  const auto ia = a.id, ib = b.id;
  return tp->push(std::move(out), {a, b}, [tp, ia, ib](std::size_t o) {
    const auto& G = tp->grad(o);
    if (tp->needs_grad(ia)) {
      auto& g = tp->grad(ia);
      const auto& Bv = tp->value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Bv[i];
    }
    if (tp->needs_grad(ib)) {
      auto& g = tp->grad(ib);
      const auto& Av = tp->value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Av[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = X[i];
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix](std::size_t o) {
    const auto& G = tp->grad(o);
    const auto& Y = tp->value(o);
    auto& g = tp->grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i] * (T(1) - Y[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(X[i]);
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix](std::size_t o) {
    const auto& G = tp->grad(o);
    const auto& Y = tp->value(o);
    auto& g = tp->grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * (T(1) - Y[i] * Y[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] > T(0) ? X[i] : T(0);
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix](std::size_t o) {
    const auto& G = tp->grad(o);
    const auto& X = tp->value(ix);
    auto& g = tp->grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += X[i] > T(0) ? G[i] : T(0);
  });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::BadProbability, "dropout probability must be in [0,1)");
  if (!training || p == 0.0) return x;
  const auto& X = x.value();
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> mask(X.shape());
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= p ? scale : T(0);
    out[i] = X[i] * mask[i];
  }
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix, mask = std::move(mask)](std::size_t o) {
    const auto& G = tp->grad(o);
    auto& g = tp->grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * mask[i];
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
  const auto& X = x.value();
  const auto& Gn = gain.value();
  const auto& Bs = bias.value();
  const std::size_t n = X.rows(), d = X.cols();
  require(d >= 1 && Gn.size() == d && Bs.size() == d, "layer_norm",
          shape_string(X.shape()) + " with gain " + shape_string(Gn.shape()));
  Tensor<T> out(X.shape());
  Tensor<T> xhat(X.shape());
  std::vector<T> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = X.data() + r * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>(xr[j] - mean) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = Gn[j] * h + Bs[j];
    }
  }
  Tape<T>* tp = x.tape;
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return tp->push(std::move(out), {x, gain, bias},
                  [tp, ix, ig, ib, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::size_t o) {
                    const auto& G = tp->grad(o);
                    const auto& Gn = tp->value(ig);
                    if (tp->needs_grad(ig) || tp->needs_grad(ib)) {
                      const bool want_g = tp->needs_grad(ig), want_b = tp->needs_grad(ib);
                      T* gg = want_g ? tp->grad(ig).data() : nullptr;
                      T* gb = want_b ? tp->grad(ib).data() : nullptr;
                      for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t j = 0; j < d; ++j) {
                          if (gg) gg[j] += G[r * d + j] * xhat[r * d + j];
                          if (gb) gb[j] += G[r * d + j];
                        }
                      }
                    }
                    if (!tp->needs_grad(ix)) return;
                    auto& gx = tp->grad(ix);
                    std::vector<T> dxh(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      T m1 = 0, m2 = 0;
                      for (std::size_t j = 0; j < d; ++j) {
                        dxh[j] = G[r * d + j] * Gn[j];
                        m1 += dxh[j];
                        m2 += dxh[j] * xhat[r * d + j];
                      }
                      m1 /= static_cast<T>(d);
                      m2 /= static_cast<T>(d);
                      for (std::size_t j = 0; j < d; ++j) {
                        gx[r * d + j] += inv_std[r] * (dxh[j] - m1 - xhat[r * d + j] * m2);
                      }
                    }
                  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const auto& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  require(begin + count <= d && count > 0, "slice_cols",
          "columns " + std::to_string(begin) + "+" + std::to_string(count) + " of " + shape_string(X.shape()));
  Tensor<T> out({n, count});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(X.data() + r * d + begin, count, out.data() + r * count);
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix, n, d, begin, count](std::size_t o) {
    const auto& G = tp->grad(o);
    auto& g = tp->grad(ix);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < count; ++j) g[r * d + begin + j] += G[r * count + j];
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.value().rows() == n, "concat_cols", "row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor<T> out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& P = parts[k].value();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(P.data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  Tape<T>* tp = parts.front().tape;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return tp->push(std::move(out), parts, [tp, ids, widths, n, total](std::size_t o) {
    const auto& G = tp->grad(o);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp->needs_grad(ids[k])) {
        auto& g = tp->grad(ids[k]);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += G[r * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

template <typename T>
Var<T> time_step(Var<T> x, std::size_t t, std::size_t steps) {
  const auto& X = x.value();
  require(steps > 0 && X.rows() % steps == 0 && t < steps, "time_step",
          shape_string(X.shape()) + " with T=" + std::to_string(steps));
  const std::size_t B = X.rows() / steps, d = X.cols();
  Tensor<T> out({B, d});
  for (std::size_t b = 0; b < B; ++b) std::copy_n(X.data() + (b * steps + t) * d, d, out.data() + b * d);
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix, B, d, t, steps](std::size_t o) {
    const auto& G = tp->grad(o);
    auto& g = tp->grad(ix);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < d; ++j) g[(b * steps + t) * d + j] += G[b * d + j];
    }
  });
}

template <typename T>
Var<T> stack_time(const std::vector<Var<T>>& steps) {
  require(!steps.empty(), "stack_time", "no steps");
  const std::size_t T_ = steps.size();
  const std::size_t B = steps.front().value().rows(), d = steps.front().value().cols();
  for (const auto& s : steps) require(s.value().rows() == B && s.value().cols() == d, "stack_time", "step shapes differ");
  Tensor<T> out({B * T_, d});
  for (std::size_t t = 0; t < T_; ++t) {
    const auto& S = steps[t].value();
    for (std::size_t b = 0; b < B; ++b) std::copy_n(S.data() + b * d, d, out.data() + (b * T_ + t) * d);
  }
  Tape<T>* tp = steps.front().tape;
  std::vector<std::size_t> ids;
  for (const auto& s : steps) ids.push_back(s.id);
  return tp->push(std::move(out), steps, [tp, ids, B, d, T_](std::size_t o) {
    const auto& G = tp->grad(o);
    for (std::size_t t = 0; t < T_; ++t) {
      if (!tp->needs_grad(ids[t])) continue;
      auto& g = tp->grad(ids[t]);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < d; ++j) g[b * d + j] += G[(b * T_ + t) * d + j];
      }
    }
  });
}

template <typename T>
Var<T> mean_time(Var<T> x, std::size_t steps) {
  const auto& X = x.value();
  require(steps > 0 && X.rows() % steps == 0, "mean_time", shape_string(X.shape()) + " with T=" + std::to_string(steps));
  const std::size_t B = X.rows() / steps, d = X.cols();
  Tensor<T> out({B, d});
  const T inv = T(1) / static_cast<T>(steps);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += X[(b * steps + t) * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] *= inv;
  }
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix, B, d, steps, inv](std::size_t o) {
    const auto& G = tp->grad(o);
    auto& g = tp->grad(ix);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < d; ++j) g[(b * steps + t) * d + j] += G[b * d + j] * inv;
      }
    }
  });
}

template <typename T>
Var<T> lstm_sequence(Var<T> x_proj, Var<T> w_hh, std::size_t steps, bool reverse) {
  using Strided = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
  using ConstStrided = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
  const auto& P = x_proj.value();
  const auto& W = w_hh.value();
  const std::size_t H = W.rank() == 2 ? W.rows() : 0;
  require(H > 0 && W.cols() == 4 * H && P.cols() == 4 * H && steps > 0 && P.rows() % steps == 0, "lstm_sequence",
          shape_string(P.shape()) + " with recurrent kernel " + shape_string(W.shape()) +
              " and T=" + std::to_string(steps));
  const auto B = static_cast<Eigen::Index>(P.rows() / steps);
  const auto h = static_cast<Eigen::Index>(H);
  const auto T_ = static_cast<Eigen::Index>(steps);
  // act holds the activated gates, cell the cell state and tc = tanh(cell).
  auto act = std::make_shared<Tensor<T>>(P);
  auto cell = std::make_shared<Tensor<T>>(std::vector<std::size_t>{P.rows(), H});
  auto tc = std::make_shared<Tensor<T>>(std::vector<std::size_t>{P.rows(), H});
  Tensor<T> out({P.rows(), H});
  const auto Wm = W.matrix();
  auto step_of = [steps, reverse](std::size_t k) { return static_cast<Eigen::Index>(reverse ? steps - 1 - k : k); };
  auto view4 = [B, h, T_](T* base, Eigen::Index t) { return Strided(base + t * 4 * h, B, 4 * h, Eigen::OuterStride<>(T_ * 4 * h)); };
  auto view1 = [B, h, T_](T* base, Eigen::Index t) { return Strided(base + t * h, B, h, Eigen::OuterStride<>(T_ * h)); };
  for (std::size_t k = 0; k < steps; ++k) {
    const Eigen::Index t = step_of(k);
    auto A = view4(act->data(), t);
    if (k > 0) A.noalias() += view1(out.data(), step_of(k - 1)) * Wm;
    A.leftCols(2 * h).array() = A.leftCols(2 * h).array().logistic();
    A.middleCols(2 * h, h).array() = A.middleCols(2 * h, h).array().tanh();
    A.rightCols(h).array() = A.rightCols(h).array().logistic();
    auto C = view1(cell->data(), t);
    if (k > 0) {
      C.array() = A.middleCols(h, h).array() * view1(cell->data(), step_of(k - 1)).array() +
                  A.leftCols(h).array() * A.middleCols(2 * h, h).array();
    } else {
      C.array() = A.leftCols(h).array() * A.middleCols(2 * h, h).array();
    }
    auto TC = view1(tc->data(), t);
    TC.array() = C.array().tanh();
    view1(out.data(), t).array() = A.rightCols(h).array() * TC.array();
  }
  Tape<T>* tp = x_proj.tape;
  const auto ip = x_proj.id, iw = w_hh.id;
  return tp->push(std::move(out), {x_proj, w_hh}, [=](std::size_t o) {
    const auto& G = tp->grad(o);
    const auto& Hs = tp->value(o);
    const auto Wr = tp->value(iw).matrix();
    Tensor<T> dz({G.rows(), 4 * H});
    Tensor<T> hprev({G.rows(), H});
    RowMatrix<T> dh_next = RowMatrix<T>::Zero(B, h), dc_next = RowMatrix<T>::Zero(B, h), dc(B, h), dh(B, h);
    auto cview4 = [&](const T* base, Eigen::Index t) {
      return ConstStrided(base + t * 4 * h, B, 4 * h, Eigen::OuterStride<>(T_ * 4 * h));
    };
    auto cview1 = [&](const T* base, Eigen::Index t) {
      return ConstStrided(base + t * h, B, h, Eigen::OuterStride<>(T_ * h));
    };
    for (std::size_t k = steps; k-- > 0;) {
      const Eigen::Index t = step_of(k);
      const auto A = cview4(act->data(), t);
      const auto TC = cview1(tc->data(), t);
      const auto i = A.leftCols(h).array(), f = A.middleCols(h, h).array(), g = A.middleCols(2 * h, h).array(),
                 og = A.rightCols(h).array();
      dh = cview1(G.data(), t) + dh_next;
      dc.array() = dh.array() * og * (T(1) - TC.array().square()) + dc_next.array();
      auto D = view4(dz.data(), t);
      D.rightCols(h).array() = dh.array() * TC.array() * og * (T(1) - og);
      D.middleCols(2 * h, h).array() = dc.array() * i * (T(1) - g.square());
      D.leftCols(h).array() = dc.array() * g * i * (T(1) - i);
      if (k > 0) {
        const Eigen::Index tp_ = step_of(k - 1);
        D.middleCols(h, h).array() = dc.array() * cview1(cell->data(), tp_).array() * f * (T(1) - f);
        view1(hprev.data(), t) = cview1(Hs.data(), tp_);
        dh_next.noalias() = D * Wr.transpose();
      } else {
        D.middleCols(h, h).setZero();
        view1(hprev.data(), t).setZero();
      }
      dc_next.array() = dc.array() * f;
    }
    if (tp->needs_grad(ip)) tp->grad(ip).matrix() += dz.matrix();
    if (tp->needs_grad(iw)) tp->grad(iw).matrix().noalias() += hprev.matrix().transpose() * dz.matrix();
  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t steps, std::size_t heads) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  require_same(Q, K, "attention");
  require_same(Q, V, "attention");
  const std::size_t d = Q.cols();
  require(heads > 0 && d % heads == 0 && steps > 0 && Q.rows() % steps == 0, "attention",
          shape_string(Q.shape()) + " with heads=" + std::to_string(heads));
  const std::size_t B = Q.rows() / steps, dk = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  // probs[((b*heads + h)*T + t)*T + s]
  std::vector<T> probs(B * heads * steps * steps);
  Tensor<T> out(Q.shape());
  std::vector<T> row(steps);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < steps; ++t) {
        const T* qr = Q.data() + (b * steps + t) * d + h * dk;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t s = 0; s < steps; ++s) {
          const T* kr = K.data() + (b * steps + s) * d + h * dk;
          T dot = 0;
          for (std::size_t j = 0; j < dk; ++j) dot += qr[j] * kr[j];
          row[s] = dot * scale;
          mx = std::max(mx, row[s]);
        }
        T z = 0;
        for (std::size_t s = 0; s < steps; ++s) {
          row[s] = std::exp(row[s] - mx);
          z += row[s];
        }
        T* pr = probs.data() + ((b * heads + h) * steps + t) * steps;
        T* orow = out.data() + (b * steps + t) * d + h * dk;
        for (std::size_t s = 0; s < steps; ++s) {
          pr[s] = row[s] / z;
          const T* vr = V.data() + (b * steps + s) * d + h * dk;
          for (std::size_t j = 0; j < dk; ++j) orow[j] += pr[s] * vr[j];
        }
      }
    }
  }
  Tape<T>* tp = q.tape;
  const auto iq = q.id, ik = k.id, iv = v.id;
  return tp->push(std::move(out), {q, k, v},
                  [tp, iq, ik, iv, B, heads, steps, d, dk, scale, probs = std::move(probs)](std::size_t o) {
                    const auto& G = tp->grad(o);
                    const auto& Q = tp->value(iq);
                    const auto& K = tp->value(ik);
                    const auto& V = tp->value(iv);
                    T* gq = tp->needs_grad(iq) ? tp->grad(iq).data() : nullptr;
                    T* gk = tp->needs_grad(ik) ? tp->grad(ik).data() : nullptr;
                    T* gv = tp->needs_grad(iv) ? tp->grad(iv).data() : nullptr;
                    std::vector<T> dp(steps), ds(steps);
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t h = 0; h < heads; ++h) {
                        for (std::size_t t = 0; t < steps; ++t) {
                          const T* pr = probs.data() + ((b * heads + h) * steps + t) * steps;
                          const T* gr = G.data() + (b * steps + t) * d + h * dk;
                          T dot_pd = 0;
                          for (std::size_t s = 0; s < steps; ++s) {
                            const T* vr = V.data() + (b * steps + s) * d + h * dk;
                            T acc = 0;
                            for (std::size_t j = 0; j < dk; ++j) acc += gr[j] * vr[j];
                            dp[s] = acc;
                            dot_pd += pr[s] * acc;
                            if (gv) {
                              T* gvr = gv + (b * steps + s) * d + h * dk;
                              for (std::size_t j = 0; j < dk; ++j) gvr[j] += pr[s] * gr[j];
                            }
                          }
                          for (std::size_t s = 0; s < steps; ++s) ds[s] = pr[s] * (dp[s] - dot_pd) * scale;
                          const T* qr = Q.data() + (b * steps + t) * d + h * dk;
                          for (std::size_t s = 0; s < steps; ++s) {
                            const T* kr = K.data() + (b * steps + s) * d + h * dk;
                            if (gq) {
                              T* gqr = gq + (b * steps + t) * d + h * dk;
                              for (std::size_t j = 0; j < dk; ++j) gqr[j] += ds[s] * kr[j];
                            }
                            if (gk) {
                              T* gkr = gk + (b * steps + s) * d + h * dk;
                              for (std::size_t j = 0; j < dk; ++j) gkr[j] += ds[s] * qr[j];
                            }
                          }
                        }
                      }
                    }
                  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights) {
  const auto& X = x.value();
  require_same(X, weights, "weighted_sum");
  T s = 0;
  for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * weights[i];
  Tensor<T> out({1}, std::vector<T>{s});
  Tape<T>* tp = x.tape;
  const auto ix = x.id;
  return tp->push(std::move(out), {x}, [tp, ix, weights](std::size_t o) {
    const T g0 = tp->grad(o)[0];
    auto& g = tp->grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * weights[i];
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.data() + r * c;
    T mx = *std::max_element(z, z + c);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += (p[r * c + j] = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < c; ++j) p[r * c + j] /= sum;
  }
  return p;
}

template <typename T>
Var<T> weighted_cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const double> class_weights) {
  const auto& Z = logits.value();
  const std::size_t n = Z.rows(), c = Z.cols();
  require(labels.size() == n && class_weights.size() == c && n > 0, "weighted_cross_entropy",
          shape_string(Z.shape()) + " with " + std::to_string(labels.size()) + " labels");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw Error(ErrorKind::BadLabel, "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    }
  }
  Tensor<T> probs = softmax_rows(Z);
  double loss = 0;
  std::vector<T> w(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = Z.data() + r * c;
    const T mx = *std::max_element(z, z + c);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    const double logp = static_cast<double>(z[labels[r]] - mx) - std::log(sum);
    w[r] = static_cast<T>(class_weights[static_cast<std::size_t>(labels[r])]);
    loss -= static_cast<double>(w[r]) * logp;
  }
  loss /= static_cast<double>(n);
  Tensor<T> out({1}, std::vector<T>{static_cast<T>(loss)});
  std::vector<int> y(labels.begin(), labels.end());
  Tape<T>* tp = logits.tape;
  const auto iz = logits.id;
  return tp->push(std::move(out), {logits},
                  [tp, iz, n, c, probs = std::move(probs), w = std::move(w), y = std::move(y)](std::size_t o) {
                    const T g0 = tp->grad(o)[0] / static_cast<T>(n);
                    auto& g = tp->grad(iz);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const T target = static_cast<std::size_t>(y[r]) == j ? T(1) : T(0);
                        g[r * c + j] += g0 * w[r] * (probs[r * c + j] - target);
                      }
                    }
                  });
}

std::vector<double> class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw Error(ErrorKind::EmptyClass, "no classes");
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(i) + " has no samples");
    total += counts[i];
  }
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    w[i] = static_cast<double>(total) / (static_cast<double>(counts.size()) * static_cast<double>(counts[i]));
  }
  return w;
}

#define SEGN_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                                             \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                     \
  template Var<T> add(Var<T>, Var<T>);                                                                \
  template Var<T> mul(Var<T>, Var<T>);                                                                \
  template Var<T> sigmoid(Var<T>);                                                                    \
  template Var<T> tanh(Var<T>);                                                                       \
  template Var<T> relu(Var<T>);                                                                       \
  template Var<T> dropout(Var<T>, double, bool, Rng&);                                                \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                                         \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                       \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                            \
  template Var<T> time_step(Var<T>, std::size_t, std::size_t);                                        \
  template Var<T> stack_time(const std::vector<Var<T>>&);                                             \
  template Var<T> mean_time(Var<T>, std::size_t);                                                     \
  template Var<T> lstm_sequence(Var<T>, Var<T>, std::size_t, bool);                                   \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);                        \
  template Var<T> weighted_sum(Var<T>, const Tensor<T>&);                                             \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                  \
  template Var<T> weighted_cross_entropy(Var<T>, std::span<const int>, std::span<const double>);

SEGN_INSTANTIATE_OPS(float)
SEGN_INSTANTIATE_OPS(double)

}  // namespace segn::nn
