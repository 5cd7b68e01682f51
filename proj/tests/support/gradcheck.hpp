#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "segn/nn/tape.hpp"
#include "segn/rng.hpp"

namespace segn::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

/// Central finite differences against the tape gradient for every entry (or a
/// seeded sample of `max_entries` per parameter) of each parameter.
/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheckResult grad_check(const std::vector<nn::Parameter<double>*>& params,
                                  const std::function<nn::Var<double>(nn::Tape<double>&)>& loss_fn,
                                  std::size_t max_entries = 0, std::uint64_t seed = 0, double h = 1e-5,
                                  double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape<double> tape;
    tape.backward(loss_fn(tape));
  }
  auto eval = [&] {
    nn::Tape<double> tape(false);
    return loss_fn(tape).value()[0];
  };
  GradCheckResult r;
  Rng rng(seed);
  for (auto* p : params) {
    std::vector<std::size_t> idx;
    if (max_entries == 0 || p->size() <= max_entries) {
      for (std::size_t i = 0; i < p->size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < max_entries; ++k) idx.push_back(rng.index(p->size()));
    }
    for (std::size_t i : idx) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval();
      p->value[i] = orig - h;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
      ++r.checked;
    }
  }
  return r;
}

inline nn::Parameter<double> random_param(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                                          double scale = 1.0) {
  nn::Parameter<double> p(name, std::move(shape));
  for (auto& v : p.value.values()) v = scale * rng.normal();
  return p;
}

inline nn::Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  nn::Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

}  // namespace segn::testing
