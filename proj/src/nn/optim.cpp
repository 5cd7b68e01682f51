#include "segn/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace segn::nn {

template <typename T>
AdamW<T>::AdamW(ParameterList<T> params, AdamWConfig config)
    : params_(std::move(params)), config_(config), initialized_(true) {
  if (!(config_.lr > 0) || !(config_.beta1 >= 0 && config_.beta1 < 1) || !(config_.beta2 >= 0 && config_.beta2 < 1) ||
      !(config_.eps > 0) || !(config_.weight_decay >= 0)) {
    throw Error(ErrorKind::BadConfig, "invalid AdamW hyperparameters");
  }
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  if (!initialized_) throw Error(ErrorKind::NotInitialized, "optimizer has no parameters bound");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.lr, wd = config_.weight_decay, eps = config_.eps;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    if (p.grad.size() != p.value.size()) throw Error(ErrorKind::ShapeMismatch, "gradient shape differs for " + p.name);
    auto& m = m_[k];
    auto& v = v_[k];
    T* theta = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      const double th = theta[i];
      theta[i] = static_cast<T>(th - lr * (mhat / (std::sqrt(vhat) + eps) + wd * th));
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  nn::zero_grad(params_);
}

template class AdamW<float>;
template class AdamW<double>;

PlateauScheduler::PlateauScheduler(double lr, PlateauConfig config)
    : config_(config), lr_(lr), best_(-std::numeric_limits<double>::infinity()) {
  if (!(lr > 0) || !(config_.factor > 0 && config_.factor < 1) || !(config_.min_lr >= 0) || config_.patience == 0) {
    throw Error(ErrorKind::BadConfig, "invalid plateau scheduler settings");
  }
  lr_ = std::max(lr_, config_.min_lr);
}

double PlateauScheduler::step(double metric) {
  if (!std::isfinite(metric)) throw Error(ErrorKind::BadConfig, "plateau metric must be finite");
  if (metric > best_ + config_.threshold) {
    best_ = metric;
    bad_ = 0;
  } else {
    ++bad_;
  }
  if (bad_ >= config_.patience) {
    const double next = std::max(lr_ * config_.factor, config_.min_lr);
    if (next < lr_) ++reductions_;
    lr_ = next;
    bad_ = 0;
  }
  return lr_;
}

}  // namespace segn::nn
