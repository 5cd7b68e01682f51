#pragma once

#include <cstdint>
#include <vector>

#include "segn/nn/tensor.hpp"

namespace segn::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW with bias-corrected moments and decoupled weight decay:
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParameterList<T> params, AdamWConfig config);

  /// Throws NotInitialized when default-constructed.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParameterList<T> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
  bool initialized_ = false;
};

struct PlateauConfig {
  double factor = 0.5;
  std::size_t patience = 3;
  double min_lr = 1e-6;
  double threshold = 1e-4;
};

/// Reduce-on-plateau in "max" mode: a metric counts as an improvement when it
/// beats the best so far by more than threshold (absolute). After `patience`
/// consecutive non-improving epochs the rate is multiplied by factor, floored
/// at min_lr, and the counter restarts.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double lr, PlateauConfig config = {});

  /// Returns the learning rate to use next. Throws BadConfig on a non-finite metric.
  double step(double metric);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_; }
  std::size_t reductions() const { return reductions_; }

 private:
  PlateauConfig config_;
  double lr_;
  double best_;
  std::size_t bad_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace segn::nn
