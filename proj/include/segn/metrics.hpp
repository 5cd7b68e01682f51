#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "segn/grid.hpp"

namespace segn {

inline constexpr double kDecisionThreshold = 0.5;

/// Binary confusion counts in (TN, FP; FN, TP) order.
struct Confusion {
  std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;

  void add(int label, bool predicted_positive);
  Confusion& operator+=(const Confusion& o);
  std::uint64_t total() const { return tn + fp + fn + tp; }

  double accuracy() const;
  /// Positive-class precision/recall/F1; 0 when the denominator is 0.
  double precision() const;
  double recall() const;
  double f1() const;
  /// Support-weighted mean of the per-class F1 scores.
  double weighted_f1() const;
  double false_positive_rate() const;
};

/// Probability that a random positive outscores a random negative, ties
/// counted one half. 0.5 when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct SeasonMetrics {
  Confusion confusion;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, weighted_f1 = 0, fp_rate = 0;
  std::uint64_t fn_count = 0;
};

struct Metrics {
  Confusion confusion;
  double weighted_f1 = 0, accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
  std::uint64_t samples = 0;
  std::array<SeasonMetrics, kNumSeasons> seasons{};

  nlohmann::json to_json() const;
};

/// Accumulates scored samples; seasons are keyed by each sample's week-start season.
class MetricsAccumulator {
 public:
  void add(double probability, int label, Season season);
  std::size_t size() const { return labels_.size(); }
  /// Throws EmptyStore when nothing was added.
  Metrics finish() const;

 private:
  std::vector<double> scores_;
  std::vector<int> labels_;
  std::array<Confusion, kNumSeasons> season_confusion_{};
  Confusion confusion_;
};

Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                        std::span<const Season> seasons);

}  // namespace segn
