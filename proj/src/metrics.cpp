#include "segn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "segn/error.hpp"

namespace segn {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const std::uint64_t den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

}  // namespace

void Confusion::add(int label, bool predicted_positive) {
  if (label == 1) {
    predicted_positive ? ++tp : ++fn;
  } else {
    predicted_positive ? ++fp : ++tn;
  }
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  tp += o.tp;
  return *this;
}

double Confusion::accuracy() const { return ratio(tp + tn, total()); }
double Confusion::precision() const { return ratio(tp, tp + fp); }
double Confusion::recall() const { return ratio(tp, tp + fn); }
double Confusion::f1() const { return f1_of(tp, fp, fn); }
double Confusion::false_positive_rate() const { return ratio(fp, fp + tn); }

double Confusion::weighted_f1() const {
  if (total() == 0) return 0.0;
  const double pos = static_cast<double>(tp + fn), neg = static_cast<double>(tn + fp);
  // Negative class F1 swaps the roles: its "tp" is tn.
  return (pos * f1_of(tp, fp, fn) + neg * f1_of(tn, fn, fp)) / static_cast<double>(total());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney: sum of positive ranks with average ranks over ties.
  double pos_rank_sum = 0;
  std::uint64_t npos = 0, nneg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++npos;
      } else {
        ++nneg;
      }
    }
    i = j;
  }
  if (npos == 0 || nneg == 0) return 0.5;
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json seasons_json = nlohmann::json::object();
  for (auto s : kAllSeasons) {
    const auto& m = seasons[static_cast<std::size_t>(s)];
    seasons_json[std::string(season_name(s))] = {
        {"samples", m.confusion.total()}, {"accuracy", m.accuracy}, {"precision", m.precision},
        {"recall", m.recall},           {"f1", m.f1},             {"weighted_f1", m.weighted_f1},
        {"fp_rate", m.fp_rate},         {"fn_count", m.fn_count}};
  }
  return {{"samples", samples},
          {"weighted_f1", weighted_f1},
          {"accuracy", accuracy},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"auc", auc},
          {"confusion", {{"tn", confusion.tn}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tp", confusion.tp}}},
          {"seasons", seasons_json}};
}

void MetricsAccumulator::add(double probability, int label, Season season) {
  if (label != 0 && label != 1) throw Error(ErrorKind::BadLabel, "label " + std::to_string(label) + " is not 0/1");
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw Error(ErrorKind::BadProbability, "probability outside [0,1]");
  }
  const bool positive = probability >= kDecisionThreshold;
  confusion_.add(label, positive);
  season_confusion_[static_cast<std::size_t>(season)].add(label, positive);
  scores_.push_back(probability);
  labels_.push_back(label);
}

Metrics MetricsAccumulator::finish() const {
  if (labels_.empty()) throw Error(ErrorKind::EmptyStore, "no samples to evaluate");
  Metrics m;
  m.confusion = confusion_;
  m.samples = confusion_.total();
  m.weighted_f1 = confusion_.weighted_f1();
  m.accuracy = confusion_.accuracy();
  m.precision = confusion_.precision();
  m.recall = confusion_.recall();
  m.f1 = confusion_.f1();
  m.auc = roc_auc(scores_, labels_);
  for (std::size_t s = 0; s < kNumSeasons; ++s) {
    const auto& c = season_confusion_[s];
    auto& out = m.seasons[s];
    out.confusion = c;
    out.accuracy = c.accuracy();
    out.precision = c.precision();
    out.recall = c.recall();
    out.f1 = c.f1();
    out.weighted_f1 = c.weighted_f1();
    out.fp_rate = c.false_positive_rate();
    out.fn_count = c.fn;
  }
  return m;
}

Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                        std::span<const Season> seasons) {
  if (probabilities.size() != labels.size() || labels.size() != seasons.size()) {
    throw Error(ErrorKind::ShapeMismatch, "metric inputs differ in length");
  }
  MetricsAccumulator acc;
  for (std::size_t i = 0; i < labels.size(); ++i) acc.add(probabilities[i], labels[i], seasons[i]);
  return acc.finish();
}

}  // namespace segn
