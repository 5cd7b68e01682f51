#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "segn/metrics.hpp"
#include "segn/rng.hpp"
#include "support/expect.hpp"

using namespace segn;

namespace {

// O(n^2) pair count with ties worth one half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return pairs == 0 ? 0.5 : wins / pairs;
}

}  // namespace

TEST_CASE("six-sample hand case") {
  const std::vector<int> y{1, 1, 1, 0, 0, 0};
  const std::vector<double> s{.9, .8, .4, .7, .3, .2};
  CHECK(roc_auc(s, y) == doctest::Approx(8.0 / 9.0));
  const std::vector<Season> seasons(6, Season::Winter);
  const auto m = compute_metrics(s, y, seasons);
  CHECK(m.confusion.tn == 2);
  CHECK(m.confusion.fp == 1);
  CHECK(m.confusion.fn == 1);
  CHECK(m.confusion.tp == 2);
  CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.weighted_f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.samples == 6);
}

TEST_CASE("auc conventions") {
  CHECK(roc_auc(std::vector<double>{.1, .2, .8, .9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{.5, .5, .5, .5}, std::vector<int>{0, 1, 0, 1}) == 0.5);
  CHECK(roc_auc(std::vector<double>{.9, .8}, std::vector<int>{1, 1}) == 0.5);
  const std::vector<int> y{0, 0, 1, 1};
  const std::vector<double> s{.1, .2, .8, .9};
  const auto m = compute_metrics(s, y, std::vector<Season>(4, Season::Monsoon));
  CHECK(m.f1 == 1.0);
  CHECK(m.weighted_f1 == 1.0);
  CHECK(m.auc == 1.0);
}

TEST_CASE("auc matches brute-force pair counting with ties") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(6)) / 5.0;  // coarse grid forces ties
      y[i] = static_cast<int>(rng.index(2));
    }
    CHECK(roc_auc(s, y) == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("confusion-derived metrics reproduce the streaming values") {
  Rng rng(2);
  MetricsAccumulator acc;
  std::vector<double> s;
  std::vector<int> y;
  std::vector<Season> seasons;
  for (int i = 0; i < 500; ++i) {
    const int label = rng.uniform() < 0.2 ? 1 : 0;
    const double p = std::clamp(0.3 * label + rng.uniform() * 0.7, 0.0, 1.0);
    const auto season = static_cast<Season>(rng.index(4));
    acc.add(p, label, season);
    s.push_back(p);
    y.push_back(label);
    seasons.push_back(season);
  }
  const auto m = acc.finish();
  const auto batch = compute_metrics(s, y, seasons);
  CHECK(m.to_json() == batch.to_json());
  CHECK(m.weighted_f1 == m.confusion.weighted_f1());
  CHECK(m.accuracy == m.confusion.accuracy());
  Confusion sum;
  for (const auto& season : m.seasons) sum += season.confusion;
  CHECK(sum.tn == m.confusion.tn);
  CHECK(sum.fp == m.confusion.fp);
  CHECK(sum.fn == m.confusion.fn);
  CHECK(sum.tp == m.confusion.tp);

  // order-independent: shuffled input gives the same report
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  MetricsAccumulator shuffled;
  for (auto i : order) shuffled.add(s[i], y[i], seasons[i]);
  CHECK(shuffled.finish().to_json() == m.to_json());
}

TEST_CASE("weighted f1 by hand") {
  Confusion c;
  c.tn = 80;
  c.fp = 10;
  c.fn = 5;
  c.tp = 5;
  const double f1_pos = 2.0 * 5 / (2.0 * 5 + 10 + 5);
  const double f1_neg = 2.0 * 80 / (2.0 * 80 + 5 + 10);
  CHECK(c.f1() == doctest::Approx(f1_pos));
  CHECK(c.weighted_f1() == doctest::Approx((90 * f1_neg + 10 * f1_pos) / 100));
  CHECK(c.false_positive_rate() == doctest::Approx(10.0 / 90.0));
  Confusion empty;
  CHECK(empty.precision() == 0.0);
  CHECK(empty.f1() == 0.0);
}

TEST_CASE("metrics input validation") {
  MetricsAccumulator acc;
  CHECK_ERROR_KIND(acc.finish(), ErrorKind::EmptyStore);
  CHECK_ERROR_KIND(acc.add(0.5, 2, Season::Winter), ErrorKind::BadLabel);
  CHECK_ERROR_KIND(acc.add(1.5, 1, Season::Winter), ErrorKind::BadProbability);
  CHECK_ERROR_KIND(acc.add(std::nan(""), 1, Season::Winter), ErrorKind::BadProbability);
}

TEST_CASE("metrics json carries flat keys and per-season objects") {
  const auto m = compute_metrics(std::vector<double>{.9, .1, .6}, std::vector<int>{1, 0, 0},
                                 std::vector<Season>{Season::Winter, Season::Winter, Season::PostMonsoon});
  const auto j = m.to_json();
  for (const char* k : {"samples", "weighted_f1", "accuracy", "precision", "recall", "f1", "auc", "confusion"}) {
    CHECK(j.contains(k));
  }
  CHECK(j["seasons"]["Winter"]["samples"] == 2);
  CHECK(j["seasons"]["PostMonsoon"]["samples"] == 1);
  CHECK(j["seasons"]["PostMonsoon"]["fp_rate"] == 1.0);
  CHECK(j["seasons"]["Monsoon"]["samples"] == 0);
}
