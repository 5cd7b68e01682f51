#include <doctest.h>

#include <cmath>
#include <set>

#include "segn/model.hpp"
#include "support/gradcheck.hpp"

using namespace segn;
using namespace segn::nn;
using segn::testing::random_tensor;

namespace {

SegnConfig config_for(Variant v, std::uint64_t seed = 1) {
  SegnConfig c;
  c.variant = v;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("parameter counts per block") {
  SegnModel<float> geo(config_for(Variant::Geo));
  SegnModel<float> base(config_for(Variant::Base));
  auto g = geo.block_parameter_counts();
  auto b = base.block_parameter_counts();
  CHECK(g["gradient"] == 12352);
  CHECK(g["head"] == 41410);
  CHECK(g["seasonal"] == 6336);
  CHECK(g["attention"] == 262144);
  CHECK(g["environmental"] == 9920);
  CHECK(b["environmental"] == 9664);
  CHECK(std::abs(static_cast<double>(g["bilstm"]) - 723968.0) / 723968.0 <= 0.002);
  CHECK(geo.parameter_count() == 1055106);
  CHECK(geo.parameter_count() - base.parameter_count() == 256);
  for (auto* m : {&geo, &base}) {
    CHECK(std::abs(static_cast<double>(m->parameter_count()) - 1056130.0) / 1056130.0 <= 0.005);
  }
}

TEST_CASE("parameter names are unique") {
  SegnModel<float> m(config_for(Variant::Geo));
  std::set<std::string> names;
  for (auto* p : m.parameters()) CHECK(names.insert(p->name).second);
}

TEST_CASE("config validation and json roundtrip") {
  SegnConfig c = config_for(Variant::Base, 42);
  c.dropout = 0.1;
  c.pooling = Pooling::Last;
  nlohmann::json j = c;
  CHECK(j["env_input_dim"] == 7);
  const auto back = j.get<SegnConfig>();
  CHECK(back.variant == Variant::Base);
  CHECK(back.seed == 42);
  CHECK(back.dropout == 0.1);
  CHECK(back.pooling == Pooling::Last);

  SegnConfig bad;
  bad.attention_heads = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.dropout = 1.0;
  CHECK_THROWS_AS(SegnModel<float>{bad}, Error);
  CHECK_THROWS_AS((nlohmann::json{{"pooling", "max"}}.get<SegnConfig>()), Error);
  CHECK_THROWS_AS((nlohmann::json{{"variant", "geo"}, {"env_input_dim", 7}}.get<SegnConfig>()), Error);
}

TEST_CASE("forward shape, softmax rows and determinism") {
  SegnModel<float> m(config_for(Variant::Geo));
  const FeatureLayout layout(Variant::Geo);
  Rng rng(3);
  const auto x = random_tensor({5 * kSequenceLength, layout.total()}, rng).cast<float>();
  Tape<float> t1(false), t2(false);
  auto a = m.forward(t1, x, layout, false, rng).value();
  auto b = m.forward(t2, x, layout, false, rng).value();
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  const auto p = softmax_rows(a);
  for (std::size_t r = 0; r < 5; ++r) CHECK(std::abs(p.at(r, 0) + p.at(r, 1) - 1.0f) < 1e-6f);
}

TEST_CASE("argmax is invariant to a shared logit shift") {
  SegnModel<float> m(config_for(Variant::Base));
  const FeatureLayout layout(Variant::Base);
  Rng rng(4);
  Tape<float> t(false);
  auto z = m.forward(t, random_tensor({16 * kSequenceLength, layout.total()}, rng).cast<float>(), layout, false, rng)
               .value();
  const auto p = positive_probabilities(z);
  for (std::size_t r = 0; r < 16; ++r) {
    Tensor<float> shifted({1, 2}, std::vector<float>{z.at(r, 0) + 3.5f, z.at(r, 1) + 3.5f});
    CHECK((shifted.at(0, 1) > shifted.at(0, 0)) == (z.at(r, 1) > z.at(r, 0)));
    CHECK(positive_probabilities(shifted)[0] == doctest::Approx(p[r]).epsilon(1e-5));
  }
}

TEST_CASE("base model ignores coordinates in a geo-layout input") {
  SegnModel<float> m(config_for(Variant::Base));
  const FeatureLayout geo(Variant::Geo);
  Rng rng(5);
  auto x = random_tensor({3 * kSequenceLength, geo.total()}, rng).cast<float>();
  auto y = x;
  const auto& g = geo.block("geographic");
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t j = 0; j < g.size; ++j) y.at(r, g.offset + j) = static_cast<float>(rng.uniform(-1, 1));
  }
  Tape<float> t(false);
  auto a = m.forward(t, x, geo, false, rng).value();
  auto b = m.forward(t, y, geo, false, rng).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // The same model on the Base slice of the data gives the same logits.
  const FeatureLayout base(Variant::Base);
  Tensor<float> xb({x.rows(), base.total()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < geo.total(); ++j) {
      if (j >= g.offset && j < g.offset + g.size) continue;
      xb.at(r, k++) = x.at(r, j);
    }
  }
  auto c = m.forward(t, xb, base, false, rng).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == c[i]);
}

TEST_CASE("layout checks") {
  SegnModel<float> geo(config_for(Variant::Geo));
  const FeatureLayout base(Variant::Base);
  Rng rng(6);
  Tape<float> t(false);
  try {
    geo.forward(t, Tensor<float>({kSequenceLength, base.total()}), base, false, rng);
    FAIL("expected LayoutMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LayoutMismatch);
  }
  try {
    geo.forward(t, Tensor<float>({kSequenceLength, 100}), FeatureLayout(Variant::Geo), false, rng);
    FAIL("expected LayoutMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LayoutMismatch);
  }
}

TEST_CASE("same seed gives the same initialization, different seeds differ") {
  SegnModel<float> a(config_for(Variant::Geo, 9)), b(config_for(Variant::Geo, 9)), c(config_for(Variant::Geo, 10));
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t i = 0; i < pa[k]->size(); ++i) {
      CHECK(pa[k]->value[i] == pb[k]->value[i]);
      differs = differs || pa[k]->value[i] != pc[k]->value[i];
    }
  }
  CHECK(differs);
}

TEST_CASE("end-to-end model gradient on a two-sample batch") {
  for (Variant v : {Variant::Geo, Variant::Base}) {
    SegnConfig c = config_for(v, 11);
    c.dropout = 0.0;
    SegnModel<double> m(c);
    const FeatureLayout layout(v);
    Rng rng(12);
    const auto x = random_tensor({2 * kSequenceLength, layout.total()}, rng);
    const std::vector<int> labels{0, 1};
    const std::vector<double> w{0.8, 1.4};
    auto r = segn::testing::grad_check(
        m.parameters(),
        [&](Tape<double>& t) {
          Rng unused(0);
          return weighted_cross_entropy<double>(m.forward(t, x, layout, false, unused), labels, w);
        },
        6, 13, 1e-6);
    CHECK(r.max_rel_error < 1e-3);
    CHECK(r.checked > 200);
  }
}
