#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "tsseg/augment.hpp"
#include "tsseg/random.hpp"
#include "tsseg/synth.hpp"

using namespace tsseg;

namespace {

LabeledSeries labelled_sample(std::uint64_t seed, std::size_t n = 256) {
  auto s = gen_nominal(NominalFamily::smooth, n, seed, true, 3);
  s = inject_anomaly(s, AnomalySpec::defaults(AnomalyKind::additive_outlier), seed + 1);
  s = inject_anomaly(s, AnomalySpec::defaults(AnomalyKind::volatility_change), seed + 2);
  return s;
}

// Random monotone piecewise-linear map over [0, n] with segment slopes in
// [0.5, 2], sampled at out_len + 1 cell edges.
std::vector<double> random_warp(std::size_t n, std::size_t out_len, Rng& rng) {
  const std::size_t k = static_cast<std::size_t>(rng.uniform_int(2, 8));
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& v : w) total += v = rng.uniform(0.5, 2.0);
  std::vector<double> knots{0.0};
  for (double v : w) knots.push_back(knots.back() + v / total * static_cast<double>(n));
  knots.back() = static_cast<double>(n);
  std::vector<double> edges(out_len + 1);
  for (std::size_t i = 0; i <= out_len; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(out_len) * static_cast<double>(k);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(u), k - 1);
    edges[i] = knots[j] + (u - static_cast<double>(j)) * (knots[j + 1] - knots[j]);
  }
  edges.back() = static_cast<double>(n);
  return edges;
}

std::size_t count(const std::vector<std::uint8_t>& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)); }

}  // namespace

TEST_CASE("reverse is an involution") {
  const auto s = labelled_sample(1);
  const AugmentOp op = AugmentOp::make(AugmentKind::reverse);
  auto twice = apply(op, apply(op, s, 1), 2);
  CHECK(twice.values == s.values);
  CHECK(twice.mask == s.mask);
  CHECK(twice.meta.anomalies == s.meta.anomalies);
}

TEST_CASE("remap transports every labelled index under random warps") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 128;
    auto s = gen_nominal(NominalFamily::smooth, n, static_cast<std::uint64_t>(trial) + 1, false, 1);
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, 120));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 8));
    s = inject_anomaly_at(s, AnomalySpec::defaults(AnomalyKind::additive_outlier), b, d, 1);
    const std::size_t out_len = static_cast<std::size_t>(rng.uniform_int(64, 256));
    const auto edges = random_warp(n, out_len, rng);
    const auto out = remap(s, edges);
    REQUIRE(out.length == out_len);
    for (std::size_t t = 0; t < n; ++t) {
      if (!s.label(t)) continue;
      const double centre = static_cast<double>(t) + 0.5;
      const auto it = std::upper_bound(edges.begin(), edges.end(), centre);
      const auto cell = static_cast<std::size_t>(it - edges.begin()) - 1;
      CHECK(out.label(cell) == 1);
    }
    // nothing far from the window gets labelled
    for (std::size_t i = 0; i < out_len; ++i) {
      if (!out.label(i)) continue;
      CHECK(edges[i + 1] > static_cast<double>(b) - 1.0);
      CHECK(edges[i] < static_cast<double>(b + d) + 1.0);
    }
    CHECK(out.mask == out.mask_from_meta());
  }
}

TEST_CASE("remap rejects bad edges") {
  const auto s = labelled_sample(2, 128);
  const std::vector<double> backwards{0, 64, 32, 128};
  CHECK_THROWS_AS(remap(s, backwards), DataError);
  const std::vector<double> outside{0, 64, 129};
  CHECK_THROWS_AS(remap(s, outside), DataError);
}

TEST_CASE("time warp keeps labels consistent") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto s = labelled_sample(seed);
    const auto out = apply(AugmentOp::make(AugmentKind::time_warp), s, seed);
    CHECK(out.length == s.length);
    CHECK(out.mask == out.mask_from_meta());
    REQUIRE(out.meta.anomalies.size() == s.meta.anomalies.size());
    for (std::size_t m = 0; m < 3; ++m) {
      std::size_t in = 0, got = 0;
      for (std::size_t t = 0; t < s.length; ++t) {
        in += s.label(t, m);
        got += out.label(t, m);
      }
      if (in) CHECK(got >= 1);
      CHECK(static_cast<double>(got) <= 2.0 * static_cast<double>(in) + 2.0);
    }
    CHECK(out.meta.augmentations.back() == "time_warp");
  }
  AugmentOp bad = AugmentOp::make(AugmentKind::time_warp);
  bad.set("strength", {0.6, 0.7});
  CHECK_THROWS_AS(apply(bad, labelled_sample(1), 1), DataError);
}

TEST_CASE("linear op with unit scale and zero offset is the identity") {
  const auto s = labelled_sample(3);
  AugmentOp op = AugmentOp::make(AugmentKind::linear_op);
  op.set("scale", {1.0, 1.0}).set("offset", {0.0, 0.0});
  const auto out = apply(op, s, 5);
  CHECK(out.values == s.values);
  CHECK(out.mask == s.mask);
}

TEST_CASE("value-only ops leave the mask alone") {
  const auto s = labelled_sample(4);
  for (auto k : {AugmentKind::jitter, AugmentKind::add_trend, AugmentKind::linear_op}) {
    CHECK(is_value_only(k));
    const auto out = apply(AugmentOp::make(k), s, 9);
    CHECK(out.mask == s.mask);
    CHECK(out.values != s.values);
  }
}

TEST_CASE("zoom outside the series is refused") {
  AugmentOp op = AugmentOp::make(AugmentKind::zoom);
  op.set("factor", {1.5, 1.5}).set("center", {0.05, 0.05});
  CHECK_THROWS_AS(apply(op, labelled_sample(5), 1), DataError);
}

TEST_CASE("augmentation is deterministic in the seed") {
  const auto s = labelled_sample(6);
  for (auto k : kAllAugmentKinds) {
    const auto partner = labelled_sample(60);
    const auto a = apply(AugmentOp::make(k), s, 3, &partner, 200);
    const auto b = apply(AugmentOp::make(k), s, 3, &partner, 200);
    CHECK(a == b);
    CHECK(a.length == 200);
  }
}

TEST_CASE("nominal samples stay nominal under every op") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = gen_nominal(kAllFamilies[seed % 4], 256, seed, seed % 2 == 0, 3);
    const auto partner = gen_nominal(kAllFamilies[(seed + 1) % 4], 256, seed + 100, false, 3);
    for (auto k : kAllAugmentKinds) {
      const auto out = apply(AugmentOp::make(k), s, seed, &partner);
      CHECK(count(out.mask) == 0);
      CHECK(out.meta.anomalies.empty());
    }
  }
}

TEST_CASE("invariance table") {
  const auto t = InvarianceTable::defaults();
  CHECK_FALSE(t.allowed(AugmentKind::mutate_pair, AnomalyKind::cyclic_violation));
  CHECK(t.allowed(AugmentKind::jitter, AnomalyKind::additive_outlier));
  CHECK(t.allowed(AugmentKind::reverse, AnomalyKind::additive_outlier));
  CHECK(check_invariance(AugmentOp::make(AugmentKind::jitter), AnomalyKind::additive_outlier));

  // jitter capped a factor of four below the smallest outlier intensity
  CHECK(jitter_sigma_cap(kOutlierIntensityFloor) == 1.0);
  AugmentOp loud = AugmentOp::make(AugmentKind::jitter);
  loud.set("sigma", {0.5, 1.5});
  CHECK_FALSE(check_invariance(loud, AnomalyKind::additive_outlier));
  CHECK(check_invariance(loud, AnomalyKind::volatility_change));

  auto custom = t;
  custom.set(AugmentKind::mutate_pair, AnomalyKind::cyclic_violation, true);
  CHECK(custom.allowed(AugmentKind::mutate_pair, AnomalyKind::cyclic_violation));
}

TEST_CASE("policies refuse disallowed pairs unless forced") {
  const auto policy = parse_policy(R"({"passes": 2, "ops": [
      {"kind": "mutate_pair", "weight": 1, "params": {"fraction": [0.1, 0.2]}},
      {"kind": "jitter", "weight": 3}]})");
  CHECK(policy.passes == 2);
  REQUIRE(policy.ops.size() == 2);
  CHECK(policy.ops[0].param("fraction") == Range{0.1, 0.2});
  CHECK(policy.ops[1].weight == 3.0);
  const AnomalyKind kinds[] = {AnomalyKind::additive_outlier, AnomalyKind::cyclic_violation};
  CHECK_THROWS_AS(validate_policy(policy, kinds), InvarianceError);
  CHECK_NOTHROW(validate_policy(policy, kinds, true));

  const auto again = parse_policy(policy_to_json(policy));
  CHECK(again.ops.size() == 2);
  CHECK(again.ops[0].params == policy.ops[0].params);

  const auto overridden = parse_policy(R"({"ops": [{"kind": "mutate_pair"}],
      "invariance_overrides": [{"op": "mutate_pair", "anomaly": "cyclic_violation", "allowed": true}]})");
  CHECK_NOTHROW(validate_policy(overridden, kinds));
  CHECK_THROWS_AS(parse_policy(R"({"ops": [{"kind": "shear"}]})"), DataError);
  CHECK_THROWS(AugmentOp::make(AugmentKind::reverse).set("sigma", {0, 1}));
}

TEST_CASE("augment_sample applies the requested passes") {
  AugmentPolicy policy;
  policy.ops = {AugmentOp::make(AugmentKind::reverse), AugmentOp::make(AugmentKind::time_warp)};
  policy.passes = 3;
  const auto s = labelled_sample(7);
  const std::vector<LabeledSeries> pool{labelled_sample(8)};
  const AnomalyKind kinds[] = {AnomalyKind::additive_outlier, AnomalyKind::volatility_change};
  const auto out = augment_sample(policy, s, pool, kinds, 4);
  CHECK(out.meta.augmentations.size() == s.meta.augmentations.size() + 3);
  CHECK(out.mask == out.mask_from_meta());
  CHECK(out == augment_sample(policy, s, pool, kinds, 4));
}
