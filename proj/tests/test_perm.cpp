// Usable under the terms in the Apache License, Version 2.0.

#include <doctest.h>

#include <vector>

#include "backyard/perm.hpp"
#include "test_util.hpp"

using namespace backyard;

// Exhaustive bijectivity: apply hits every point exactly once and invert
// undoes apply.
static void check_bijective(const Perm& perm) {
  u64 u = perm.size();
  std::vector<bool> hit(u, false);
  for (u64 x = 0; x < u; ++x) {
    u64 y = perm.apply(x);
    REQUIRE(y < u);
    REQUIRE_FALSE(hit[y]);
    hit[y] = true;
    REQUIRE(perm.invert(y) == x);
  }
}

TEST_CASE("truncate_universe") {
  auto t = truncate_universe(100, 8);
  CHECK(t.u_prime == 96);
  CHECK(t.ignored_lo == 96);
  CHECK(t.ignored_hi == 100);
  CHECK(t.has_ignored());
  CHECK(t.u_prime > 100 - 8);

  auto exact = truncate_universe(16, 4);
  CHECK(exact.u_prime == 16);
  CHECK_FALSE(exact.has_ignored());

  auto t2 = truncate_universe(10, 4);
  CHECK(t2.u_prime == 8);
  CHECK(t2.ignored_hi == 10);

  CHECK_THROWS_AS(truncate_universe(10, 0), std::invalid_argument);
}

TEST_CASE("pairwise permutations are bijective, including cycle-walked universes") {
  Rng rng(7);
  for (u64 u : {97ull, 101ull, 256ull, 1000ull, 4096ull}) {
    auto p = sample_pairwise_perm(u, rng);
    check_bijective(*p);
  }
  // a = 1, b = 0 with p == u is the identity
  PairwisePerm id(1, 0, 101, 101);
  for (u64 x = 0; x < 101; ++x) CHECK(id.apply(x) == x);
  CHECK_THROWS_AS(PairwisePerm(0, 1, 101, 101), std::invalid_argument);
}

TEST_CASE("feistel xor example and right-part preservation") {
  // u = 16, m = 4: x = 9 = (10|01), f(01) = 3 -> bin 10^11 = 01, y = 0101 = 5
  auto f = testutil::interpolated_hash({{0, 0}, {1, 3}, {2, 0}, {3, 0}}, 101, 4, 101);
  FeistelPerm perm(f, 4, 4, FeistelMode::kXor);
  CHECK(perm.apply(9) == 5);
  CHECK(perm.invert(5) == 9);

  for (u64 x = 0; x < 16; ++x) CHECK(perm.apply(x) % 4 == x % 4);  // right part preserved
  check_bijective(perm);
}

TEST_CASE("feistel with zero round function is the identity") {
  KWiseHash zero;
  zero.coeffs = {0};
  zero.p = 257;
  zero.range = 16;
  zero.universe = 257;
  FeistelPerm perm(zero, 16, 16, FeistelMode::kXor);
  for (u64 x = 0; x < 256; ++x) CHECK(perm.apply(x) == x);
}

TEST_CASE("feistel additive mode handles non-power-of-two bin counts") {
  Rng rng(3);
  auto f = sample_kwise(4, 50, 12, rng);
  FeistelPerm perm(f, 12, 50, FeistelMode::kAdditive);
  check_bijective(perm);
  for (u64 x = 0; x < perm.size(); ++x) CHECK(perm.apply(x) % 50 == x % 50);
  CHECK_THROWS_AS(FeistelPerm(f, 12, 50, FeistelMode::kXor), std::invalid_argument);
}

TEST_CASE("random feistel round-trips an entire 8-bit universe") {
  Rng rng(11);
  auto f = sample_kwise(8, 16, 16, rng);
  FeistelPerm perm(f, 16, 16, FeistelMode::kXor);
  check_bijective(perm);
}

TEST_CASE("chop splits into high bin and low quotient") {
  auto inner = std::make_shared<IdentityPerm>(16);
  ChoppedPerm cp(inner, 4);
  auto bq = cp.chop(13);
  REQUIRE(bq.has_value());
  CHECK(bq->bin == 3);
  CHECK(bq->quotient == 1);
  CHECK(cp.unchop(3, 1) == 13);

  auto zero = cp.chop(0);
  CHECK(zero->bin == 0);
  CHECK(zero->quotient == 0);
  CHECK(cp.unchop(0, 0) == 0);

  CHECK_THROWS_AS(cp.unchop(4, 0), std::out_of_range);
  CHECK_THROWS_AS(cp.unchop(0, 4), std::out_of_range);
}

TEST_CASE("chop/unchop is a bijection onto bins x quotients") {
  Rng rng(12);
  for (u64 u : {16ull, 64ull}) {
    auto inner = TabulatedPerm::sample(u, rng);
    ChoppedPerm cp(inner, 4);
    std::vector<bool> hit(u, false);
    for (u64 x = 0; x < u; ++x) {
      auto bq = cp.chop(x);
      REQUIRE(bq.has_value());
      u64 flat = bq->bin * cp.quotient_space() + bq->quotient;
      CHECK_FALSE(hit[flat]);
      hit[flat] = true;
      CHECK(cp.unchop(bq->bin, bq->quotient) == x);
    }
  }
}

TEST_CASE("chop signals ignored elements beyond the truncated universe") {
  auto inner = std::make_shared<IdentityPerm>(96);
  ChoppedPerm cp(inner, 8, 100);  // original universe 100, truncated to 96
  CHECK(cp.chop(95).has_value());
  CHECK_FALSE(cp.chop(96).has_value());
  CHECK_FALSE(cp.chop(99).has_value());
  CHECK_THROWS_AS(cp.chop(100), std::out_of_range);
}

TEST_CASE("composition: empty list and identity rounds") {
  ComposedPerm empty(64, {});
  for (u64 x = 0; x < 64; ++x) CHECK(empty.apply(x) == x);

  PairwisePerm id(1, 0, 67, 67);
  auto idp = std::make_shared<PairwisePerm>(id);
  ComposedPerm one(67, {idp});
  for (u64 x = 0; x < 67; ++x) CHECK(one.apply(x) == x);
}

TEST_CASE("KNR composition depth") {
  // 1/2 (2*0.1)^3 = 0.004 exactly
  CHECK(knr_rounds(0.1, 0.004) == 3);
  CHECK(knr_rounds(0.1, 0.1) == 1);     // target >= delta: a single unit
  CHECK(knr_rounds(0.3, 0.3) == 1);
  CHECK(knr_rounds(0.2, 0.01) == 5);    // first t with (0.4)^t <= 0.02
  CHECK_THROWS_AS(knr_rounds(0.5, 0.001), std::invalid_argument);  // 2d = 1: no contraction
  CHECK_THROWS_AS(knr_rounds(0.7, 0.01), std::invalid_argument);

  // boundary arithmetic: chosen t satisfies the bound, t-1 does not
  for (double delta : {0.1, 0.2, 0.05}) {
    for (double target : {0.03, 0.004, 0.00001}) {
      int t = knr_rounds(delta, target);
      auto bound = [&](int tt) { return 0.5 * std::pow(2.0 * delta, tt); };
      CHECK(bound(t) <= target * (1.0 + 1e-9));
      if (t > 1) CHECK(bound(t - 1) > target);
    }
  }
}

TEST_CASE("unit delta formula") {
  // k = 4, w = 16: 16/2^8 + 16/2^16
  CHECK(nr_unit_delta(4, 16) == doctest::Approx(16.0 / 256 + 16.0 / 65536).epsilon(1e-12));
}

TEST_CASE("NR units and compositions are bijective") {
  Rng rng(21);
  auto unit = nr_unit(4, 12, rng);  // universe 2^12
  check_bijective(*unit);

  auto composed = nr_composed(4, 3, 12, rng);
  check_bijective(*composed);

  auto walked = nr_perm_for_universe(3000, 4, 2, rng);
  CHECK(walked->size() == 3000);
  check_bijective(*walked);
}

TEST_CASE("nr_perm_new solves for the composition depth") {
  Rng rng(22);
  // k=2, w=16: delta = 4/256 + 4/65536 ~ 0.0157; target 1e-4 -> t = 3
  double delta = nr_unit_delta(2, 16);
  int want = knr_rounds(delta, 1e-4);
  auto perm = nr_perm_new(2, 1e-4, 16, rng);
  auto composed = std::dynamic_pointer_cast<const ComposedPerm>(perm);
  REQUIRE(composed);
  CHECK(composed->rounds().size() == static_cast<std::size_t>(want));
  CHECK_THROWS_AS(nr_perm_new(200, 1e-9, 16, rng), std::invalid_argument);
}

TEST_CASE("tabulated permutations round-trip and serialize") {
  Rng rng(31);
  auto t = TabulatedPerm::sample(4096, rng);
  check_bijective(*t);

  SnapshotWriter w;
  t->save(w);
  SnapshotReader r(w.bytes());
  auto back = load_perm(r);
  for (u64 x = 0; x < 4096; ++x) CHECK(back->apply(x) == t->apply(x));
}

TEST_CASE("perm serialization round-trips every variant") {
  Rng rng(33);
  auto nr = nr_perm_for_universe(3000, 4, 2, rng);
  SnapshotWriter w;
  nr->save(w);
  SnapshotReader r(w.bytes());
  auto back = load_perm(r);
  REQUIRE(back->size() == 3000);
  for (u64 x = 0; x < 3000; ++x) CHECK(back->apply(x) == nr->apply(x));
}

TEST_CASE("large sampled round-trip at 2^16") {
  Rng rng(41);
  auto perm = nr_composed(8, 2, 16, rng);
  Rng probe(42);
  for (int i = 0; i < 100000; ++i) {
    u64 x = uniform_below(probe, perm->size());
    CHECK(perm->invert(perm->apply(x)) == x);
  }
}

// Small-scale statistical closeness: the composed family's pair distribution
// against the exact truly-random-permutation law.
TEST_CASE("NR pair statistics near the random-permutation law at u = 256") {
  const u64 u = 256;
  const int samples = 1000000;
  const u64 x1 = 3, x2 = 200;
  std::vector<u32> counts(u * u, 0);
  Rng rng(1234);
  for (int s = 0; s < samples; ++s) {
    auto perm = nr_composed(2, 2, 8, rng);
    u64 y1 = perm->apply(x1), y2 = perm->apply(x2);
    ++counts[y1 * u + y2];
  }
  // expected count per ordered distinct pair
  double expect = static_cast<double>(samples) / (u * (u - 1));
  u64 beyond3 = 0, cells = 0;
  double chi2 = 0;
  for (u64 a = 0; a < u; ++a) {
    for (u64 b = 0; b < u; ++b) {
      if (a == b) {
        CHECK(counts[a * u + b] == 0);  // permutations never collide
        continue;
      }
      ++cells;
      double diff = counts[a * u + b] - expect;
      chi2 += diff * diff / expect;
      if (std::abs(diff) > 3.0 * std::sqrt(expect)) ++beyond3;
    }
  }
  double df = static_cast<double>(cells - 1);
  // chi2 concentrates around df; allow a wide deterministic-band check
  CHECK(chi2 < df + 8.0 * std::sqrt(2.0 * df));
  CHECK(static_cast<double>(beyond3) / static_cast<double>(cells) < 0.01);
}
