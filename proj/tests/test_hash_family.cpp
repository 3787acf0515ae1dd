// Usable under the terms in the Apache License, Version 2.0.

#include <doctest.h>

#include <map>
#include <vector>

#include "backyard/hash_family.hpp"
#include "test_util.hpp"

using namespace backyard;

TEST_CASE("pairwise identity coefficients act as identity") {
  PairwiseHash h{1, 0, 101, 101, 101};
  for (u64 x = 0; x < 101; ++x) CHECK(h(x) == x);
}

TEST_CASE("pairwise evaluation matches the affine formula") {
  PairwiseHash h{3, 5, 101, 10, 101};
  CHECK(h(7) == ((3 * 7 + 5) % 101) % 10);  // 26 mod 101 mod 10 = 6
  CHECK(h(7) == 6);

  PairwiseHash id{1, 0, 101, 10, 101};
  CHECK(id(7) == 7);

  // a = 0 is legal for functions (constant family member)
  PairwiseHash c{0, 4, 101, 10, 101};
  for (u64 x = 0; x < 20; ++x) CHECK(c(x) == 4);
}

TEST_CASE("sampling respects the prime and range contracts") {
  Rng rng(1);
  auto h = sample_pairwise(100, 10, rng);
  CHECK(h.p >= 100);
  CHECK(is_prime(h.p));
  CHECK(h.range == 10);
  for (u64 x = 0; x < 100; ++x) CHECK(h(x) < 10);

  CHECK_THROWS_AS(sample_pairwise(0, 10, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_pairwise(10, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_kwise(0, 10, 10, rng), std::invalid_argument);
  CHECK_THROWS_AS(h(100), std::out_of_range);
}

TEST_CASE("k-wise evaluation: Horner, constant term, determinism") {
  KWiseHash h;
  h.coeffs = {2, 0, 1};
  h.p = 7;
  h.range = 7;
  h.universe = 7;
  CHECK(h(3) == (2 + 0 + 9) % 7);  // 4
  CHECK(h(3) == 4);
  CHECK(h(0) == 2);

  Rng a(99), b(99);
  auto ha = sample_kwise(5, 1000, 64, a);
  auto hb = sample_kwise(5, 1000, 64, b);
  for (u64 x = 0; x < 1000; ++x) CHECK(ha(x) == hb(x));
}

TEST_CASE("k = 1 is a constant function and k = 2 matches the pairwise family") {
  Rng rng(5);
  auto h1 = sample_kwise(1, 100, 16, rng);
  for (u64 x = 1; x < 100; ++x) CHECK(h1(x) == h1(0));

  auto h2 = sample_kwise(2, 100, 16, rng);
  PairwiseHash pw{h2.coeffs[1], h2.coeffs[0], h2.p, h2.range, h2.universe};
  for (u64 x = 0; x < 100; ++x) CHECK(h2(x) == pw(x));
}

// Exhaustive independence oracle: enumerating every degree-(k-1) polynomial
// over F_p, each tuple of outputs on k distinct inputs appears exactly once.
static void exhaustive_kwise(u64 p, unsigned k) {
  std::vector<u64> coeffs(k, 0);
  u64 total = 1;
  for (unsigned i = 0; i < k; ++i) total *= p;

  std::vector<u64> inputs;
  for (u64 x = 0; x < k; ++x) inputs.push_back(x);  // any distinct tuple

  std::map<std::vector<u64>, u64> counts;
  for (u64 idx = 0; idx < total; ++idx) {
    u64 t = idx;
    for (unsigned i = 0; i < k; ++i) {
      coeffs[i] = t % p;
      t /= p;
    }
    KWiseHash h;
    h.coeffs = coeffs;
    h.p = p;
    h.range = p;
    h.universe = p;
    std::vector<u64> out;
    out.reserve(k);
    for (u64 x : inputs) out.push_back(h(x));
    ++counts[out];
  }
  u64 tuples = 1;
  for (unsigned i = 0; i < k; ++i) tuples *= p;
  CHECK(counts.size() == tuples);
  for (const auto& [tuple, c] : counts) CHECK(c == 1);
}

TEST_CASE("exhaustive k-wise uniformity for p <= 11, k <= 3") {
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull}) {
    exhaustive_kwise(p, 2);
    if (p >= 3) exhaustive_kwise(p, 3);  // k distinct inputs need p >= k
  }
}

TEST_CASE("empirical pairwise collision rate stays under 2/R") {
  Rng rng(2024);
  const u64 R = 256;
  const int trials = 100000;
  int collisions = 0;
  for (int t = 0; t < trials; ++t) {
    auto h = sample_pairwise(1ull << 20, R, rng);
    u64 x = uniform_below(rng, 1ull << 20);
    u64 y = uniform_below(rng, 1ull << 20);
    while (y == x) y = uniform_below(rng, 1ull << 20);
    if (h(x) == h(y)) ++collisions;
  }
  double rate = static_cast<double>(collisions) / trials;
  CHECK(rate <= 2.0 / static_cast<double>(R));
}

TEST_CASE("interpolated hash hits prescribed points") {
  auto h = testutil::interpolated_hash({{1, 5}, {2, 9}, {7, 0}}, 101, 101, 101);
  CHECK(h(1) == 5);
  CHECK(h(2) == 9);
  CHECK(h(7) == 0);
}
