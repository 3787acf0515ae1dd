// Usable under the terms in the Apache License, Version 2.0.
//
// Exact pairwise and k-wise independent hash families as degree-(k-1)
// polynomials over a prime field, reduced mod R into the output range.
// The mod-R reduction has bias at most (p mod R)/p per output value,
// negligible for p >> R.

#pragma once

#include <vector>

#include "common.hpp"

namespace backyard {

struct PairwiseHash {
  u64 a = 0;
  u64 b = 0;
  u64 p = 2;      // prime modulus, > universe size
  u64 range = 1;  // outputs land in [0, range)
  u64 universe = 1;

  u64 operator()(u64 x) const {
    if (x >= universe) throw std::out_of_range("PairwiseHash: x outside universe");
    return add_mod(mul_mod(a, x % p, p), b, p) % range;
  }
};

struct KWiseHash {
  std::vector<u64> coeffs;  // coeffs[i] multiplies x^i; size() == k >= 1
  u64 p = 2;
  u64 range = 1;
  u64 universe = 1;

  u64 operator()(u64 x) const {
    if (x >= universe) throw std::out_of_range("KWiseHash: x outside universe");
    u64 xm = x % p;
    u64 acc = 0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) {
      acc = add_mod(mul_mod(acc, xm, p), *it, p);
    }
    return acc % range;
  }

  std::size_t k() const { return coeffs.size(); }

  // Descriptor footprint (p, range, coeffs) in bits; used by space audits.
  u64 descriptor_bits() const { return 128 + 64 * static_cast<u64>(coeffs.size()); }
};

inline PairwiseHash sample_pairwise(u64 universe_size, u64 range, Rng& rng) {
  if (universe_size == 0 || range == 0) {
    throw std::invalid_argument("sample_pairwise: universe and range must be positive");
  }
  PairwiseHash h;
  h.p = next_prime_at_least(std::max(universe_size, range));
  h.range = range;
  h.universe = universe_size;
  h.a = uniform_below(rng, h.p);
  h.b = uniform_below(rng, h.p);
  return h;
}

inline KWiseHash sample_kwise(std::size_t k, u64 universe_size, u64 range, Rng& rng) {
  if (k == 0) throw std::invalid_argument("sample_kwise: k must be >= 1");
  if (universe_size == 0 || range == 0) {
    throw std::invalid_argument("sample_kwise: universe and range must be positive");
  }
  KWiseHash h;
  h.p = next_prime_at_least(std::max(universe_size, range));
  h.range = range;
  h.universe = universe_size;
  h.coeffs.resize(k);
  for (auto& c : h.coeffs) c = uniform_below(rng, h.p);
  return h;
}

}  // namespace backyard
