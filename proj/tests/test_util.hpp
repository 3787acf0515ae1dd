// Usable under the terms in the Apache License, Version 2.0.
//
// Shared test helpers: reference-model fuzzing and hash interpolation for
// adversarial constructions.

#pragma once

#include <unordered_set>
#include <vector>

#include "backyard/common.hpp"
#include "backyard/hash_family.hpp"

namespace testutil {

using namespace backyard;

// Degree-(points-1) polynomial through the given (x, y) pairs over F_p,
// packaged as a KWiseHash. Lets tests pin exact hash values.
inline KWiseHash interpolated_hash(const std::vector<std::pair<u64, u64>>& points, u64 p, u64 range,
                                   u64 universe) {
  std::size_t k = points.size();
  std::vector<u64> coeffs(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    // Lagrange basis polynomial for point i, accumulated into coeffs
    std::vector<u64> basis{1};
    u64 denom = 1;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      // multiply basis by (x - x_j)
      std::vector<u64> next(basis.size() + 1, 0);
      for (std::size_t t = 0; t < basis.size(); ++t) {
        next[t + 1] = add_mod(next[t + 1], basis[t], p);
        next[t] = add_mod(next[t], mul_mod(basis[t], p - points[j].first % p, p), p);
      }
      basis = next;
      denom = mul_mod(denom, (points[i].first + p - points[j].first % p) % p, p);
    }
    u64 scale = mul_mod(points[i].second % p, inv_mod_prime(denom, p), p);
    for (std::size_t t = 0; t < basis.size(); ++t) {
      coeffs[t] = add_mod(coeffs[t], mul_mod(basis[t], scale, p), p);
    }
  }
  KWiseHash h;
  h.coeffs = coeffs;
  h.p = p;
  h.range = range;
  h.universe = universe;
  return h;
}

// Uniform sample of `count` distinct keys from [0, universe).
inline std::vector<u64> distinct_keys(u64 universe, u64 count, Rng& rng) {
  std::unordered_set<u64> seen;
  std::vector<u64> out;
  out.reserve(count);
  while (out.size() < count) {
    u64 x = uniform_below(rng, universe);
    if (seen.insert(x).second) out.push_back(x);
  }
  return out;
}

}  // namespace testutil
