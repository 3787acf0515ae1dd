// Usable under the terms in the Apache License, Version 2.0.
//
// Binomial arithmetic: the information bound B(u, n) = ceil(log2 C(u, n)),
// and colexicographic ranking/unranking of small subsets for the packed
// bin encoding (subset sizes up to 8, universes up to 2^32, so ranks need
// 256-bit arithmetic).

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "common.hpp"

namespace backyard {

// log2 of C(u, n) summed in long double; exact enough for ceil at the scales
// the audits use (error well below 1e-9 bits).
inline long double log2_binom(u64 u, u64 n) {
  if (n > u) return -std::numeric_limits<long double>::infinity();
  if (n > u - n) n = u - n;
  long double s = 0.0L;
  for (u64 i = 0; i < n; ++i) {
    s += std::log2(static_cast<long double>(u - i)) - std::log2(static_cast<long double>(i + 1));
  }
  return s;
}

// B(u, n): minimum bits for an n-subset of [0, u).
inline u64 info_bound_bits(u64 u, u64 n) {
  long double b = log2_binom(u, n);
  if (b <= 0.0L) return 0;
  return static_cast<u64>(std::ceil(b - 1e-9L));
}

// ---------------------------------------------------------------------------
// 256-bit unsigned integers, just enough for subset ranks.

struct U256 {
  std::array<u64, 4> w{0, 0, 0, 0};

  static U256 from_u64(u64 v) {
    U256 r;
    r.w[0] = v;
    return r;
  }

  bool operator==(const U256&) const = default;

  bool less(const U256& o) const {
    for (int i = 3; i >= 0; --i) {
      if (w[i] != o.w[i]) return w[i] < o.w[i];
    }
    return false;
  }

  void add(const U256& o) {
    u128 carry = 0;
    for (int i = 0; i < 4; ++i) {
      u128 s = (u128)w[i] + o.w[i] + carry;
      w[i] = static_cast<u64>(s);
      carry = s >> 64;
    }
  }

  void sub(const U256& o) {  // caller ensures *this >= o
    u128 borrow = 0;
    for (int i = 0; i < 4; ++i) {
      u128 d = (u128)w[i] - o.w[i] - borrow;
      w[i] = static_cast<u64>(d);
      borrow = (d >> 64) & 1;
    }
  }

  void mul_u64(u64 m) {
    u128 carry = 0;
    for (int i = 0; i < 4; ++i) {
      u128 p = (u128)w[i] * m + carry;
      w[i] = static_cast<u64>(p);
      carry = p >> 64;
    }
  }

  void div_u64(u64 d) {
    u128 rem = 0;
    for (int i = 3; i >= 0; --i) {
      u128 cur = (rem << 64) | w[i];
      w[i] = static_cast<u64>(cur / d);
      rem = cur % d;
    }
  }

  bool is_zero() const { return w[0] == 0 && w[1] == 0 && w[2] == 0 && w[3] == 0; }

  u64 to_u64() const { return w[0]; }

  int bit_length() const {
    for (int i = 3; i >= 0; --i) {
      if (w[i]) return 64 * i + bit_width_u64(w[i]);
    }
    return 0;
  }

  u64 bits(int lo, int count) const {  // count <= 64
    u64 out = 0;
    for (int i = 0; i < count; ++i) {
      int pos = lo + i;
      out |= ((w[pos / 64] >> (pos % 64)) & 1ull) << i;
    }
    return out;
  }

  void set_bits(int lo, int count, u64 v) {
    for (int i = 0; i < count; ++i) {
      int pos = lo + i;
      u64 bit = (v >> i) & 1ull;
      w[pos / 64] = (w[pos / 64] & ~(1ull << (pos % 64))) | (bit << (pos % 64));
    }
  }
};

// C(x, k) for k <= 8, exact. x may be any u64 with x < 2^32 when k == 8.
inline U256 binom_u256(u64 x, unsigned k) {
  if (k == 0) return U256::from_u64(1);
  if (x < k) return U256::from_u64(0);
  U256 r = U256::from_u64(1);
  // Multiply the falling factorial, dividing by i as we go to keep values
  // integral (prefix products of falling factorials are divisible by i!).
  for (unsigned i = 1; i <= k; ++i) {
    r.mul_u64(x - (i - 1));
    r.div_u64(i);
  }
  return r;
}

// Colex subset codec: rank(S) = sum_i C(s_i, i+1) over the sorted elements.
// Bijective between c-subsets of [0, universe) and [0, C(universe, c)).
class SubsetCodec {
 public:
  SubsetCodec(u64 universe, unsigned max_size) : u_(universe), d_(max_size) {
    if (d_ > 8) throw std::invalid_argument("SubsetCodec: subset size capped at 8");
    if (u_ >= (1ull << 32)) throw std::invalid_argument("SubsetCodec: universe capped at 2^32");
  }

  u64 universe() const { return u_; }
  unsigned max_size() const { return d_; }

  // Bits to store any subset of size exactly c.
  int rank_bits(unsigned c) const {
    U256 total = binom_u256(u_, c);
    // ranks lie in [0, C(u, c)), so the width is the bit length of C(u,c)-1
    if (total.is_zero()) return 0;
    U256 m = total;
    m.sub(U256::from_u64(1));
    return m.bit_length();
  }

  U256 rank(const std::vector<u64>& sorted) const {
    U256 r;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      r.add(binom_u256(sorted[i], static_cast<unsigned>(i + 1)));
    }
    return r;
  }

  std::vector<u64> unrank(U256 r, unsigned c) const {
    std::vector<u64> out(c);
    for (unsigned i = c; i >= 1; --i) {
      // largest x with C(x, i) <= r
      u64 lo = i - 1, hi = u_ - 1, best = i - 1;
      while (lo <= hi) {
        u64 mid = lo + (hi - lo) / 2;
        U256 b = binom_u256(mid, i);
        if (!r.less(b)) {  // b <= r
          best = mid;
          lo = mid + 1;
        } else {
          if (mid == 0) break;
          hi = mid - 1;
        }
      }
      out[i - 1] = best;
      r.sub(binom_u256(best, i));
    }
    return out;
  }

 private:
  u64 u_;
  unsigned d_;
};

}  // namespace backyard
