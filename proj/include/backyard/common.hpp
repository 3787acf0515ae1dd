// Usable under the terms in the Apache License, Version 2.0.
//
// Shared arithmetic helpers: 64-bit modular arithmetic via 128-bit
// intermediates, deterministic Miller-Rabin primality, and small
// integer utilities used throughout the library.

#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace backyard {

using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u128 = unsigned __int128;

// Seeded random source. All sampling in the library goes through this so a
// fixed seed reproduces every structure bit-for-bit across runs.
using Rng = std::mt19937_64;

inline u64 mul_mod(u64 a, u64 b, u64 m) { return static_cast<u64>((u128)a * b % m); }

inline u64 add_mod(u64 a, u64 b, u64 m) {
  u64 s = a + b;
  if (s < a || s >= m) s -= m;
  return s;
}

inline u64 pow_mod(u64 base, u64 exp, u64 m) {
  u64 r = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) r = mul_mod(r, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1;
  }
  return r;
}

// Deterministic Miller-Rabin, valid for all 64-bit inputs with this witness set.
inline bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) d >>= 1, ++s;
  for (u64 a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    u64 x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

inline u64 next_prime_at_least(u64 n) {
  if (n <= 2) return 2;
  if ((n & 1) == 0) ++n;
  while (!is_prime(n)) n += 2;
  return n;
}

// Modular inverse for prime modulus (Fermat).
inline u64 inv_mod_prime(u64 a, u64 p) { return pow_mod(a % p, p - 2, p); }

inline int bit_width_u64(u64 x) {
  int w = 0;
  while (x) ++w, x >>= 1;
  return w;
}

// Bits needed to address/store values in [0, n); n >= 1. ceil(log2(n)) with
// the convention that a single value still occupies one bit slot of width 0.
inline int ceil_log2(u64 n) {
  if (n <= 1) return 0;
  return bit_width_u64(n - 1);
}

inline bool is_pow2(u64 n) { return n != 0 && (n & (n - 1)) == 0; }

inline u64 next_pow2(u64 n) {
  u64 p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

inline u64 gcd_u64(u64 a, u64 b) {
  while (b) {
    u64 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// Uniform draw from [0, n) without modulo bias.
inline u64 uniform_below(Rng& rng, u64 n) {
  if (n == 0) throw std::invalid_argument("uniform_below: empty range");
  std::uniform_int_distribution<u64> dist(0, n - 1);
  return dist(rng);
}

// Operational outcomes. Parameter and domain violations throw instead.
enum class Status : u32 {
  kOk = 0,
  kDuplicate,
  kAbsent,
  kBinFull,
  kCapacity,
  kStructuralFailure,
  kFailedState,  // structure previously failed; rejecting ops until rebuild
};

inline const char* to_string(Status s) {
  switch (s) {
    case Status::kOk: return "ok";
    case Status::kDuplicate: return "duplicate";
    case Status::kAbsent: return "absent";
    case Status::kBinFull: return "bin_full";
    case Status::kCapacity: return "capacity";
    case Status::kStructuralFailure: return "structural_failure";
    case Status::kFailedState: return "failed_state";
  }
  return "?";
}

}  // namespace backyard
