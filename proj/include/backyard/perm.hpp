// Usable under the terms in the Apache License, Version 2.0.
//
// Invertible permutations over integer universes [0, u):
//
//   PairwisePerm  - affine map x -> (a*x + b) mod p over a prime p >= u,
//                   restricted to [0, u) by cycle-walking. Exactly pairwise
//                   independent when p == u.
//   FeistelPerm   - one round (x_L, x_R) -> (x_L ^ f(x_R), x_R), or the
//                   additive variant (x_L + f(x_R)) mod m for non-power-of-two
//                   bin counts. The right part is always preserved.
//   SwapHalves    - (x_L, x_R) -> (x_R, x_L) over a square universe.
//   TabulatedPerm - explicit shuffled array; the truly-random oracle used in
//                   tests and in small-universe configurations.
//   ComposedPerm  - ordered composition of rounds.
//   CycleWalkPerm - restriction of a permutation over a larger universe to a
//                   prefix [0, u), by re-applying until the value lands inside.
//   ChoppedPerm   - splits pi(x) into (bin, quotient) = (pi(x) / (u/m),
//                   pi(x) mod (u/m)) and inverts the split.
//
// Naor-Reingold units (two pairwise permutations sandwiching two Feistel
// rounds with a half swap) and their KNR t-fold composition live here too.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "common.hpp"
#include "hash_family.hpp"
#include "snapshot.hpp"

namespace backyard {

class Perm {
 public:
  virtual ~Perm() = default;
  virtual u64 size() const = 0;
  virtual u64 apply(u64 x) const = 0;
  virtual u64 invert(u64 y) const = 0;
  virtual u64 descriptor_bits() const = 0;
  virtual void save(SnapshotWriter& w) const = 0;
};

using PermPtr = std::shared_ptr<const Perm>;

namespace perm_tag {
constexpr u32 kIdentity = 1;
constexpr u32 kPairwise = 2;
constexpr u32 kFeistel = 3;
constexpr u32 kSwap = 4;
constexpr u32 kTabulated = 5;
constexpr u32 kComposed = 6;
constexpr u32 kCycleWalk = 7;
}  // namespace perm_tag

class IdentityPerm final : public Perm {
 public:
  explicit IdentityPerm(u64 u) : u_(u) {}
  u64 size() const override { return u_; }
  u64 apply(u64 x) const override { return check(x); }
  u64 invert(u64 y) const override { return check(y); }
  u64 descriptor_bits() const override { return 64; }
  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kIdentity);
    w.put_u64(u_);
  }

 private:
  u64 check(u64 x) const {
    if (x >= u_) throw std::out_of_range("IdentityPerm: out of universe");
    return x;
  }
  u64 u_;
};

class PairwisePerm final : public Perm {
 public:
  // a != 0 for bijectivity; universe <= p, values outside [0, universe)
  // are walked through.
  PairwisePerm(u64 a, u64 b, u64 p, u64 universe) : a_(a), b_(b), p_(p), u_(universe) {
    if (a_ == 0 || a_ >= p_ || b_ >= p_) throw std::invalid_argument("PairwisePerm: bad coefficients");
    if (u_ == 0 || u_ > p_ || !is_prime(p_)) throw std::invalid_argument("PairwisePerm: bad modulus");
    a_inv_ = inv_mod_prime(a_, p_);
  }

  u64 size() const override { return u_; }

  u64 apply(u64 x) const override {
    if (x >= u_) throw std::out_of_range("PairwisePerm: out of universe");
    u64 y = step(x);
    while (y >= u_) y = step(y);
    return y;
  }

  u64 invert(u64 y) const override {
    if (y >= u_) throw std::out_of_range("PairwisePerm: out of universe");
    u64 x = unstep(y);
    while (x >= u_) x = unstep(x);
    return x;
  }

  u64 descriptor_bits() const override { return 4 * 64; }

  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kPairwise);
    w.put_u64(a_);
    w.put_u64(b_);
    w.put_u64(p_);
    w.put_u64(u_);
  }

 private:
  u64 step(u64 x) const { return add_mod(mul_mod(a_, x, p_), b_, p_); }
  u64 unstep(u64 y) const { return mul_mod(a_inv_, (y + p_ - b_) % p_, p_); }

  u64 a_, b_, p_, u_, a_inv_;
};

inline std::shared_ptr<PairwisePerm> sample_pairwise_perm(u64 universe, Rng& rng) {
  if (universe == 0) throw std::invalid_argument("sample_pairwise_perm: empty universe");
  u64 p = next_prime_at_least(universe);
  u64 a = 1 + uniform_below(rng, p - 1);
  u64 b = uniform_below(rng, p);
  return std::make_shared<PairwisePerm>(a, b, p, universe);
}

enum class FeistelMode : u32 { kXor = 0, kAdditive = 1 };

class FeistelPerm final : public Perm {
 public:
  FeistelPerm(KWiseHash f, u64 left_size, u64 right_size, FeistelMode mode)
      : f_(std::move(f)), m_(left_size), rs_(right_size), mode_(mode) {
    if (m_ == 0 || rs_ == 0) throw std::invalid_argument("FeistelPerm: empty part");
    if (mode_ == FeistelMode::kXor && !is_pow2(m_)) {
      throw std::invalid_argument("FeistelPerm: xor mode needs power-of-two left size");
    }
    if (f_.range != m_) throw std::invalid_argument("FeistelPerm: f range must equal left size");
    if (f_.universe < rs_) throw std::invalid_argument("FeistelPerm: f universe too small");
  }

  u64 size() const override { return m_ * rs_; }
  u64 left_size() const { return m_; }
  u64 right_size() const { return rs_; }
  const KWiseHash& round_function() const { return f_; }

  u64 apply(u64 x) const override {
    if (x >= size()) throw std::out_of_range("FeistelPerm: out of universe");
    u64 xl = x / rs_, xr = x % rs_;
    u64 yl = mode_ == FeistelMode::kXor ? (xl ^ f_(xr)) : add_mod(xl, f_(xr), m_);
    return yl * rs_ + xr;
  }

  u64 invert(u64 y) const override {
    if (y >= size()) throw std::out_of_range("FeistelPerm: out of universe");
    u64 yl = y / rs_, yr = y % rs_;
    u64 xl = mode_ == FeistelMode::kXor ? (yl ^ f_(yr)) : add_mod(yl, m_ - f_(yr), m_);
    return xl * rs_ + yr;
  }

  u64 descriptor_bits() const override { return f_.descriptor_bits() + 3 * 64; }

  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kFeistel);
    w.put_u64(m_);
    w.put_u64(rs_);
    w.put_u32(static_cast<u32>(mode_));
    w.put_u64(f_.p);
    w.put_u64(f_.range);
    w.put_u64(f_.universe);
    w.put_u64_vec(f_.coeffs);
  }

 private:
  KWiseHash f_;
  u64 m_, rs_;
  FeistelMode mode_;
};

class SwapHalvesPerm final : public Perm {
 public:
  explicit SwapHalvesPerm(u64 half) : half_(half) {
    if (half_ == 0) throw std::invalid_argument("SwapHalvesPerm: empty half");
  }
  u64 size() const override { return half_ * half_; }
  u64 apply(u64 x) const override {
    if (x >= size()) throw std::out_of_range("SwapHalvesPerm: out of universe");
    return (x % half_) * half_ + x / half_;
  }
  u64 invert(u64 y) const override { return apply(y); }
  u64 descriptor_bits() const override { return 64; }
  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kSwap);
    w.put_u64(half_);
  }

 private:
  u64 half_;
};

// Explicit permutation table with its inverse. Memory is 8 bytes per universe
// element, so this is only offered up to 2^20.
class TabulatedPerm final : public Perm {
 public:
  static constexpr u64 kMaxUniverse = 1ull << 20;

  explicit TabulatedPerm(std::vector<u32> fwd) : fwd_(std::move(fwd)) {
    if (fwd_.size() > kMaxUniverse) throw std::invalid_argument("TabulatedPerm: universe too large");
    inv_.assign(fwd_.size(), 0);
    std::vector<bool> seen(fwd_.size(), false);
    for (u64 x = 0; x < fwd_.size(); ++x) {
      u32 y = fwd_[x];
      if (y >= fwd_.size() || seen[y]) throw std::invalid_argument("TabulatedPerm: not a permutation");
      seen[y] = true;
      inv_[y] = static_cast<u32>(x);
    }
  }

  static std::shared_ptr<TabulatedPerm> sample(u64 universe, Rng& rng) {
    if (universe == 0 || universe > kMaxUniverse) {
      throw std::invalid_argument("TabulatedPerm: universe must be in [1, 2^20]");
    }
    std::vector<u32> fwd(universe);
    std::iota(fwd.begin(), fwd.end(), 0u);
    std::shuffle(fwd.begin(), fwd.end(), rng);
    return std::make_shared<TabulatedPerm>(std::move(fwd));
  }

  u64 size() const override { return fwd_.size(); }
  u64 apply(u64 x) const override {
    if (x >= fwd_.size()) throw std::out_of_range("TabulatedPerm: out of universe");
    return fwd_[x];
  }
  u64 invert(u64 y) const override {
    if (y >= inv_.size()) throw std::out_of_range("TabulatedPerm: out of universe");
    return inv_[y];
  }
  u64 descriptor_bits() const override {
    return static_cast<u64>(fwd_.size()) * static_cast<u64>(ceil_log2(fwd_.size()));
  }
  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kTabulated);
    w.put_u64(fwd_.size());
    for (u32 v : fwd_) w.put_u32(v);
  }

 private:
  std::vector<u32> fwd_, inv_;
};

class ComposedPerm final : public Perm {
 public:
  // Rounds are applied front to back; an empty list is the identity.
  ComposedPerm(u64 universe, std::vector<PermPtr> rounds)
      : u_(universe), rounds_(std::move(rounds)) {
    for (const auto& r : rounds_) {
      if (r->size() != u_) throw std::invalid_argument("ComposedPerm: round universe mismatch");
    }
  }

  u64 size() const override { return u_; }

  u64 apply(u64 x) const override {
    if (x >= u_) throw std::out_of_range("ComposedPerm: out of universe");
    for (const auto& r : rounds_) x = r->apply(x);
    return x;
  }

  u64 invert(u64 y) const override {
    if (y >= u_) throw std::out_of_range("ComposedPerm: out of universe");
    for (auto it = rounds_.rbegin(); it != rounds_.rend(); ++it) y = (*it)->invert(y);
    return y;
  }

  u64 descriptor_bits() const override {
    u64 bits = 64;
    for (const auto& r : rounds_) bits += r->descriptor_bits();
    return bits;
  }

  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kComposed);
    w.put_u64(u_);
    w.put_u64(rounds_.size());
    for (const auto& r : rounds_) r->save(w);
  }

  const std::vector<PermPtr>& rounds() const { return rounds_; }

 private:
  u64 u_;
  std::vector<PermPtr> rounds_;
};

class CycleWalkPerm final : public Perm {
 public:
  CycleWalkPerm(PermPtr inner, u64 universe) : inner_(std::move(inner)), u_(universe) {
    if (u_ == 0 || u_ > inner_->size()) throw std::invalid_argument("CycleWalkPerm: bad universe");
  }

  u64 size() const override { return u_; }

  u64 apply(u64 x) const override {
    if (x >= u_) throw std::out_of_range("CycleWalkPerm: out of universe");
    u64 y = inner_->apply(x);
    while (y >= u_) y = inner_->apply(y);
    return y;
  }

  u64 invert(u64 y) const override {
    if (y >= u_) throw std::out_of_range("CycleWalkPerm: out of universe");
    u64 x = inner_->invert(y);
    while (x >= u_) x = inner_->invert(x);
    return x;
  }

  u64 descriptor_bits() const override { return inner_->descriptor_bits() + 64; }

  void save(SnapshotWriter& w) const override {
    w.put_u32(perm_tag::kCycleWalk);
    w.put_u64(u_);
    inner_->save(w);
  }

 private:
  PermPtr inner_;
  u64 u_;
};

inline PermPtr load_perm(SnapshotReader& r) {
  u32 tag = r.get_u32();
  switch (tag) {
    case perm_tag::kIdentity:
      return std::make_shared<IdentityPerm>(r.get_u64());
    case perm_tag::kPairwise: {
      u64 a = r.get_u64(), b = r.get_u64(), p = r.get_u64(), u = r.get_u64();
      return std::make_shared<PairwisePerm>(a, b, p, u);
    }
    case perm_tag::kFeistel: {
      u64 m = r.get_u64(), rs = r.get_u64();
      auto mode = static_cast<FeistelMode>(r.get_u32());
      KWiseHash f;
      f.p = r.get_u64();
      f.range = r.get_u64();
      f.universe = r.get_u64();
      f.coeffs = r.get_u64_vec();
      return std::make_shared<FeistelPerm>(std::move(f), m, rs, mode);
    }
    case perm_tag::kSwap:
      return std::make_shared<SwapHalvesPerm>(r.get_u64());
    case perm_tag::kTabulated: {
      u64 n = r.get_u64();
      std::vector<u32> fwd(n);
      for (u64 i = 0; i < n; ++i) fwd[i] = r.get_u32();
      return std::make_shared<TabulatedPerm>(std::move(fwd));
    }
    case perm_tag::kComposed: {
      u64 u = r.get_u64();
      u64 n = r.get_u64();
      std::vector<PermPtr> rounds;
      rounds.reserve(n);
      for (u64 i = 0; i < n; ++i) rounds.push_back(load_perm(r));
      return std::make_shared<ComposedPerm>(u, std::move(rounds));
    }
    case perm_tag::kCycleWalk: {
      u64 u = r.get_u64();
      PermPtr inner = load_perm(r);
      return std::make_shared<CycleWalkPerm>(std::move(inner), u);
    }
    default:
      throw std::runtime_error("load_perm: unknown tag");
  }
}

// ---------------------------------------------------------------------------
// Universe truncation for divisibility.

struct TruncatedUniverse {
  u64 u_prime;      // largest multiple of m that is <= u; u_prime > u - m
  u64 ignored_lo;   // == u_prime
  u64 ignored_hi;   // == u; the ignored range is [ignored_lo, ignored_hi)
  bool has_ignored() const { return ignored_lo < ignored_hi; }
};

inline TruncatedUniverse truncate_universe(u64 u, u64 m) {
  if (m == 0) throw std::invalid_argument("truncate_universe: m must be positive");
  if (m > u) throw std::invalid_argument("truncate_universe: m exceeds universe");
  u64 up = u - (u % m);
  return TruncatedUniverse{up, up, u};
}

// ---------------------------------------------------------------------------
// Chopped permutation: bin index is the high part of pi(x), the quotient is
// the low part. Requires m to divide the inner universe; inputs at or above
// the inner universe (the truncated range) yield no (bin, quotient) and the
// caller routes them to its side structure.

struct BinQuotient {
  u64 bin;
  u64 quotient;
  bool operator==(const BinQuotient&) const = default;
};

class ChoppedPerm {
 public:
  ChoppedPerm(PermPtr inner, u64 m, u64 original_universe)
      : inner_(std::move(inner)), m_(m), orig_u_(original_universe) {
    if (m_ == 0 || inner_->size() % m_ != 0) {
      throw std::invalid_argument("ChoppedPerm: m must divide inner universe");
    }
    if (orig_u_ < inner_->size()) throw std::invalid_argument("ChoppedPerm: original universe too small");
    q_ = inner_->size() / m_;
  }

  ChoppedPerm(PermPtr inner, u64 m) : ChoppedPerm(inner, m, inner ? inner->size() : 0) {}

  u64 bins() const { return m_; }
  u64 quotient_space() const { return q_; }
  u64 inner_universe() const { return inner_->size(); }
  const PermPtr& inner() const { return inner_; }

  std::optional<BinQuotient> chop(u64 x) const {
    if (x >= orig_u_) throw std::out_of_range("ChoppedPerm: out of universe");
    if (x >= inner_->size()) return std::nullopt;  // ignored: second-level element
    u64 y = inner_->apply(x);
    return BinQuotient{y / q_, y % q_};
  }

  u64 unchop(u64 bin, u64 quotient) const {
    if (bin >= m_ || quotient >= q_) throw std::out_of_range("ChoppedPerm: bad (bin, quotient)");
    return inner_->invert(bin * q_ + quotient);
  }

 private:
  PermPtr inner_;
  u64 m_, q_, orig_u_;
};

// ---------------------------------------------------------------------------
// Naor-Reingold style units and KNR composition.

// Statistical-distance bound for a single unit on k points over {0,1}^w.
inline double nr_unit_delta(u64 k, int universe_bits) {
  double k2 = static_cast<double>(k) * static_cast<double>(k);
  return k2 / std::ldexp(1.0, universe_bits / 2) + k2 / std::ldexp(1.0, universe_bits);
}

// Minimal t with (1/2)(2*delta)^t <= target, compared with a hair of
// relative tolerance so exact-boundary targets round down. Unreachable
// targets throw.
inline int knr_rounds(double delta, double target) {
  if (!(delta > 0) || !(target > 0)) throw std::invalid_argument("knr_rounds: bounds must be positive");
  double tol = target * (1.0 + 1e-9);
  if (0.5 * 2.0 * delta <= tol) return 1;
  if (2.0 * delta >= 1.0) {
    throw std::invalid_argument("knr_rounds: target unreachable, composition does not contract");
  }
  int t = 1;
  double bound = 0.5 * 2.0 * delta;
  while (bound > tol) {
    bound *= 2.0 * delta;
    ++t;
    if (t > 256) throw std::invalid_argument("knr_rounds: target underflows");
  }
  return t;
}

// One unit: P2 o Feistel(g2) o swap o Feistel(g1) o P1, all over {0,1}^w with
// w even, g1 and g2 k-wise over the half domain.
inline PermPtr nr_unit(u64 k, int universe_bits, Rng& rng) {
  if (universe_bits < 2 || universe_bits % 2 != 0 || universe_bits > 62) {
    throw std::invalid_argument("nr_unit: universe bits must be even and in [2, 62]");
  }
  if (k < 2) throw std::invalid_argument("nr_unit: k must be >= 2");
  u64 u = 1ull << universe_bits;
  u64 half = 1ull << (universe_bits / 2);
  auto g1 = sample_kwise(k, half, half, rng);
  auto g2 = sample_kwise(k, half, half, rng);
  std::vector<PermPtr> rounds;
  rounds.push_back(sample_pairwise_perm(u, rng));
  rounds.push_back(std::make_shared<FeistelPerm>(std::move(g1), half, half, FeistelMode::kXor));
  rounds.push_back(std::make_shared<SwapHalvesPerm>(half));
  rounds.push_back(std::make_shared<FeistelPerm>(std::move(g2), half, half, FeistelMode::kXor));
  rounds.push_back(sample_pairwise_perm(u, rng));
  return std::make_shared<ComposedPerm>(u, std::move(rounds));
}

// t independent units composed. Used directly when the caller fixes t.
inline PermPtr nr_composed(u64 k, int t, int universe_bits, Rng& rng) {
  if (t < 1) throw std::invalid_argument("nr_composed: t must be >= 1");
  std::vector<PermPtr> units;
  units.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) units.push_back(nr_unit(k, universe_bits, rng));
  if (t == 1) return units[0];
  return std::make_shared<ComposedPerm>(1ull << universe_bits, std::move(units));
}

// Composition depth chosen from the target: minimal t with
// (1/2)(2*delta)^t <= delta_target for the unit delta at this (k, w).
inline PermPtr nr_perm_new(u64 k, double delta_target, int universe_bits, Rng& rng) {
  double delta = nr_unit_delta(k, universe_bits);
  int t = knr_rounds(delta, delta_target);
  return nr_composed(k, t, universe_bits, rng);
}

// NR permutation restricted to an arbitrary universe by cycle-walking over
// the smallest even-exponent power of two that covers it.
inline PermPtr nr_perm_for_universe(u64 universe, u64 k, int t, Rng& rng) {
  if (universe < 4) throw std::invalid_argument("nr_perm_for_universe: universe too small");
  int w = ceil_log2(universe);
  if (w % 2 != 0) ++w;
  PermPtr inner = nr_composed(k, t, w, rng);
  if (inner->size() == universe) return inner;
  return std::make_shared<CycleWalkPerm>(std::move(inner), universe);
}

}  // namespace backyard
