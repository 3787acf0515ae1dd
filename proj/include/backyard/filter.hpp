// Usable under the terms in the Apache License, Version 2.0.
//
// Approximate set membership: a universal hash compresses the universe to
// ceil(n / delta) values and an exact dictionary stores the hashed set. A
// negative answer is always right; a positive answer is wrong only when the
// queried key collides with a member under h, which happens with probability
// at most delta over the choice of h.

#pragma once

#include <memory>
#include <unordered_set>

#include "backyard.hpp"
#include "common.hpp"
#include "hash_family.hpp"
#include "succinct.hpp"

namespace backyard {

enum class FilterBackend : u32 { kSuccinct = 0, kBackyard = 1 };

enum class FilterQuery : u32 { kDefinitelyAbsent = 0, kMaybePresent = 1 };

class MembershipFilter {
 public:
  MembershipFilter(u64 universe, u64 n, double delta, Rng& rng,
                   FilterBackend backend = FilterBackend::kSuccinct)
      : n_(n), delta_(delta), backend_(backend) {
    if (n == 0) throw std::invalid_argument("MembershipFilter: n must be positive");
    if (!(delta > 0.0) || !(delta < 1.0)) {
      throw std::invalid_argument("MembershipFilter: delta must lie in (0, 1)");
    }
    reduced_universe_ = static_cast<u64>(std::ceil(static_cast<double>(n) / delta));
    if (reduced_universe_ < n) reduced_universe_ = n;  // ceil(n/delta) >= n always
    h_ = sample_pairwise(universe, reduced_universe_, rng);
    if (backend_ == FilterBackend::kSuccinct) {
      // just enough outer bins to keep each per-bin universe within the
      // tabulated-permutation range; one bin when the reduced universe
      // already fits
      SuccinctOverrides ov;
      ov.m_outer = next_pow2(ceil_div(reduced_universe_, TabulatedPerm::kMaxUniverse));
      auto p = SuccinctParams::derive(reduced_universe_, n, 0.0, 0.25, ov);
      succinct_ = std::make_unique<SuccinctDict>(p, SuccinctPermMode::kAuto,
                                                 InnerBinMode::kPlainCells, rng);
    } else {
      auto p = BackyardParams::derive(n, 0.25, 2.0, reduced_universe_);
      backyard_ =
          std::make_unique<BackyardDict>(p, BinMode::kPlain, CuckooMode::kFunction, rng);
    }
  }

  u64 reduced_universe() const { return reduced_universe_; }
  u64 capacity() const { return n_; }
  double delta() const { return delta_; }
  const PairwiseHash& reducer() const { return h_; }
  u64 distinct_hashed() const { return dict_size(); }
  bool failed() const { return succinct_ ? succinct_->failed() : backyard_->failed(); }

  Status insert(u64 x) {
    u64 hx = h_(x);
    // capacity is governed by distinct hashed values: the dictionary stores
    // the set h(S), and duplicates under h are no-ops
    if (dict_lookup(hx)) return Status::kOk;
    if (dict_size() >= n_) return Status::kCapacity;
    return dict_insert(hx);
  }

  FilterQuery query(u64 x) const {
    return dict_lookup(h_(x)) ? FilterQuery::kMaybePresent : FilterQuery::kDefinitelyAbsent;
  }

  // Audited bits of the underlying dictionary plus the reducer descriptor.
  u64 bits_used() const {
    u64 bits = 4 * 64;  // (a, b, p, range) of the universal hash
    if (succinct_) {
      bits += succinct_->bits_used().bits_total;
    } else {
      bits += backyard_->space_words().total() * 64;
    }
    return bits;
  }

  const SuccinctDict* succinct() const { return succinct_.get(); }
  const BackyardDict* backyard() const { return backyard_.get(); }

 private:
  bool dict_lookup(u64 hx) const {
    return succinct_ ? succinct_->lookup(hx) : backyard_->lookup(hx);
  }
  Status dict_insert(u64 hx) {
    return succinct_ ? succinct_->insert(hx) : backyard_->insert(hx);
  }
  u64 dict_size() const { return succinct_ ? succinct_->size() : backyard_->size(); }

  u64 n_;
  double delta_;
  FilterBackend backend_;
  u64 reduced_universe_ = 0;
  PairwiseHash h_;
  std::unique_ptr<SuccinctDict> succinct_;
  std::unique_ptr<BackyardDict> backyard_;
};

}  // namespace backyard
