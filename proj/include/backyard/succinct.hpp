// Usable under the terms in the Apache License, Version 2.0.
//
// Succinct dictionary: keys are split by a one-round Feistel permutation into
// m_outer bins; inside each bin the key's low coordinate runs through a
// shared chopped permutation whose high part picks a first-level bin and
// whose low part (the quotient) is all that gets stored. Overflowing
// elements go to a per-bin permutation-mode cuckoo table storing identities
// of log2(u/r) bits, with the kick-back hook returning them to the first
// level when space opens up. Three shared permutations serve all bins: one
// for the first-level chop and two for the cuckoo tables.
//
// Universe truncation keeps every divisibility constraint honest: the outer
// split needs m_outer | u, the chop needs m_in | u_bin, and the cuckoo needs
// r | u_bin. Keys falling in a truncated range are routed to a small side
// table holding full keys, allocated on first use.
//
// The bit audit charges the canonical stored layout: packed quotient cells
// (plus an occupancy bitmap only when no spare code exists to mark empties),
// cuckoo identity cells, queue occupancy, the side table, and the explicit
// small descriptors. The three shared permutations are reported separately:
// in tabulated mode they stand in for the ideal random permutations, and at
// these scales no instantiation has a description that is small relative to
// the information bound.

#pragma once

#include <functional>
#include <memory>
#include <numeric>

#include "backyard.hpp"
#include "binom.hpp"
#include "bins.hpp"
#include "common.hpp"
#include "cuckoo.hpp"
#include "hash_family.hpp"
#include "perm.hpp"
#include "snapshot.hpp"

namespace backyard {

enum class SuccinctPermMode : u32 { kAuto = 0, kTabulated = 1, kNaorReingold = 2 };
enum class InnerBinMode : u32 { kPlainCells = 0, kPerfectHash = 1, kBinomial = 2 };

struct SuccinctOverrides {
  u64 m_outer = 0;
  u64 d_outer = 0;
  u64 d_in = 0;
  u64 m_in = 0;
  u64 ell_in = 0;
  u64 L = 0;
  u64 L_bin = 0;
  std::size_t k_outer = 0;
  u64 k_perm = 0;
  int nr_rounds = 0;
};

struct SuccinctParams {
  u64 u = 0;
  u64 n = 0;
  double gamma = 0.9;
  double eps = 0.25;
  double c = 2.0;
  double fill_slack = 0.2;

  u64 m_outer = 1;       // power of two
  u64 u_outer_trunc = 0; // largest multiple of m_outer <= u
  u64 u_bin = 0;         // per-bin universe u_outer_trunc / m_outer
  u64 mu = 0;            // mean outer load n / m_outer, rounded up
  u64 d_outer = 0;       // outer capacity bound: mu + 4 sqrt(mu ln m_outer)
  u64 basis = 0;         // first-level design size max((1+eps/2) mu, d_outer)
  u64 d_in = 0;
  u64 m_in = 0;
  u64 ell_in = 0;
  u64 r_in = 0;          // cuckoo cells per table, divides u_bin_trunc
  u64 u_bin_trunc = 0;   // largest feasible multiple of lcm(m_in, r_in)
  u64 quotient_space = 0;
  int quotient_bits = 0;
  u64 id_space = 0;
  int id_bits = 0;
  u64 L = 10;
  u64 L_bin = 32;
  std::size_t k_outer = 64;
  u64 k_perm = 0;
  int nr_rounds = 2;
  u64 cuckoo_queue_capacity = 0;
  u64 bin_queue_capacity = 0;

  static SuccinctParams derive(u64 u, u64 n, double gamma, double eps,
                               const SuccinctOverrides& ov = {}) {
    if (n == 0 || u < n) throw std::invalid_argument("SuccinctParams: need u >= n >= 1");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("SuccinctParams: gamma in [0,1)");
    if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("SuccinctParams: eps in (0,1)");
    SuccinctParams p;
    p.u = u;
    p.n = n;
    p.gamma = gamma;
    p.eps = eps;
    if (ov.L) p.L = ov.L;
    if (ov.L_bin) p.L_bin = ov.L_bin;
    if (ov.nr_rounds) p.nr_rounds = ov.nr_rounds;

    double target = std::pow(static_cast<double>(n), gamma);
    p.m_outer = ov.m_outer ? ov.m_outer : next_pow2(static_cast<u64>(std::ceil(target - 1e-9)));
    if (!is_pow2(p.m_outer)) throw std::invalid_argument("SuccinctParams: m_outer must be a power of two");
    if (p.m_outer > u / 2 && p.m_outer > 1) {
      throw std::invalid_argument("SuccinctParams: outer split larger than universe");
    }

    p.u_outer_trunc = u - (u % p.m_outer);
    p.u_bin = p.u_outer_trunc / p.m_outer;
    if (p.u_bin < 2) throw std::invalid_argument("SuccinctParams: per-bin universe too small");

    p.mu = ceil_div(n, p.m_outer);
    u64 dev = 0;
    if (p.m_outer > 1) {
      double louter = std::log(static_cast<double>(p.m_outer));
      dev = static_cast<u64>(std::ceil(4.0 * std::sqrt(static_cast<double>(p.mu) * louter)));
    }
    p.d_outer = ov.d_outer ? ov.d_outer : p.mu + dev;
    p.d_outer = std::min(p.d_outer, p.u_bin);

    u64 mean_based = static_cast<u64>(std::ceil((1.0 + eps / 2.0) * static_cast<double>(p.mu)));
    p.basis = std::max(mean_based, p.d_outer);

    u64 formula_d = static_cast<u64>(std::ceil(p.c * std::log2(1.0 / eps) / (eps * eps)));
    p.d_in = ov.d_in ? ov.d_in : std::min<u64>(formula_d, p.basis);
    if (p.d_in == 0) p.d_in = 1;
    p.m_in = ov.m_in ? ov.m_in : ceil_div(p.basis, p.d_in);
    if (p.m_in == 0) p.m_in = 1;
    if (p.m_in > p.u_bin) {
      throw std::invalid_argument("SuccinctParams: inner bins exceed per-bin universe");
    }

    p.ell_in = ov.ell_in ? ov.ell_in
                         : std::max<u64>(1, static_cast<u64>(std::ceil(
                                                eps * static_cast<double>(p.basis) / 16.0)));
    u64 r_min = static_cast<u64>(std::ceil((1.0 + p.fill_slack) * static_cast<double>(p.ell_in)));
    if (r_min < 2) r_min = 2;

    // Pick r >= r_min minimizing the audited footprint of the cuckoo cells.
    // Both m_in and r must divide the truncated universe, so candidates are
    // scored on their identity width (plus the occupancy bitmap when the
    // identity space leaves no spare code for "empty"); ties prefer less
    // universe truncation, then smaller tables.
    u64 best_r = 0, best_trunc = 0, best_score = ~0ull;
    for (u64 r = r_min; r <= r_min + 4 * p.m_in + 64; ++r) {
      u64 l = p.m_in / gcd_u64(p.m_in, r) * r;
      if (l > p.u_bin) continue;
      u64 trunc = p.u_bin - (p.u_bin % l);
      if (trunc < std::max(p.m_in, r)) continue;
      u64 ids = trunc / r;
      int idb = ceil_log2(ids);
      bool spare = ids < (idb >= 64 ? ~0ull : (1ull << idb));
      u64 score = 2 * r * static_cast<u64>(idb) + (spare ? 0 : 2 * r);
      if (score < best_score || (score == best_score && trunc > best_trunc)) {
        best_score = score;
        best_trunc = trunc;
        best_r = r;
      }
    }
    if (best_r == 0) throw std::invalid_argument("SuccinctParams: no feasible cuckoo table size");
    p.r_in = best_r;
    p.u_bin_trunc = best_trunc;
    if (p.u_bin_trunc < p.m_in || p.u_bin_trunc < p.r_in) {
      throw std::invalid_argument("SuccinctParams: truncated universe too small");
    }

    p.quotient_space = p.u_bin_trunc / p.m_in;
    p.quotient_bits = ceil_log2(p.quotient_space);
    p.id_space = p.u_bin_trunc / p.r_in;
    p.id_bits = ceil_log2(p.id_space);
    p.k_outer = ov.k_outer ? ov.k_outer : std::min<u64>(64, std::max<u64>(2, p.d_outer));
    p.k_perm = ov.k_perm ? ov.k_perm : std::max<u64>(2, p.d_outer);
    p.cuckoo_queue_capacity = CuckooTable::default_queue_capacity(p.ell_in);
    p.bin_queue_capacity = 4 * static_cast<u64>(ceil_log2(std::max<u64>(2, p.basis))) + 8;
    return p;
  }
};

// ---------------------------------------------------------------------------
// First-level quotient stores.

class QuotientStore {
 public:
  virtual ~QuotientStore() = default;
  virtual bool lookup(u64 bin, u64 q) const = 0;
  virtual Status insert(u64 bin, u64 q) = 0;
  virtual Status erase(u64 bin, u64 q) = 0;
  virtual u64 live(u64 bin) const = 0;
  virtual u64 capacity() const = 0;
  virtual void for_each(u64 bin, const std::function<void(u64)>& fn) const = 0;
  virtual void drive() {}
  virtual bool failed() const { return false; }
  virtual u64 stored_bits() const = 0;      // canonical layout, audit-facing
  virtual u64 descriptor_bits() const { return 0; }
  virtual u64 queue_length() const { return 0; }
  virtual u64 queue_high_water() const { return 0; }
  virtual u64 steps_last_op() const { return 0; }
  virtual void save(SnapshotWriter& w) = 0;
  virtual void restore(SnapshotReader& r) = 0;
};

class CellQuotientStore final : public QuotientStore {
 public:
  CellQuotientStore(u64 bins, u64 d, u64 quotient_space)
      : table_(bins, d, ceil_log2(quotient_space)), qspace_(quotient_space) {}

  bool lookup(u64 bin, u64 q) const override { return table_.find(bin, q) != table_.capacity(); }

  Status insert(u64 bin, u64 q) override {
    switch (table_.insert(bin, q)) {
      case BinInsert::kInserted: return Status::kOk;
      case BinInsert::kDuplicate: return Status::kDuplicate;
      case BinInsert::kBinFull: return Status::kBinFull;
    }
    return Status::kBinFull;
  }

  Status erase(u64 bin, u64 q) override {
    return table_.erase(bin, q) ? Status::kOk : Status::kAbsent;
  }

  u64 live(u64 bin) const override { return table_.live(bin); }
  u64 capacity() const override { return table_.capacity(); }

  void for_each(u64 bin, const std::function<void(u64)>& fn) const override {
    for (u64 s = 0; s < table_.capacity(); ++s) {
      if (table_.slot_occupied(bin, s) && !table_.slot_tombstoned(bin, s)) {
        fn(table_.slot_value(bin, s));
      }
    }
  }

  u64 stored_bits() const override {
    u64 cells = table_.bins() * table_.capacity();
    u64 bits = cells * static_cast<u64>(table_.cell_bits());
    bool spare_code = qspace_ < (table_.cell_bits() >= 64 ? ~0ull : (1ull << table_.cell_bits()));
    if (!spare_code) bits += cells;  // bitmap needed when every code is live
    return bits;
  }

  u64 steps_last_op() const override { return table_.capacity(); }

  void save(SnapshotWriter& w) override { table_.save(w); }
  void restore(SnapshotReader& r) override { table_.restore(r); }

  const BinTable& table() const { return table_; }

 private:
  BinTable table_;
  u64 qspace_;
};

class PhfQuotientStore final : public QuotientStore {
 public:
  PhfQuotientStore(u64 bins, u64 d, u64 quotient_space, u64 step_budget, u64 queue_capacity,
                   Rng& rng)
      : qspace_(quotient_space) {
    PhfBinDirectory::Config cfg;
    cfg.bins = bins;
    cfg.capacity = d;
    cfg.cell_bits = ceil_log2(quotient_space);
    cfg.step_budget = step_budget;
    cfg.queue_capacity = queue_capacity;
    cfg.universe = quotient_space;
    dir_ = std::make_unique<PhfBinDirectory>(cfg, rng);
  }

  bool lookup(u64 bin, u64 q) const override { return dir_->lookup(bin, q); }
  Status insert(u64 bin, u64 q) override { return dir_->insert_nodrain(bin, q); }
  Status erase(u64 bin, u64 q) override { return dir_->erase(bin, q); }
  u64 live(u64 bin) const override { return dir_->effective_live(bin); }
  u64 capacity() const override { return dir_->table().capacity(); }

  void for_each(u64 bin, const std::function<void(u64)>& fn) const override {
    const BinTable& t = dir_->table();
    for (u64 s = 0; s < t.capacity(); ++s) {
      if (t.slot_occupied(bin, s) && !t.slot_tombstoned(bin, s)) fn(t.slot_value(bin, s));
    }
  }

  void drive() override { dir_->process(dir_->config().step_budget); }
  bool failed() const override { return dir_->failed(); }

  u64 stored_bits() const override {
    const BinTable& t = dir_->table();
    u64 cells = t.bins() * t.capacity();
    u64 bits = cells * static_cast<u64>(t.cell_bits());
    bool spare_code = qspace_ < (t.cell_bits() >= 64 ? ~0ull : (1ull << t.cell_bits()));
    if (!spare_code) bits += cells;
    return bits;
  }

  u64 descriptor_bits() const override {
    u64 bits = 0;
    for (u64 b = 0; b < dir_->table().bins(); ++b) {
      bits += dir_->bin_hash(b).descriptor_bits(dir_->table().capacity());
    }
    return bits;
  }

  u64 queue_length() const override { return dir_->queue_length(); }
  u64 queue_high_water() const override { return dir_->queue_high_water(); }
  u64 steps_last_op() const override { return dir_->steps().last_op; }

  void save(SnapshotWriter& w) override {
    while (!dir_->idle() && !dir_->failed()) dir_->process(1024);
    dir_->save(w);
  }
  void restore(SnapshotReader& r) override { dir_->restore(r); }

  const PhfBinDirectory& directory() const { return *dir_; }

 private:
  std::unique_ptr<PhfBinDirectory> dir_;
  u64 qspace_;
};

// Information-theoretic bin encoding: each bin is one packed record holding a
// count and the colex rank of its quotient set. Feasible only for small bins.
class BinomialQuotientStore final : public QuotientStore {
 public:
  BinomialQuotientStore(u64 bins, u64 d, u64 quotient_space)
      : bins_(bins), d_(d), codec_(quotient_space, static_cast<unsigned>(d)) {
    if (d > 8) throw std::invalid_argument("BinomialQuotientStore: d capped at 8");
    count_bits_ = ceil_log2(d + 1);
    rank_bits_ = codec_.rank_bits(static_cast<unsigned>(d));
    record_bits_ = count_bits_ + rank_bits_;
    bits_ = Bitmap(bins_ * static_cast<u64>(record_bits_));
  }

  bool lookup(u64 bin, u64 q) const override {
    auto set = decode(bin);
    return std::binary_search(set.begin(), set.end(), q);
  }

  Status insert(u64 bin, u64 q) override {
    auto set = decode(bin);
    auto it = std::lower_bound(set.begin(), set.end(), q);
    if (it != set.end() && *it == q) return Status::kDuplicate;
    if (set.size() >= d_) return Status::kBinFull;
    set.insert(it, q);
    encode(bin, set);
    return Status::kOk;
  }

  Status erase(u64 bin, u64 q) override {
    auto set = decode(bin);
    auto it = std::lower_bound(set.begin(), set.end(), q);
    if (it == set.end() || *it != q) return Status::kAbsent;
    set.erase(it);
    encode(bin, set);
    return Status::kOk;
  }

  u64 live(u64 bin) const override { return read_bits(bin * record_bits_, count_bits_); }
  u64 capacity() const override { return d_; }

  void for_each(u64 bin, const std::function<void(u64)>& fn) const override {
    for (u64 q : decode(bin)) fn(q);
  }

  u64 stored_bits() const override { return bins_ * static_cast<u64>(record_bits_); }
  u64 steps_last_op() const override { return d_; }

  void save(SnapshotWriter& w) override {
    w.put_u64(bins_);
    w.put_u64(d_);
    w.put_u64_vec(bits_.words());
  }
  void restore(SnapshotReader& r) override {
    if (r.get_u64() != bins_ || r.get_u64() != d_) {
      throw std::runtime_error("BinomialQuotientStore: geometry mismatch");
    }
    bits_.words() = r.get_u64_vec();
  }

 private:
  std::vector<u64> decode(u64 bin) const {
    u64 base = bin * record_bits_;
    unsigned count = static_cast<unsigned>(read_bits(base, count_bits_));
    U256 rank;
    for (int off = 0; off < rank_bits_; off += 64) {
      int chunk = std::min(64, rank_bits_ - off);
      rank.set_bits(off, chunk, read_bits(base + count_bits_ + off, chunk));
    }
    return codec_.unrank(rank, count);
  }

  void encode(u64 bin, const std::vector<u64>& set) {
    u64 base = bin * record_bits_;
    write_bits(base, count_bits_, set.size());
    U256 rank = codec_.rank(set);
    for (int off = 0; off < rank_bits_; off += 64) {
      int chunk = std::min(64, rank_bits_ - off);
      write_bits(base + count_bits_ + off, chunk, rank.bits(off, chunk));
    }
  }

  u64 read_bits(u64 base, int count) const {
    u64 v = 0;
    for (int i = 0; i < count; ++i) v |= static_cast<u64>(bits_.get(base + i)) << i;
    return v;
  }

  void write_bits(u64 base, int count, u64 v) {
    for (int i = 0; i < count; ++i) bits_.set(base + i, (v >> i) & 1);
  }

  u64 bins_, d_;
  SubsetCodec codec_;
  int count_bits_ = 0, rank_bits_ = 0, record_bits_ = 0;
  Bitmap bits_;
};

// ---------------------------------------------------------------------------

struct SpaceAudit {
  u64 bits_first_level = 0;
  u64 bits_second_level = 0;
  u64 bits_side = 0;
  u64 bits_descriptors = 0;
  u64 bits_shared_perms = 0;  // reported, not part of bits_total (see header)
  u64 bits_total = 0;
  u64 info_bound = 0;
  double ratio = 0.0;
};

class SuccinctDict {
 public:
  SuccinctDict(const SuccinctParams& params, SuccinctPermMode perm_mode, InnerBinMode bin_mode,
               Rng& rng)
      : p_(params), bin_mode_(bin_mode) {
    perm_mode_ = perm_mode;
    if (perm_mode_ == SuccinctPermMode::kAuto) {
      perm_mode_ = p_.u_bin_trunc <= TabulatedPerm::kMaxUniverse ? SuccinctPermMode::kTabulated
                                                                 : SuccinctPermMode::kNaorReingold;
    }
    if (perm_mode_ == SuccinctPermMode::kTabulated && p_.u_bin_trunc > TabulatedPerm::kMaxUniverse) {
      throw std::invalid_argument("SuccinctDict: tabulated permutations need per-bin universe <= 2^20");
    }
    if (p_.m_outer > 1) {
      outer_f_ = sample_kwise(p_.k_outer, p_.u_bin, p_.m_outer, rng);
      outer_xor_ = is_pow2(p_.m_outer) && is_pow2(p_.u_bin);
    }
    auto make_perm = [&]() -> PermPtr {
      if (perm_mode_ == SuccinctPermMode::kTabulated) {
        return TabulatedPerm::sample(p_.u_bin_trunc, rng);
      }
      return nr_perm_for_universe(p_.u_bin_trunc, p_.k_perm, p_.nr_rounds, rng);
    };
    pi0_ = make_perm();
    pi1_ = make_perm();
    pi2_ = make_perm();
    chopped_ = std::make_unique<ChoppedPerm>(pi0_, p_.m_in, p_.u_bin);

    u64 total_bins = p_.m_outer * p_.m_in;
    switch (bin_mode_) {
      case InnerBinMode::kPlainCells:
        store_ = std::make_unique<CellQuotientStore>(total_bins, p_.d_in, p_.quotient_space);
        break;
      case InnerBinMode::kPerfectHash:
        store_ = std::make_unique<PhfQuotientStore>(total_bins, p_.d_in, p_.quotient_space,
                                                    p_.L_bin, p_.bin_queue_capacity, rng);
        break;
      case InnerBinMode::kBinomial:
        store_ = std::make_unique<BinomialQuotientStore>(total_bins, p_.d_in, p_.quotient_space);
        break;
    }

    cuckoos_.reserve(p_.m_outer);
    for (u64 o = 0; o < p_.m_outer; ++o) {
      CuckooConfig cfg;
      cfg.capacity = p_.ell_in;
      cfg.r_override = p_.r_in;
      cfg.move_budget = p_.L;
      cfg.queue_capacity = p_.cuckoo_queue_capacity;
      cfg.universe = p_.u_bin_trunc;
      cuckoos_.push_back(std::make_unique<CuckooTable>(cfg, pi1_, pi2_));
      cuckoos_.back()->set_hook([this, o](u64 xr) { return hook_place(o, xr); });
    }
    outer_live_.assign(p_.m_outer, 0);
    side_rng_ = rng;
  }

  SuccinctDict(const SuccinctDict&) = delete;
  SuccinctDict& operator=(const SuccinctDict&) = delete;

  const SuccinctParams& params() const { return p_; }
  SuccinctPermMode perm_mode() const { return perm_mode_; }
  InnerBinMode bin_mode() const { return bin_mode_; }
  u64 size() const { return live_; }
  bool failed() const { return failed_; }
  const QuotientStore& store() const { return *store_; }
  const CuckooTable& cuckoo(u64 outer_bin) const { return *cuckoos_[outer_bin]; }
  const CuckooTable* side() const { return side_.get(); }
  u64 outer_live(u64 o) const { return outer_live_[o]; }
  const StepCounter& steps() const { return steps_; }

  // Outer routing: bin index and the unchanged low coordinate.
  std::pair<u64, u64> outer_split(u64 x) const {
    if (p_.m_outer == 1) return {0, x};
    u64 xl = x / p_.u_bin, xr = x % p_.u_bin;
    u64 o = outer_xor_ ? (xl ^ outer_f_(xr)) : add_mod(xl, outer_f_(xr), p_.m_outer);
    return {o, xr};
  }

  // Inverse of outer_split: the full key of coordinate xr living in bin o.
  u64 reconstruct_key(u64 o, u64 xr) const {
    if (p_.m_outer == 1) return xr;
    u64 xl = outer_xor_ ? (o ^ outer_f_(xr)) : add_mod(o, p_.m_outer - outer_f_(xr), p_.m_outer);
    return xl * p_.u_bin + xr;
  }

  const ChoppedPerm& chopped() const { return *chopped_; }

  bool lookup(u64 x) const {
    check_key(x);
    if (x >= p_.u_outer_trunc) return side_lookup(x);
    auto [o, xr] = outer_split(x);
    if (xr >= p_.u_bin_trunc) return side_lookup(x);
    auto bq = chopped_->chop(xr);
    if (store_->lookup(o * p_.m_in + bq->bin, bq->quotient)) return true;
    return cuckoos_[o]->lookup(xr);
  }

  Status insert(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(4);
    if (lookup(x)) return Status::kOk;  // set semantics: duplicate is a no-op
    if (live_ >= p_.n) return Status::kCapacity;
    Status s;
    if (x >= p_.u_outer_trunc) {
      s = side_insert(x);
    } else {
      auto [o, xr] = outer_split(x);
      if (xr >= p_.u_bin_trunc) {
        s = side_insert(x);
      } else {
        if (outer_live_[o] >= p_.d_outer) {
          failed_ = true;
          return Status::kStructuralFailure;
        }
        s = place_inner(o, xr);
        if (s == Status::kOk) ++outer_live_[o];
      }
    }
    if (s == Status::kOk) {
      ++live_;
    } else if (s == Status::kStructuralFailure || s == Status::kFailedState) {
      failed_ = true;
      s = Status::kStructuralFailure;
    }
    return s;
  }

  Status erase(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(4);
    Status s = Status::kAbsent;
    if (x >= p_.u_outer_trunc) {
      s = side_ ? side_->erase(x) : Status::kAbsent;
    } else {
      auto [o, xr] = outer_split(x);
      if (xr >= p_.u_bin_trunc) {
        s = side_ ? side_->erase(x) : Status::kAbsent;
      } else {
        auto bq = chopped_->chop(xr);
        s = store_->erase(o * p_.m_in + bq->bin, bq->quotient);
        if (s != Status::kOk) {
          s = cuckoos_[o]->erase(xr);
        }
        if (s == Status::kOk) --outer_live_[o];
        cuckoos_[o]->process_pending();
        store_->drive();
        if (cuckoos_[o]->failed() || store_->failed()) {
          failed_ = true;
          return Status::kStructuralFailure;
        }
      }
    }
    if (s == Status::kOk) --live_;
    return s;
  }

  SpaceAudit bits_used() const {
    SpaceAudit a;
    a.bits_first_level = store_->stored_bits();
    for (const auto& ck : cuckoos_) {
      u64 cells = 2 * ck->table_size();
      a.bits_second_level += cells * static_cast<u64>(ck->cell_bits());
      bool spare = p_.id_space < (ck->cell_bits() >= 64 ? ~0ull : (1ull << ck->cell_bits()));
      if (!spare) a.bits_second_level += cells;
      a.bits_second_level +=
          ck->queue_length() * (static_cast<u64>(ceil_log2(p_.u_bin_trunc)) + 2);
    }
    if (side_) {
      u64 cells = 2 * side_->table_size();
      a.bits_side = cells * (static_cast<u64>(ceil_log2(p_.u)) + 1) +
                    side_->queue_length() * (static_cast<u64>(ceil_log2(p_.u)) + 2) +
                    2 * side_->function_hash(1).descriptor_bits();
    }
    if (p_.m_outer > 1) a.bits_descriptors += outer_f_.descriptor_bits();
    a.bits_descriptors += store_->descriptor_bits();
    a.bits_shared_perms =
        pi0_->descriptor_bits() + pi1_->descriptor_bits() + pi2_->descriptor_bits();
    a.bits_total = a.bits_first_level + a.bits_second_level + a.bits_side + a.bits_descriptors;
    a.info_bound = info_bound_bits(p_.u, p_.n);
    a.ratio = a.info_bound ? static_cast<double>(a.bits_total) / static_cast<double>(a.info_bound)
                           : 0.0;
    return a;
  }

  // ---- snapshot ----------------------------------------------------------

  static constexpr u32 kContainerKind = 2;

  void save(SnapshotWriter& w) {
    w.put_u32(BackyardDict::kMagic);
    w.put_u32(BackyardDict::kVersion);
    w.put_u32(kContainerKind);
    w.put_u32(static_cast<u32>(perm_mode_));
    w.put_u32(static_cast<u32>(bin_mode_));
    w.put_u64(p_.u);
    w.put_u64(p_.n);
    w.put_f64(p_.gamma);
    w.put_f64(p_.eps);
    w.put_u64(p_.m_outer);
    w.put_u64(p_.d_outer);
    w.put_u64(p_.d_in);
    w.put_u64(p_.m_in);
    w.put_u64(p_.ell_in);
    w.put_u64(p_.L);
    w.put_u64(p_.L_bin);
    w.put_u64(p_.k_outer);
    w.put_u64(p_.k_perm);
    w.put_u32(static_cast<u32>(p_.nr_rounds));
    w.put_u64(live_);
    if (p_.m_outer > 1) {
      w.put_u64(outer_f_.p);
      w.put_u64(outer_f_.range);
      w.put_u64(outer_f_.universe);
      w.put_u64_vec(outer_f_.coeffs);
    }
    pi0_->save(w);
    pi1_->save(w);
    pi2_->save(w);
    store_->save(w);
    for (auto& ck : cuckoos_) ck->save_payload(w);
    w.put_u8(side_ ? 1 : 0);
    if (side_) side_->save(w);
    std::vector<u64> ol(outer_live_.begin(), outer_live_.end());
    w.put_u64_vec(ol);
    std::ostringstream os;
    os << side_rng_;
    w.put_bytes(os.str());
    w.put_u8(failed_ ? 1 : 0);
  }

  static std::unique_ptr<SuccinctDict> load(SnapshotReader& r) {
    if (r.get_u32() != BackyardDict::kMagic) throw std::runtime_error("SuccinctDict: bad magic");
    if (r.get_u32() != BackyardDict::kVersion) throw std::runtime_error("SuccinctDict: bad version");
    if (r.get_u32() != kContainerKind) throw std::runtime_error("SuccinctDict: not a succinct snapshot");
    auto perm_mode = static_cast<SuccinctPermMode>(r.get_u32());
    auto bin_mode = static_cast<InnerBinMode>(r.get_u32());
    u64 u = r.get_u64(), n = r.get_u64();
    double gamma = r.get_f64(), eps = r.get_f64();
    SuccinctOverrides ov;
    ov.m_outer = r.get_u64();
    ov.d_outer = r.get_u64();
    ov.d_in = r.get_u64();
    ov.m_in = r.get_u64();
    ov.ell_in = r.get_u64();
    ov.L = r.get_u64();
    ov.L_bin = r.get_u64();
    ov.k_outer = r.get_u64();
    ov.k_perm = r.get_u64();
    ov.nr_rounds = static_cast<int>(r.get_u32());
    u64 live = r.get_u64();
    SuccinctParams p = SuccinctParams::derive(u, n, gamma, eps, ov);
    Rng scratch(0);
    auto dict = std::make_unique<SuccinctDict>(p, perm_mode, bin_mode, scratch);
    dict->live_ = live;
    if (p.m_outer > 1) {
      dict->outer_f_.p = r.get_u64();
      dict->outer_f_.range = r.get_u64();
      dict->outer_f_.universe = r.get_u64();
      dict->outer_f_.coeffs = r.get_u64_vec();
    }
    dict->pi0_ = load_perm(r);
    dict->pi1_ = load_perm(r);
    dict->pi2_ = load_perm(r);
    dict->chopped_ = std::make_unique<ChoppedPerm>(dict->pi0_, p.m_in, p.u_bin);
    dict->store_->restore(r);
    for (auto& ck : dict->cuckoos_) {
      ck->rebind_permutations(dict->pi1_, dict->pi2_);
      ck->restore_payload(r);
    }
    if (r.get_u8()) {
      // materialize the side table with serialized hashes and payload
      dict->side_insert_placeholder(r);
    }
    auto ol = r.get_u64_vec();
    dict->outer_live_.assign(ol.begin(), ol.end());
    std::istringstream is(r.get_bytes());
    is >> dict->side_rng_;
    dict->failed_ = r.get_u8() != 0;
    return dict;
  }

  // Walks every stored element, reconstructing full keys (used by the
  // round-trip tests and the snapshot).
  void for_each_member(const std::function<void(u64)>& fn) const {
    for (u64 o = 0; o < p_.m_outer; ++o) {
      for (u64 j = 0; j < p_.m_in; ++j) {
        store_->for_each(o * p_.m_in + j, [&](u64 q) {
          fn(reconstruct_key(o, chopped_->unchop(j, q)));
        });
      }
      const auto& ck = *cuckoos_[o];
      for (int b = 1; b <= 2; ++b) {
        for (u64 i = 0; i < ck.table_size(); ++i) {
          if (ck.cell_occupied(b, i)) fn(reconstruct_key(o, ck.reconstruct(b, i)));
        }
      }
      for (auto [xr, b] : ck.queue_contents()) fn(reconstruct_key(o, xr));
    }
    if (side_) {
      for (int b = 1; b <= 2; ++b) {
        for (u64 i = 0; i < side_->table_size(); ++i) {
          if (side_->cell_occupied(b, i)) fn(side_->reconstruct(b, i));
        }
      }
      for (auto [x, b] : side_->queue_contents()) fn(x);
    }
  }

 private:
  void check_key(u64 x) const {
    if (x >= p_.u) throw std::out_of_range("SuccinctDict: key outside universe");
  }

  bool hook_place(u64 o, u64 xr) {
    auto bq = chopped_->chop(xr);
    steps_.charge(2);
    u64 bin = o * p_.m_in + bq->bin;
    if (store_->live(bin) >= p_.d_in) return false;
    bool ok = store_->insert(bin, bq->quotient) == Status::kOk;
    steps_.charge(store_->steps_last_op());
    return ok;
  }

  Status place_inner(u64 o, u64 xr) {
    auto bq = chopped_->chop(xr);
    steps_.charge(2);
    u64 bin = o * p_.m_in + bq->bin;
    Status s;
    if (store_->live(bin) < p_.d_in) {
      s = store_->insert(bin, bq->quotient);
      steps_.charge(store_->steps_last_op());
      if (s == Status::kOk) {
        cuckoos_[o]->process_pending();
        steps_.charge(cuckoos_[o]->steps().last_op);
      }
    } else {
      s = cuckoos_[o]->insert(xr);
      steps_.charge(cuckoos_[o]->steps().last_op);
    }
    store_->drive();
    steps_.charge(store_->steps_last_op());
    if (store_->failed()) return Status::kStructuralFailure;
    return s;
  }

  bool side_lookup(u64 x) const { return side_ && side_->lookup(x); }

  // The side table only ever sees keys from the truncated ranges; it is
  // allocated on first use and sized to a fraction of the outer/inner bin
  // counts it shadows.
  void ensure_side() {
    if (side_) return;
    CuckooConfig cfg;
    cfg.capacity = std::max<u64>(4, ceil_div(p_.m_outer + p_.m_in, 4));
    cfg.move_budget = p_.L;
    cfg.universe = p_.u;
    auto [h1, h2] = sample_cuckoo_hashes(
        p_.u, static_cast<u64>(std::ceil(1.2 * static_cast<double>(cfg.capacity))), 4, side_rng_);
    cfg.r_override = h1.range;
    side_ = std::make_unique<CuckooTable>(cfg, std::move(h1), std::move(h2));
  }

  Status side_insert(u64 x) {
    ensure_side();
    return side_->insert(x);
  }

  void side_insert_placeholder(SnapshotReader& r) {
    ensure_side();
    side_->restore(r);
  }

  SuccinctParams p_;
  SuccinctPermMode perm_mode_ = SuccinctPermMode::kAuto;
  InnerBinMode bin_mode_ = InnerBinMode::kPlainCells;
  KWiseHash outer_f_;
  bool outer_xor_ = false;
  PermPtr pi0_, pi1_, pi2_;
  std::unique_ptr<ChoppedPerm> chopped_;
  std::unique_ptr<QuotientStore> store_;
  std::vector<std::unique_ptr<CuckooTable>> cuckoos_;
  std::unique_ptr<CuckooTable> side_;
  std::vector<u32> outer_live_;
  u64 live_ = 0;
  bool failed_ = false;
  Rng side_rng_;
  mutable StepCounter steps_;
};

// Load histogram of the one-round Feistel outer split on a key set.
struct OuterLoadStats {
  u64 max_load = 0;
  std::vector<u64> histogram;  // histogram[i] = number of bins with load i
};

template <typename FOf>
OuterLoadStats outer_bin_load_stats(FOf&& f_of, u64 m_outer, u64 u_bin, bool use_xor,
                                    const std::vector<u64>& keys) {
  std::vector<u64> load(m_outer, 0);
  for (u64 x : keys) {
    u64 xl = x / u_bin, xr = x % u_bin;
    u64 o = use_xor ? (xl ^ f_of(xr)) : add_mod(xl, f_of(xr), m_outer);
    ++load[o];
  }
  OuterLoadStats s;
  for (u64 l : load) s.max_load = std::max(s.max_load, l);
  s.histogram.assign(s.max_load + 1, 0);
  for (u64 l : load) ++s.histogram[l];
  return s;
}

}  // namespace backyard
