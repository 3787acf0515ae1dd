// Usable under the terms in the Apache License, Version 2.0.
//
// Two-level dictionary: a k-wise function h0 spreads keys over m bins of d
// words each, and the elements that do not fit in their bin overflow into a
// de-amortized cuckoo table. During cuckoo walks every element passing
// through the insertion procedure is first offered back to its first-level
// bin (the kick-back hook), which keeps the second level small: it only ever
// holds elements whose bins are full.
//
// Parameters follow d = ceil(c log2(1/eps) / eps^2), m = ceil((1+eps/2) n/d),
// second-level design load ell = ceil(eps n / 16) inside a word budget of
// ceil(eps n / 4), which together keep the core footprint within (1+eps) n
// words.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>

#include "bins.hpp"
#include "common.hpp"
#include "cuckoo.hpp"
#include "hash_family.hpp"
#include "perm.hpp"
#include "snapshot.hpp"

namespace backyard {

enum class BinMode : u32 { kPlain = 0, kPerfectHash = 1 };
enum class PermBackend : u32 { kAuto = 0, kTabulated = 1, kNaorReingold = 2 };

struct BackyardOverrides {
  u64 d = 0;
  u64 m = 0;
  u64 ell = 0;
  u64 r = 0;
  u64 L = 0;
  u64 L_bin = 0;
  std::size_t k = 0;          // h0 independence
  std::size_t cuckoo_k = 0;   // function-mode cuckoo hash independence
  u64 queue_capacity = 0;     // cuckoo queue
  u64 bin_queue_capacity = 0;
};

struct BackyardParams {
  u64 n = 0;
  double eps = 0.25;
  double c = 2.0;
  u64 universe = 0;

  u64 d = 0;
  u64 m = 0;
  u64 ell = 0;           // second-level design load, ceil(eps n / 16)
  u64 word_budget = 0;   // second-level word budget, ceil(eps n / 4)
  u64 r = 0;             // cells per cuckoo table
  u64 L = 10;
  u64 L_bin = 32;
  std::size_t k = 64;          // h0 independence
  std::size_t cuckoo_k = 16;
  u64 queue_capacity = 0;
  u64 bin_queue_capacity = 0;

  static BackyardParams derive(u64 n, double eps, double c, u64 universe,
                               const BackyardOverrides& ov = {}) {
    if (n == 0) throw std::invalid_argument("BackyardParams: n must be positive");
    if (!(eps > 0.0) || !(eps < 1.0)) {
      throw std::invalid_argument("BackyardParams: eps must lie in (0, 1)");
    }
    if (!(c > 1.0)) throw std::invalid_argument("BackyardParams: c must exceed 1");
    if (universe == 0) throw std::invalid_argument("BackyardParams: universe required");
    BackyardParams p;
    p.n = n;
    p.eps = eps;
    p.c = c;
    p.universe = universe;
    p.d = ov.d ? ov.d : static_cast<u64>(std::ceil(c * std::log2(1.0 / eps) / (eps * eps)));
    if (p.d == 0) p.d = 1;
    p.m = ov.m ? ov.m : static_cast<u64>(std::ceil((1.0 + eps / 2.0) * static_cast<double>(n) /
                                                   static_cast<double>(p.d)));
    p.ell = ov.ell ? ov.ell : static_cast<u64>(std::ceil(eps * static_cast<double>(n) / 16.0));
    if (p.ell == 0) p.ell = 1;
    p.word_budget = static_cast<u64>(std::ceil(eps * static_cast<double>(n) / 4.0));
    p.r = ov.r ? ov.r : static_cast<u64>(std::ceil(1.2 * static_cast<double>(p.ell)));
    if (ov.L) p.L = ov.L;
    if (ov.L_bin) p.L_bin = ov.L_bin;
    p.k = ov.k ? ov.k : std::min<u64>(64, n);
    if (ov.cuckoo_k) p.cuckoo_k = ov.cuckoo_k;
    p.queue_capacity =
        ov.queue_capacity ? ov.queue_capacity : CuckooTable::default_queue_capacity(p.ell);
    p.bin_queue_capacity = ov.bin_queue_capacity
                               ? ov.bin_queue_capacity
                               : 4 * static_cast<u64>(ceil_log2(std::max<u64>(2, n)));
    // Theorem-level space constraints; violating configurations are rejected
    // rather than silently resized.
    if (p.m * p.d + p.word_budget > static_cast<u64>((1.0 + eps) * static_cast<double>(n))) {
      throw std::invalid_argument("BackyardParams: m*d + eps*n/4 exceeds (1+eps)n words");
    }
    if (2 * p.r > p.word_budget) {
      throw std::invalid_argument("BackyardParams: cuckoo tables exceed their word budget");
    }
    return p;
  }
};

struct SpaceWords {
  u64 bin_words = 0;        // m * d
  u64 cuckoo_words = 0;     // 2 * r
  u64 queue_words = 0;      // queue capacities (cuckoo + bin queue)
  u64 descriptor_words = 0; // hash descriptors, g lists, counters
  u64 core() const { return bin_words + cuckoo_words; }
  u64 total() const { return bin_words + cuckoo_words + queue_words + descriptor_words; }
};

// Overflow experiment: elements of S are assigned to bins by `bin_of`; each
// element landing in a bin that already holds d others overflows. Returns
// sum over bins of max(0, load - d).
template <typename BinOf>
u64 overflow_count(BinOf&& bin_of, const std::vector<u64>& elems, u64 m, u64 d) {
  std::vector<u32> load(m, 0);
  u64 overflow = 0;
  for (u64 x : elems) {
    u64 b = bin_of(x);
    if (load[b] >= d)
      ++overflow;
    else
      ++load[b];
  }
  return overflow;
}

class BackyardDict {
 public:
  BackyardDict(const BackyardParams& params, BinMode bin_mode, CuckooMode cuckoo_mode, Rng& rng,
               PermBackend perm_backend = PermBackend::kAuto)
      : p_(params), bin_mode_(bin_mode), cuckoo_mode_(cuckoo_mode) {
    h0_ = sample_kwise(p_.k, p_.universe, p_.m, rng);
    if (bin_mode_ == BinMode::kPlain) {
      plain_ = std::make_unique<BinTable>(p_.m, p_.d, 64);
    } else {
      PhfBinDirectory::Config cfg;
      cfg.bins = p_.m;
      cfg.capacity = p_.d;
      cfg.cell_bits = 64;
      cfg.step_budget = p_.L_bin;
      cfg.queue_capacity = p_.bin_queue_capacity;
      cfg.universe = p_.universe;
      phf_ = std::make_unique<PhfBinDirectory>(cfg, rng);
    }
    CuckooConfig ccfg;
    ccfg.capacity = p_.ell;
    ccfg.move_budget = p_.L;
    ccfg.queue_capacity = p_.queue_capacity;
    ccfg.universe = p_.universe;
    if (cuckoo_mode_ == CuckooMode::kFunction) {
      ccfg.r_override = p_.r;
      auto [h1, h2] = sample_cuckoo_hashes(p_.universe, p_.r, p_.cuckoo_k, rng);
      cuckoo_ = std::make_unique<CuckooTable>(ccfg, std::move(h1), std::move(h2));
    } else {
      // permutation mode needs r | u; round the table size up to the next
      // power of two (still inside the eps*n/4 word budget for the
      // power-of-two universes this mode supports)
      if (!is_pow2(p_.universe)) {
        throw std::invalid_argument("BackyardDict: permutation-mode cuckoo needs a power-of-two universe");
      }
      u64 r2 = next_pow2(p_.r);
      if (2 * r2 > p_.word_budget) {
        throw std::invalid_argument("BackyardDict: rounded cuckoo tables exceed the word budget");
      }
      ccfg.r_override = r2;
      perm_backend_ = perm_backend;
      if (perm_backend_ == PermBackend::kAuto) {
        perm_backend_ = p_.universe <= TabulatedPerm::kMaxUniverse ? PermBackend::kTabulated
                                                                   : PermBackend::kNaorReingold;
      }
      PermPtr pi1, pi2;
      if (perm_backend_ == PermBackend::kTabulated) {
        pi1 = TabulatedPerm::sample(p_.universe, rng);
        pi2 = TabulatedPerm::sample(p_.universe, rng);
      } else {
        pi1 = nr_perm_for_universe(p_.universe, std::max<u64>(8, p_.cuckoo_k), 2, rng);
        pi2 = nr_perm_for_universe(p_.universe, std::max<u64>(8, p_.cuckoo_k), 2, rng);
      }
      cuckoo_ = std::make_unique<CuckooTable>(ccfg, std::move(pi1), std::move(pi2));
    }
    wire_hook();
  }

  // Function-mode constructor with explicit hashes; lets tests script exact
  // bin and cell targeting.
  BackyardDict(const BackyardParams& params, BinMode bin_mode, Rng& rng, KWiseHash h0,
               KWiseHash h1, KWiseHash h2)
      : p_(params), bin_mode_(bin_mode), cuckoo_mode_(CuckooMode::kFunction) {
    if (h0.range != p_.m || h1.range != p_.r || h2.range != p_.r) {
      throw std::invalid_argument("BackyardDict: injected hash ranges must match (m, r, r)");
    }
    h0_ = std::move(h0);
    if (bin_mode_ == BinMode::kPlain) {
      plain_ = std::make_unique<BinTable>(p_.m, p_.d, 64);
    } else {
      PhfBinDirectory::Config cfg;
      cfg.bins = p_.m;
      cfg.capacity = p_.d;
      cfg.cell_bits = 64;
      cfg.step_budget = p_.L_bin;
      cfg.queue_capacity = p_.bin_queue_capacity;
      cfg.universe = p_.universe;
      phf_ = std::make_unique<PhfBinDirectory>(cfg, rng);
    }
    CuckooConfig ccfg;
    ccfg.capacity = p_.ell;
    ccfg.move_budget = p_.L;
    ccfg.queue_capacity = p_.queue_capacity;
    ccfg.universe = p_.universe;
    ccfg.r_override = p_.r;
    cuckoo_ = std::make_unique<CuckooTable>(ccfg, std::move(h1), std::move(h2));
    wire_hook();
  }

  // the kick-back hook captures `this`
  BackyardDict(const BackyardDict&) = delete;
  BackyardDict& operator=(const BackyardDict&) = delete;

  const BackyardParams& params() const { return p_; }
  BinMode bin_mode() const { return bin_mode_; }
  CuckooMode cuckoo_mode() const { return cuckoo_mode_; }
  const KWiseHash& h0() const { return h0_; }
  const CuckooTable& cuckoo() const { return *cuckoo_; }
  const BinTable& bin_table() const { return bin_mode_ == BinMode::kPlain ? *plain_ : phf_->table(); }
  const PhfBinDirectory* phf_directory() const { return phf_.get(); }
  u64 size() const { return live_; }
  bool failed() const { return failed_; }
  const StepCounter& steps() const { return steps_; }

  u64 bin_of(u64 x) const { return h0_(x); }

  bool lookup(u64 x) const {
    check_key(x);
    if (bin_mode_ == BinMode::kPlain) {
      if (plain_->find(h0_(x), x) != p_.d) return true;
    } else {
      if (phf_->lookup(h0_(x), x)) return true;
    }
    return cuckoo_->lookup(x);
  }

  Status insert(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(2);
    if (lookup(x)) {
      drive();
      return Status::kOk;  // duplicate insert is a no-op
    }
    if (live_ >= p_.n) return Status::kCapacity;
    u64 bin = h0_(x);
    Status s;
    if (bin_vacant(bin)) {
      s = bin_insert(bin, x);
      if (s == Status::kOk) cuckoo_->process_pending();
    } else {
      s = cuckoo_->insert(x);
    }
    if (bin_mode_ == BinMode::kPerfectHash) phf_->process(p_.L_bin);
    if (s == Status::kOk) {
      ++live_;
    } else if (s == Status::kStructuralFailure || s == Status::kFailedState) {
      failed_ = true;
      s = Status::kStructuralFailure;
    }
    note_steps();
    return s;
  }

  Status erase(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(2);
    Status s = Status::kAbsent;
    if (bin_mode_ == BinMode::kPlain) {
      if (plain_->erase(h0_(x), x)) s = Status::kOk;
    } else {
      Status bs = phf_->erase(h0_(x), x);
      if (bs == Status::kOk) s = Status::kOk;
    }
    if (s == Status::kAbsent) {
      Status cs = cuckoo_->erase(x);
      if (cs == Status::kOk) s = Status::kOk;
    }
    if (s == Status::kOk) --live_;
    cuckoo_->process_pending();
    if (cuckoo_->failed()) {
      failed_ = true;
      return Status::kStructuralFailure;
    }
    note_steps();
    return s;
  }

  SpaceWords space_words() const {
    SpaceWords w;
    w.bin_words = p_.m * p_.d;
    w.cuckoo_words = 2 * cuckoo_->table_size();
    w.queue_words = p_.queue_capacity + (bin_mode_ == BinMode::kPerfectHash ? p_.bin_queue_capacity : 0);
    u64 bits = h0_.descriptor_bits();
    if (cuckoo_mode_ == CuckooMode::kFunction) {
      bits += cuckoo_->function_hash(1).descriptor_bits() + cuckoo_->function_hash(2).descriptor_bits();
    } else {
      bits += cuckoo_->permutation(1)->descriptor_bits() + cuckoo_->permutation(2)->descriptor_bits();
    }
    if (bin_mode_ == BinMode::kPerfectHash) {
      for (u64 b = 0; b < p_.m; ++b) bits += phf_->bin_hash(b).descriptor_bits(p_.d);
    }
    w.descriptor_words = ceil_div(bits, 64);
    return w;
  }

  // ---- snapshot ----------------------------------------------------------

  static constexpr u32 kMagic = 0x44594B42;  // "BKYD"
  static constexpr u32 kVersion = 1;
  static constexpr u32 kContainerKind = 1;  // 1 = backyard, 2 = succinct

  void save(SnapshotWriter& w) {
    flush_pending();
    w.put_u32(kMagic);
    w.put_u32(kVersion);
    w.put_u32(kContainerKind);
    w.put_u32(static_cast<u32>(bin_mode_));
    w.put_u32(static_cast<u32>(cuckoo_mode_));
    w.put_u32(static_cast<u32>(perm_backend_));
    w.put_u64(p_.n);
    w.put_f64(p_.eps);
    w.put_f64(p_.c);
    w.put_u64(p_.universe);
    w.put_u64(p_.d);
    w.put_u64(p_.m);
    w.put_u64(p_.ell);
    w.put_u64(p_.r);
    w.put_u64(p_.L);
    w.put_u64(p_.L_bin);
    w.put_u64(p_.k);
    w.put_u64(p_.cuckoo_k);
    w.put_u64(p_.queue_capacity);
    w.put_u64(p_.bin_queue_capacity);
    w.put_u64(live_);
    save_kwise(w, h0_);
    if (bin_mode_ == BinMode::kPlain) {
      save_bin_table(w, *plain_);
    } else {
      save_phf(w);
    }
    save_cuckoo(w);
  }

  static std::unique_ptr<BackyardDict> load(SnapshotReader& r) {
    if (r.get_u32() != kMagic) throw std::runtime_error("BackyardDict: bad magic");
    if (r.get_u32() != kVersion) throw std::runtime_error("BackyardDict: unsupported version");
    if (r.get_u32() != kContainerKind) throw std::runtime_error("BackyardDict: not a backyard snapshot");
    auto bin_mode = static_cast<BinMode>(r.get_u32());
    auto cuckoo_mode = static_cast<CuckooMode>(r.get_u32());
    auto backend = static_cast<PermBackend>(r.get_u32());
    BackyardOverrides ov;
    u64 n = r.get_u64();
    double eps = r.get_f64();
    double c = r.get_f64();
    u64 universe = r.get_u64();
    ov.d = r.get_u64();
    ov.m = r.get_u64();
    ov.ell = r.get_u64();
    ov.r = r.get_u64();
    ov.L = r.get_u64();
    ov.L_bin = r.get_u64();
    ov.k = r.get_u64();
    ov.cuckoo_k = r.get_u64();
    ov.queue_capacity = r.get_u64();
    ov.bin_queue_capacity = r.get_u64();
    u64 live = r.get_u64();
    BackyardParams p = BackyardParams::derive(n, eps, c, universe, ov);
    Rng scratch(0);
    auto dict = std::make_unique<BackyardDict>(
        p, bin_mode, cuckoo_mode, scratch,
        cuckoo_mode == CuckooMode::kPermutation ? backend : PermBackend::kAuto);
    dict->live_ = live;
    dict->h0_ = load_kwise(r, p.universe);
    if (bin_mode == BinMode::kPlain) {
      load_bin_table(r, *dict->plain_);
    } else {
      dict->load_phf(r);
    }
    dict->load_cuckoo(r);
    return dict;
  }

 private:
  void check_key(u64 x) const {
    if (x >= p_.universe) throw std::out_of_range("BackyardDict: key outside universe");
  }

  bool bin_vacant(u64 bin) const {
    if (bin_mode_ == BinMode::kPlain) return plain_->load(bin) < p_.d;
    return phf_->effective_live(bin) < p_.d;
  }

  Status bin_insert(u64 bin, u64 x) {
    if (bin_mode_ == BinMode::kPlain) {
      BinInsert s = plain_->insert(bin, x);
      steps_.charge(p_.d);
      switch (s) {
        case BinInsert::kInserted: return Status::kOk;
        case BinInsert::kDuplicate: return Status::kDuplicate;
        case BinInsert::kBinFull: return Status::kBinFull;
      }
    }
    Status s = phf_->insert_nodrain(bin, x);
    steps_.charge(2);
    return s;
  }

  void wire_hook() {
    cuckoo_->set_hook([this](u64 y) {
      u64 bin = h0_(y);
      steps_.charge(2);
      if (!bin_vacant(bin)) return false;
      return bin_insert(bin, y) == Status::kOk;
    });
  }

  void drive() {
    cuckoo_->process_pending();
    if (bin_mode_ == BinMode::kPerfectHash) phf_->process(p_.L_bin);
  }

  void note_steps() {
    steps_.charge(cuckoo_->steps().last_op);
    if (bin_mode_ == BinMode::kPerfectHash) steps_.charge(phf_->steps().last_op);
  }

  // Completes all queued de-amortized work; used before serialization.
  void flush_pending() {
    if (bin_mode_ == BinMode::kPerfectHash) {
      while (!phf_->idle() && !phf_->failed()) phf_->process(1024);
    }
  }

  static void save_kwise(SnapshotWriter& w, const KWiseHash& h) {
    w.put_u64(h.p);
    w.put_u64(h.range);
    w.put_u64(h.universe);
    w.put_u64_vec(h.coeffs);
  }

  static KWiseHash load_kwise(SnapshotReader& r, u64 universe_check) {
    KWiseHash h;
    h.p = r.get_u64();
    h.range = r.get_u64();
    h.universe = r.get_u64();
    h.coeffs = r.get_u64_vec();
    (void)universe_check;
    return h;
  }

  static void save_bin_table(SnapshotWriter& w, const BinTable& t) { t.save(w); }
  static void load_bin_table(SnapshotReader& r, BinTable& t) { t.restore(r); }

  void save_phf(SnapshotWriter& w) { phf_->save(w); }
  void load_phf(SnapshotReader& r) { phf_->restore(r); }

  void save_cuckoo(SnapshotWriter& w) { cuckoo_->save(w); }
  void load_cuckoo(SnapshotReader& r) { cuckoo_->restore(r); }

  BackyardParams p_;
  BinMode bin_mode_;
  CuckooMode cuckoo_mode_;
  PermBackend perm_backend_ = PermBackend::kAuto;
  KWiseHash h0_;
  std::unique_ptr<BinTable> plain_;
  std::unique_ptr<PhfBinDirectory> phf_;
  std::unique_ptr<CuckooTable> cuckoo_;
  u64 live_ = 0;
  bool failed_ = false;
  mutable StepCounter steps_;
};

}  // namespace backyard
