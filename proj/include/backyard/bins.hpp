// Usable under the terms in the Apache License, Version 2.0.
//
// First-level bins of capacity d over packed fixed-width cells, in two modes:
//
//   * plain: insert scans for the lowest free slot, lookup/delete scan the
//     occupied cells. Worst case d cell probes per operation.
//
//   * perfect-hashed (PhfBinDirectory): each bin carries a pairwise function
//     h into [d^2] plus an association list g mapping h-values to slots, so a
//     lookup is one h evaluation, one g probe and one cell comparison.
//     Updates are de-amortized through a FIFO queue shared by all bins: every
//     external operation performs at most L_bin unit steps of queued work.
//     A bin rehash (triggered by an h collision, forced after nu updates, or
//     needed to reclaim tombstones) runs as a sequence of unit steps - copy
//     out, resample h until injective, write back - and at most one bin is
//     mid-rehash at any time. The element that triggered a rehash stays at
//     the head of the queue until the rebuilt bin absorbs it.
//
// The unit-step currency: one cell read/write, one g probe or edit, or one
// hash evaluation counts as one step. A g probe costs O(log d) machine time
// (binary search over a sorted list) but counts as a single step; the global
// lookup tables that would make it word-RAM O(1) are deliberately not
// materialized.

#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "common.hpp"
#include "hash_family.hpp"

namespace backyard {

// Fixed-width bit-packed value array. Width 0 is allowed (single-value
// domain); values then read back as 0.
class PackedCells {
 public:
  PackedCells() = default;
  PackedCells(u64 count, int width) : count_(count), width_(width) {
    if (width < 0 || width > 64) throw std::invalid_argument("PackedCells: width out of range");
    words_.assign((count * static_cast<u64>(width) + 63) / 64, 0);
  }

  u64 size() const { return count_; }
  int width() const { return width_; }

  u64 get(u64 i) const {
    if (width_ == 0) return 0;
    u64 bit = i * static_cast<u64>(width_);
    u64 word = bit / 64, off = bit % 64;
    u64 lo = words_[word] >> off;
    if (off + width_ > 64) lo |= words_[word + 1] << (64 - off);
    return width_ == 64 ? lo : (lo & ((1ull << width_) - 1));
  }

  void set(u64 i, u64 v) {
    if (width_ == 0) return;
    u64 mask = width_ == 64 ? ~0ull : ((1ull << width_) - 1);
    v &= mask;
    u64 bit = i * static_cast<u64>(width_);
    u64 word = bit / 64, off = bit % 64;
    words_[word] = (words_[word] & ~(mask << off)) | (v << off);
    if (off + width_ > 64) {
      int spill = static_cast<int>(off) + width_ - 64;
      u64 hi_mask = (1ull << spill) - 1;
      words_[word + 1] = (words_[word + 1] & ~hi_mask) | (v >> (64 - off));
    }
  }

  const std::vector<u64>& words() const { return words_; }
  std::vector<u64>& words() { return words_; }

 private:
  u64 count_ = 0;
  int width_ = 0;
  std::vector<u64> words_;
};

class Bitmap {
 public:
  Bitmap() = default;
  explicit Bitmap(u64 n) : n_(n), words_((n + 63) / 64, 0) {}
  bool get(u64 i) const { return (words_[i / 64] >> (i % 64)) & 1; }
  void set(u64 i, bool v) {
    if (v)
      words_[i / 64] |= 1ull << (i % 64);
    else
      words_[i / 64] &= ~(1ull << (i % 64));
  }
  u64 size() const { return n_; }
  const std::vector<u64>& words() const { return words_; }
  std::vector<u64>& words() { return words_; }

 private:
  u64 n_ = 0;
  std::vector<u64> words_;
};

// Steps charged per external operation, so worst-case budgets are assertable.
struct StepCounter {
  u64 last_op = 0;
  u64 max_op = 0;
  u64 total = 0;

  void begin_op() { last_op = 0; }
  void charge(u64 n = 1) {
    last_op += n;
    total += n;
    if (last_op > max_op) max_op = last_op;
  }
};

enum class BinInsert : u32 { kInserted = 0, kBinFull, kDuplicate };

// m bins of d cells each; cell_bits-wide identities packed little-endian in a
// flat word array (the layout the snapshot format stores verbatim).
class BinTable {
 public:
  BinTable() = default;
  BinTable(u64 m, u64 d, int cell_bits)
      : m_(m), d_(d), cells_(m * d, cell_bits), occ_(m * d), tomb_(m * d), load_(m, 0), tombs_(m, 0) {
    if (m == 0 || d == 0) throw std::invalid_argument("BinTable: empty geometry");
  }

  u64 bins() const { return m_; }
  u64 capacity() const { return d_; }
  int cell_bits() const { return cells_.width(); }

  // live + tombstoned entries; tombstones occupy capacity until a rehash
  u64 load(u64 bin) const { return load_[bin]; }
  u64 tombstones(u64 bin) const { return tombs_[bin]; }
  u64 live(u64 bin) const { return load_[bin] - tombs_[bin]; }

  bool slot_occupied(u64 bin, u64 slot) const { return occ_.get(bin * d_ + slot); }
  bool slot_tombstoned(u64 bin, u64 slot) const { return tomb_.get(bin * d_ + slot); }
  u64 slot_value(u64 bin, u64 slot) const { return cells_.get(bin * d_ + slot); }

  BinInsert insert(u64 bin, u64 id) {
    check_bin(bin);
    u64 free_slot = d_;
    for (u64 s = 0; s < d_; ++s) {
      u64 idx = bin * d_ + s;
      if (!occ_.get(idx)) {
        if (free_slot == d_) free_slot = s;
        continue;
      }
      if (!tomb_.get(idx) && cells_.get(idx) == id) return BinInsert::kDuplicate;
    }
    if (load_[bin] >= d_ || free_slot == d_) return BinInsert::kBinFull;
    place_at(bin, free_slot, id);
    return BinInsert::kInserted;
  }

  // Slot of a live id, or d if absent.
  u64 find(u64 bin, u64 id) const {
    check_bin(bin);
    for (u64 s = 0; s < d_; ++s) {
      u64 idx = bin * d_ + s;
      if (occ_.get(idx) && !tomb_.get(idx) && cells_.get(idx) == id) return s;
    }
    return d_;
  }

  bool erase(u64 bin, u64 id) {
    u64 s = find(bin, id);
    if (s == d_) return false;
    clear_slot(bin, s);
    return true;
  }

  void place_at(u64 bin, u64 slot, u64 id) {
    u64 idx = bin * d_ + slot;
    cells_.set(idx, id);
    occ_.set(idx, true);
    if (tomb_.get(idx)) {
      tomb_.set(idx, false);
      --tombs_[bin];
    }
    ++load_[bin];
  }

  void tombstone_at(u64 bin, u64 slot) {
    u64 idx = bin * d_ + slot;
    if (!tomb_.get(idx)) {
      tomb_.set(idx, true);
      ++tombs_[bin];
    }
  }

  void clear_tombstone(u64 bin, u64 slot) {
    u64 idx = bin * d_ + slot;
    if (tomb_.get(idx)) {
      tomb_.set(idx, false);
      --tombs_[bin];
    }
  }

  void clear_slot(u64 bin, u64 slot) {
    u64 idx = bin * d_ + slot;
    occ_.set(idx, false);
    if (tomb_.get(idx)) {
      tomb_.set(idx, false);
      --tombs_[bin];
    }
    --load_[bin];
  }

  void clear_bin(u64 bin) {
    for (u64 s = 0; s < d_; ++s) {
      u64 idx = bin * d_ + s;
      occ_.set(idx, false);
      tomb_.set(idx, false);
    }
    load_[bin] = 0;
    tombs_[bin] = 0;
  }

  const PackedCells& cells() const { return cells_; }
  PackedCells& cells() { return cells_; }
  const Bitmap& occupancy() const { return occ_; }
  Bitmap& occupancy() { return occ_; }
  const Bitmap& tombstone_bits() const { return tomb_; }

  template <typename Writer>
  void save(Writer& w) const {
    w.put_u64(m_);
    w.put_u64(d_);
    w.put_u32(static_cast<u32>(cells_.width()));
    w.put_u64_vec(cells_.words());
    w.put_u64_vec(occ_.words());
    w.put_u64_vec(tomb_.words());
  }

  template <typename Reader>
  void restore(Reader& r) {
    u64 m = r.get_u64(), d = r.get_u64();
    u32 bits = r.get_u32();
    if (m != m_ || d != d_ || bits != static_cast<u32>(cells_.width())) {
      throw std::runtime_error("BinTable: snapshot geometry mismatch");
    }
    cells_.words() = r.get_u64_vec();
    occ_.words() = r.get_u64_vec();
    tomb_.words() = r.get_u64_vec();
    if (cells_.words().size() != (m_ * d_ * static_cast<u64>(cells_.width()) + 63) / 64 ||
        occ_.words().size() != (m_ * d_ + 63) / 64 || tomb_.words().size() != occ_.words().size()) {
      throw std::runtime_error("BinTable: snapshot payload size mismatch");
    }
    for (u64 b = 0; b < m_; ++b) {
      u32 load = 0, tombs = 0;
      for (u64 s = 0; s < d_; ++s) {
        if (occ_.get(b * d_ + s)) {
          ++load;
          if (tomb_.get(b * d_ + s)) ++tombs;
        }
      }
      load_[b] = load;
      tombs_[b] = tombs;
    }
  }

 private:
  void check_bin(u64 bin) const {
    if (bin >= m_) throw std::out_of_range("BinTable: bin index");
  }

  u64 m_ = 0, d_ = 0;
  PackedCells cells_;
  Bitmap occ_;
  Bitmap tomb_;
  std::vector<u32> load_;
  std::vector<u32> tombs_;
};

// ---------------------------------------------------------------------------
// Perfect-hashed bins with queue de-amortization.

struct PerfectBinHash {
  PairwiseHash h;                      // identity -> [d^2]
  std::vector<std::pair<u32, u32>> g;  // sorted by h-value; second = slot
  u64 nu = 1;                          // forced-rehash threshold in {1..d}
  u64 updates_since_rehash = 0;

  static constexpr u32 kNoSlot = ~0u;

  u32 probe(u32 r) const {
    auto it = std::lower_bound(g.begin(), g.end(), r,
                               [](const std::pair<u32, u32>& e, u32 key) { return e.first < key; });
    if (it == g.end() || it->first != r) return kNoSlot;
    return it->second;
  }

  void add(u32 r, u32 slot) {
    auto it = std::lower_bound(g.begin(), g.end(), r,
                               [](const std::pair<u32, u32>& e, u32 key) { return e.first < key; });
    g.insert(it, {r, slot});
  }

  // 3d log d bits for g plus two words for h and one for nu
  u64 descriptor_bits(u64 d) const {
    return 3 * d * static_cast<u64>(std::max(1, ceil_log2(d))) + 3 * 64;
  }
};

struct PairKeyHash {
  std::size_t operator()(const std::pair<u64, u64>& p) const {
    u64 x = p.first * 0x9e3779b97f4a7c15ull ^ (p.second + 0x165667b19e3779f9ull);
    x ^= x >> 29;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 32;
    return static_cast<std::size_t>(x);
  }
};

class PhfBinDirectory {
 public:
  struct Config {
    u64 bins = 1;
    u64 capacity = 16;     // d
    int cell_bits = 64;
    u64 step_budget = 32;  // L_bin
    u64 queue_capacity = 64;
    u64 universe = 0;      // identity domain; 0 means 2^cell_bits
  };

  PhfBinDirectory(const Config& cfg, Rng& rng)
      : cfg_(cfg), table_(cfg.bins, cfg.capacity, cfg.cell_bits), pending_per_bin_(cfg.bins, 0) {
    if (cfg.capacity < 1 || cfg.capacity > (1u << 12)) {
      throw std::invalid_argument("PhfBinDirectory: capacity out of range");
    }
    id_universe_ =
        cfg.universe ? cfg.universe : (cfg.cell_bits >= 64 ? ~0ull : (1ull << cfg.cell_bits));
    pbh_.reserve(cfg.bins);
    for (u64 b = 0; b < cfg.bins; ++b) pbh_.push_back(fresh_pbh(rng));
    rng_ = rng;  // private stream for rehash resampling
  }

  const BinTable& table() const { return table_; }
  const PerfectBinHash& bin_hash(u64 bin) const { return pbh_[bin]; }
  const Config& config() const { return cfg_; }
  const StepCounter& steps() const { return steps_; }
  u64 queue_length() const { return queue_.size(); }
  u64 queue_high_water() const { return queue_high_water_; }
  u64 rehash_count() const { return rehash_count_; }
  u64 rehash_samples() const { return rehash_samples_; }
  bool failed() const { return failed_; }
  bool idle() const { return queue_.empty() && !rehash_.active; }
  bool bin_mid_rehash(u64 bin) const { return rehash_.active && rehash_.bin == bin; }

  // live + queued; the vacancy test callers should use (tombstones excluded
  // because a rehash reclaims them before the pending insert lands)
  u64 effective_live(u64 bin) const { return table_.live(bin) + pending_per_bin_[bin]; }

  // Direct h/g/cell probe: one h evaluation, one g probe, one cell compare.
  // Valid while the bin's cells are not being rewritten. Returns the slot or
  // the capacity d if absent.
  u64 phf_probe(u64 bin, u64 id) const {
    u32 r = static_cast<u32>(pbh_[bin].h(id));
    u32 slot = pbh_[bin].probe(r);
    if (slot == PerfectBinHash::kNoSlot) return table_.capacity();
    if (!table_.slot_occupied(bin, slot) || table_.slot_tombstoned(bin, slot)) {
      return table_.capacity();
    }
    if (table_.slot_value(bin, slot) != id) return table_.capacity();
    return slot;
  }

  // Read-only: does not drive the queue.
  bool lookup(u64 bin, u64 id) const {
    if (queued_.count({bin, id})) return true;
    if (rehash_.active && rehash_.bin == bin && rehash_.phase == RehashPhase::kWriteBack) {
      for (u64 v : rehash_.live) {
        if (v == id) return true;
      }
      return false;
    }
    return phf_probe(bin, id) != table_.capacity();
  }

  Status insert(u64 bin, u64 id) {
    steps_.begin_op();
    Status s = insert_nodrain(bin, id);
    if (s == Status::kOk || s == Status::kDuplicate) drain(cfg_.step_budget);
    return s;
  }

  // Enqueue without driving the queue; callers budget one drain per external
  // operation even when several enqueues happen inside it.
  Status insert_nodrain(u64 bin, u64 id) {
    if (failed_) return Status::kFailedState;
    if (id >= id_universe_) throw std::out_of_range("PhfBinDirectory: id outside universe");
    steps_.charge(3);
    if (lookup(bin, id)) return Status::kDuplicate;
    if (effective_live(bin) >= table_.capacity()) return Status::kBinFull;
    if (queue_.size() >= cfg_.queue_capacity) {
      failed_ = true;
      return Status::kStructuralFailure;
    }
    queue_.push_back(Op{bin, id, OpKind::kInsert, false});
    queued_.insert({bin, id});
    ++pending_per_bin_[bin];
    queue_high_water_ = std::max<u64>(queue_high_water_, queue_.size());
    steps_.charge();
    return Status::kOk;
  }

  Status erase(u64 bin, u64 id) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    Status s = erase_inner(bin, id);
    drain(cfg_.step_budget);
    return s;
  }

  // Runs up to `budget` unit steps of queued work; returns steps consumed.
  u64 process(u64 budget) {
    steps_.begin_op();
    return drain(budget);
  }

  // Snapshot of an idle directory (no queued work, no rehash in flight).
  template <typename Writer>
  void save(Writer& w) const {
    if (!idle()) throw std::logic_error("PhfBinDirectory: flush before saving");
    table_.save(w);
    for (const auto& p : pbh_) {
      w.put_u64(p.h.a);
      w.put_u64(p.h.b);
      w.put_u64(p.h.p);
      w.put_u64(p.h.range);
      w.put_u64(p.h.universe);
      w.put_u64(p.nu);
      w.put_u64(p.updates_since_rehash);
      w.put_u64(p.g.size());
      for (auto [r, slot] : p.g) {
        w.put_u32(r);
        w.put_u32(slot);
      }
    }
    std::ostringstream os;
    os << rng_;
    w.put_bytes(os.str());
    w.put_u8(failed_ ? 1 : 0);
  }

  template <typename Reader>
  void restore(Reader& rd) {
    table_.restore(rd);
    for (auto& p : pbh_) {
      p.h.a = rd.get_u64();
      p.h.b = rd.get_u64();
      p.h.p = rd.get_u64();
      p.h.range = rd.get_u64();
      p.h.universe = rd.get_u64();
      p.nu = rd.get_u64();
      p.updates_since_rehash = rd.get_u64();
      u64 gn = rd.get_u64();
      p.g.assign(gn, {0, 0});
      for (auto& e : p.g) {
        e.first = rd.get_u32();
        e.second = rd.get_u32();
      }
    }
    std::istringstream is(rd.get_bytes());
    is >> rng_;
    failed_ = rd.get_u8() != 0;
    queue_.clear();
    queued_.clear();
    std::fill(pending_per_bin_.begin(), pending_per_bin_.end(), 0);
    rehash_ = RehashState{};
  }

 private:
  enum class OpKind : u32 { kInsert, kMaintain };

  struct Op {
    u64 bin;
    u64 id;
    OpKind kind;
    bool cancelled;
  };

  enum class RehashPhase : u32 { kCopyOut, kSample, kCheck, kWriteBack };

  struct RehashState {
    bool active = false;
    u64 bin = 0;
    RehashPhase phase = RehashPhase::kCopyOut;
    u64 pos = 0;
    std::vector<u64> live;  // staging; kDead marks mid-rehash deletions
    std::optional<u64> extra;  // pending insert absorbed by this rehash
    PairwiseHash trial_h;
    std::vector<u32> seen_epoch;  // d^2 epoch-tagged collision scratch
    u32 epoch = 0;
  };

  static constexpr u64 kDead = ~0ull;

  PerfectBinHash fresh_pbh(Rng& rng) {
    PerfectBinHash p;
    u64 d = cfg_.capacity;
    p.h = sample_pairwise(id_universe_, d * d, rng);
    p.nu = 1 + uniform_below(rng, d);
    return p;
  }

  Status erase_inner(u64 bin, u64 id) {
    steps_.charge();
    auto qit = queued_.find({bin, id});
    if (qit != queued_.end()) {
      cancel_pending_insert(bin, id);
      return Status::kOk;
    }
    if (rehash_.active && rehash_.bin == bin) return erase_during_rehash(bin, id);
    steps_.charge(3);
    u64 slot = phf_probe(bin, id);
    if (slot == table_.capacity()) return Status::kAbsent;
    table_.tombstone_at(bin, slot);
    count_update(bin);
    return Status::kOk;
  }

  void cancel_pending_insert(u64 bin, u64 id) {
    queued_.erase({bin, id});
    --pending_per_bin_[bin];
    auto head_match = [&](const Op& op) {
      return op.kind == OpKind::kInsert && op.bin == bin && op.id == id && !op.cancelled;
    };
    if (rehash_.active && rehash_.bin == bin && !queue_.empty() && head_match(queue_.front())) {
      // the insert currently being absorbed by the active rehash
      queue_.front().cancelled = true;
      if (rehash_.extra && *rehash_.extra == id) rehash_.extra.reset();
      purge_from_staging(bin, id);
      count_update(bin);
      return;
    }
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
      if (head_match(*it)) {
        queue_.erase(it);
        return;
      }
    }
  }

  void purge_from_staging(u64 bin, u64 id) {
    for (u64 i = 0; i < rehash_.live.size(); ++i) {
      steps_.charge();
      if (rehash_.live[i] != id) continue;
      if (rehash_.phase == RehashPhase::kWriteBack) {
        if (i < rehash_.pos) table_.tombstone_at(bin, i);  // already written
        rehash_.live[i] = kDead;
      } else {
        rehash_.live.erase(rehash_.live.begin() + static_cast<long>(i));
        if (rehash_.phase == RehashPhase::kCheck) rehash_.phase = RehashPhase::kSample;
      }
      return;
    }
  }

  Status erase_during_rehash(u64 bin, u64 id) {
    bool found = false;
    for (u64 i = 0; i < rehash_.live.size(); ++i) {
      steps_.charge();
      if (rehash_.live[i] != id) continue;
      found = true;
      if (rehash_.phase == RehashPhase::kWriteBack) {
        if (i < rehash_.pos) table_.tombstone_at(bin, i);
        rehash_.live[i] = kDead;
      } else {
        rehash_.live.erase(rehash_.live.begin() + static_cast<long>(i));
        if (rehash_.phase == RehashPhase::kCheck) rehash_.phase = RehashPhase::kSample;
      }
      break;
    }
    if (rehash_.phase != RehashPhase::kWriteBack) {
      // cells still intact; tombstone the stored copy if it was not yet
      // copied out (or even if it was: the staging list already dropped it)
      steps_.charge(3);
      u64 slot = phf_probe(bin, id);
      if (slot != table_.capacity()) {
        table_.tombstone_at(bin, slot);
        found = true;
      }
    }
    if (!found) return Status::kAbsent;
    count_update(bin);
    return Status::kOk;
  }

  void count_update(u64 bin) {
    auto& p = pbh_[bin];
    ++p.updates_since_rehash;
    if (p.updates_since_rehash >= p.nu && !(rehash_.active && rehash_.bin == bin)) {
      if (queue_.size() < cfg_.queue_capacity && !maintain_pending(bin)) {
        queue_.push_back(Op{bin, 0, OpKind::kMaintain, false});
        queue_high_water_ = std::max<u64>(queue_high_water_, queue_.size());
      }
    }
  }

  bool maintain_pending(u64 bin) const {
    for (const auto& op : queue_) {
      if (op.kind == OpKind::kMaintain && op.bin == bin) return true;
    }
    return false;
  }

  u64 drain(u64 budget) {
    u64 used = 0;
    while (used < budget && (rehash_.active || !queue_.empty())) {
      used += micro_step();
    }
    steps_.charge(used);
    return used;
  }

  u64 micro_step() {
    if (rehash_.active) return rehash_step();
    Op& op = queue_.front();
    if (op.cancelled) {
      queue_.pop_front();
      return 1;
    }
    if (op.kind == OpKind::kMaintain) {
      if (pbh_[op.bin].updates_since_rehash >= pbh_[op.bin].nu) {
        begin_rehash(op.bin, std::nullopt);
      } else {
        queue_.pop_front();  // a rehash got there first
      }
      return 1;
    }
    u64 bin = op.bin, id = op.id;
    auto& p = pbh_[bin];
    if (p.updates_since_rehash + 1 >= p.nu) {
      begin_rehash(bin, id);  // forced rehash absorbs the pending insert
      return 1;
    }
    u32 r = static_cast<u32>(p.h(id));
    u32 slot = p.probe(r);
    if (slot != PerfectBinHash::kNoSlot) {
      if (table_.slot_occupied(bin, slot) && table_.slot_tombstoned(bin, slot) &&
          table_.slot_value(bin, slot) == id) {
        // revive the tombstoned copy of this id in place
        table_.clear_tombstone(bin, slot);
        ++p.updates_since_rehash;
        pop_head_insert();
        return 1;
      }
      begin_rehash(bin, id);  // h collision
      return 1;
    }
    if (table_.load(bin) >= table_.capacity()) {
      begin_rehash(bin, id);  // only tombstones block; rebuild reclaims them
      return 1;
    }
    u64 free_slot = find_free_slot(bin);
    table_.place_at(bin, free_slot, id);
    p.add(r, static_cast<u32>(free_slot));
    ++p.updates_since_rehash;
    pop_head_insert();
    return 1;
  }

  u64 find_free_slot(u64 bin) const {
    for (u64 s = 0; s < table_.capacity(); ++s) {
      if (!table_.slot_occupied(bin, s)) return s;
    }
    throw std::logic_error("PhfBinDirectory: no free slot despite load check");
  }

  void pop_head_insert() {
    const Op& op = queue_.front();
    queued_.erase({op.bin, op.id});
    --pending_per_bin_[op.bin];
    queue_.pop_front();
  }

  void begin_rehash(u64 bin, std::optional<u64> extra) {
    rehash_.active = true;
    rehash_.bin = bin;
    rehash_.phase = RehashPhase::kCopyOut;
    rehash_.pos = 0;
    rehash_.live.clear();
    rehash_.extra = extra;
    ++rehash_count_;
  }

  u64 rehash_step() {
    u64 bin = rehash_.bin;
    u64 d = table_.capacity();
    switch (rehash_.phase) {
      case RehashPhase::kCopyOut: {
        u64 s = rehash_.pos;
        if (table_.slot_occupied(bin, s) && !table_.slot_tombstoned(bin, s)) {
          rehash_.live.push_back(table_.slot_value(bin, s));
        }
        if (++rehash_.pos == d) {
          if (rehash_.extra) rehash_.live.push_back(*rehash_.extra);
          rehash_.phase = RehashPhase::kSample;
        }
        return 1;
      }
      case RehashPhase::kSample: {
        rehash_.trial_h = sample_pairwise(id_universe_, d * d, rng_);
        if (rehash_.seen_epoch.size() != d * d) rehash_.seen_epoch.assign(d * d, 0);
        ++rehash_.epoch;
        rehash_.pos = 0;
        rehash_.phase = RehashPhase::kCheck;
        ++rehash_samples_;
        return 1;
      }
      case RehashPhase::kCheck: {
        if (rehash_.pos >= rehash_.live.size()) {
          table_.clear_bin(bin);
          rehash_.pos = 0;
          rehash_.phase = RehashPhase::kWriteBack;
          return 1;
        }
        u32 r = static_cast<u32>(rehash_.trial_h(rehash_.live[rehash_.pos]));
        if (rehash_.seen_epoch[r] == rehash_.epoch) {
          rehash_.phase = RehashPhase::kSample;  // collision: fresh h
        } else {
          rehash_.seen_epoch[r] = rehash_.epoch;
          ++rehash_.pos;
        }
        return 1;
      }
      case RehashPhase::kWriteBack: {
        while (rehash_.pos < rehash_.live.size() && rehash_.live[rehash_.pos] == kDead) {
          rehash_.live.erase(rehash_.live.begin() + static_cast<long>(rehash_.pos));
        }
        if (rehash_.pos >= rehash_.live.size()) {
          finish_rehash(bin);
          return 1;
        }
        u64 id = rehash_.live[rehash_.pos];
        u32 r = static_cast<u32>(rehash_.trial_h(id));
        table_.place_at(bin, rehash_.pos, id);
        new_g_.push_back({r, static_cast<u32>(rehash_.pos)});
        ++rehash_.pos;
        return 1;
      }
    }
    return 1;
  }

  void finish_rehash(u64 bin) {
    auto& p = pbh_[bin];
    p.h = rehash_.trial_h;
    std::sort(new_g_.begin(), new_g_.end());
    p.g = std::move(new_g_);
    new_g_.clear();
    p.nu = 1 + uniform_below(rng_, table_.capacity());
    p.updates_since_rehash = 0;
    rehash_.active = false;
    bool absorbed = rehash_.extra.has_value();
    rehash_.extra.reset();
    // pop the head op that carried this rehash (absorbed insert or maintain);
    // a cancelled head pops on its own micro step
    if (!queue_.empty()) {
      const Op& op = queue_.front();
      if (op.kind == OpKind::kMaintain && op.bin == bin) {
        queue_.pop_front();
      } else if (absorbed && op.kind == OpKind::kInsert && op.bin == bin && !op.cancelled) {
        pop_head_insert();
      }
    }
  }

  Config cfg_;
  BinTable table_;
  std::vector<PerfectBinHash> pbh_;
  std::deque<Op> queue_;
  std::unordered_set<std::pair<u64, u64>, PairKeyHash> queued_;
  std::vector<u32> pending_per_bin_;
  RehashState rehash_;
  std::vector<std::pair<u32, u32>> new_g_;
  u64 id_universe_ = 0;
  u64 queue_high_water_ = 0;
  u64 rehash_count_ = 0;
  u64 rehash_samples_ = 0;
  bool failed_ = false;
  mutable StepCounter steps_;
  Rng rng_;
};

}  // namespace backyard
