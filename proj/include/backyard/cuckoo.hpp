// Usable under the terms in the Apache License, Version 2.0.
//
// De-amortized cuckoo hashing: two tables of r cells, a FIFO queue with
// constant-time membership, and a cycle-detection record for the current
// eviction walk. Inserts enqueue at the back and then perform at most L moves
// from the head; an element still nestless after L moves returns to the head
// with its walk state intact.
//
// Two addressing modes:
//   * function: cells store full keys; h1, h2 are k-wise functions into [r].
//   * permutation: cells store only the low log2(u/r) bits of pi_b(x) (the
//     element's identity); the cell index is the high log2(r) part. Eviction
//     reconstructs the full key through the inverse permutation, which is
//     what makes quotient storage workable.
//
// The optional kick-back hook is consulted first for every element popped or
// evicted during a walk; when it succeeds the element has been rehomed (to
// the first level of a two-level scheme) and the walk counts one move.

#pragma once

#include <functional>
#include <list>
#include <unordered_map>
#include <unordered_set>

#include "bins.hpp"
#include "common.hpp"
#include "hash_family.hpp"
#include "perm.hpp"

namespace backyard {

enum class CuckooMode : u32 { kFunction = 0, kPermutation = 1 };

struct CuckooConfig {
  u64 capacity = 1;       // design load (the paper's ell)
  double fill_slack = 0.2;  // r = ceil((1+fill_slack) * capacity) unless overridden
  u64 r_override = 0;     // explicit table size; required to divide u in permutation mode
  u64 move_budget = 10;   // L
  u64 queue_capacity = 0; // 0: 4 ceil(log2 capacity) + 8
  u64 universe = 0;       // key domain [0, u); required
};

struct CuckooStats {
  u64 inserts = 0;
  u64 moves = 0;
  u64 max_moves_per_insert = 0;
  u64 hook_calls = 0;
  u64 hook_placements = 0;
  u64 second_cycles = 0;
  u64 queue_high_water = 0;
  u64 structural_failures = 0;
};

class CuckooTable {
 public:
  using Hook = std::function<bool(u64 key)>;

  CuckooTable(const CuckooConfig& cfg, KWiseHash h1, KWiseHash h2)
      : cfg_(cfg), mode_(CuckooMode::kFunction), h1_(std::move(h1)), h2_(std::move(h2)) {
    init_geometry();
    if (h1_.range != r_ || h2_.range != r_) {
      throw std::invalid_argument("CuckooTable: hash range must equal table size");
    }
    cell_bits_ = 64;
    id_space_ = 0;
    alloc_tables();
  }

  CuckooTable(const CuckooConfig& cfg, PermPtr pi1, PermPtr pi2)
      : cfg_(cfg), mode_(CuckooMode::kPermutation), pi1_(std::move(pi1)), pi2_(std::move(pi2)) {
    init_geometry();
    if (pi1_->size() != cfg_.universe || pi2_->size() != cfg_.universe) {
      throw std::invalid_argument("CuckooTable: permutation universe mismatch");
    }
    if (cfg_.universe % r_ != 0) {
      throw std::invalid_argument("CuckooTable: table size must divide universe in permutation mode");
    }
    id_space_ = cfg_.universe / r_;
    cell_bits_ = ceil_log2(id_space_);
    alloc_tables();
  }

  static u64 default_queue_capacity(u64 capacity) {
    return 4 * static_cast<u64>(ceil_log2(std::max<u64>(2, capacity))) + 8;
  }

  CuckooMode mode() const { return mode_; }
  u64 table_size() const { return r_; }
  u64 universe() const { return cfg_.universe; }
  u64 id_space() const { return id_space_; }
  int cell_bits() const { return cell_bits_; }
  u64 size() const { return live_ + queue_.size(); }
  u64 table_occupancy() const { return live_; }
  u64 queue_length() const { return queue_.size(); }
  u64 queue_capacity() const { return queue_capacity_; }
  bool failed() const { return failed_; }
  const CuckooStats& stats() const { return stats_; }
  const StepCounter& steps() const { return steps_; }
  void set_hook(Hook hook) { hook_ = std::move(hook); }

  bool lookup(u64 x) const {
    check_key(x);
    if (queued_.count(x)) return true;
    auto [c1, id1] = locate(x, 1);
    if (occ_[0].get(c1) && cells_[0].get(c1) == id1) return true;
    auto [c2, id2] = locate(x, 2);
    if (occ_[1].get(c2) && cells_[1].get(c2) == id2) return true;
    return false;
  }

  Status insert(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(5);
    if (lookup(x)) return Status::kDuplicate;
    if (!push_back(x, 1)) return Status::kStructuralFailure;
    ++stats_.inserts;
    return run_moves();
  }

  Status erase(u64 x) {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    check_key(x);
    steps_.charge(5);
    auto qit = queued_.find(x);
    if (qit != queued_.end()) {
      queue_.erase(qit->second);
      queued_.erase(qit);
      return Status::kOk;
    }
    auto [c1, id1] = locate(x, 1);
    if (occ_[0].get(c1) && cells_[0].get(c1) == id1) {
      occ_[0].set(c1, false);
      --live_;
      return Status::kOk;
    }
    auto [c2, id2] = locate(x, 2);
    if (occ_[1].get(c2) && cells_[1].get(c2) == id2) {
      occ_[1].set(c2, false);
      --live_;
      return Status::kOk;
    }
    return Status::kAbsent;
  }

  // Drives up to L queued moves without inserting; lets callers drain pending
  // walks on operations of their own.
  Status process_pending() {
    steps_.begin_op();
    if (failed_) return Status::kFailedState;
    return run_moves();
  }

  // Full key currently stored in (table b, cell index); permutation mode
  // inverts the identity back through pi_b.
  u64 reconstruct(int b, u64 index) const {
    if (!occ_[b - 1].get(index)) throw std::out_of_range("CuckooTable: empty cell");
    u64 stored = cells_[b - 1].get(index);
    if (mode_ == CuckooMode::kFunction) return stored;
    const Perm& pi = b == 1 ? *pi1_ : *pi2_;
    return pi.invert(index * id_space_ + stored);
  }

  bool cell_occupied(int b, u64 index) const { return occ_[b - 1].get(index); }

  // (cell index, stored representation) for key x in table b.
  std::pair<u64, u64> locate(u64 x, int b) const {
    if (mode_ == CuckooMode::kFunction) {
      return {b == 1 ? h1_(x) : h2_(x), x};
    }
    const Perm& pi = b == 1 ? *pi1_ : *pi2_;
    u64 y = pi.apply(x);
    return {y / id_space_, y % id_space_};
  }

  // Members currently parked in the queue (full keys), head first.
  std::vector<std::pair<u64, int>> queue_contents() const {
    return {queue_.begin(), queue_.end()};
  }

  const PackedCells& table_cells(int b) const { return cells_[b - 1]; }
  const Bitmap& table_occupancy(int b) const { return occ_[b - 1]; }
  const KWiseHash& function_hash(int b) const { return b == 1 ? h1_ : h2_; }
  const PermPtr& permutation(int b) const { return b == 1 ? pi1_ : pi2_; }

  // The words the two tables plus queue buffer account for in space audits.
  u64 table_bits() const { return 2 * r_ * static_cast<u64>(cell_bits_) + 2 * r_; }

  template <typename Writer>
  void save(Writer& w) const {
    if (mode_ == CuckooMode::kFunction) {
      for (const KWiseHash* h : {&h1_, &h2_}) {
        w.put_u64(h->p);
        w.put_u64(h->range);
        w.put_u64(h->universe);
        w.put_u64_vec(h->coeffs);
      }
    } else {
      pi1_->save(w);
      pi2_->save(w);
    }
    save_payload(w);
  }

  template <typename Reader>
  void restore(Reader& rd) {
    if (mode_ == CuckooMode::kFunction) {
      for (KWiseHash* h : {&h1_, &h2_}) {
        h->p = rd.get_u64();
        h->range = rd.get_u64();
        h->universe = rd.get_u64();
        h->coeffs = rd.get_u64_vec();
      }
    } else {
      rebind_permutations(load_perm(rd), load_perm(rd));
    }
    restore_payload(rd);
  }

  // Tables, queue and flags without the hash descriptors; used when several
  // tables share permutations serialized once by their owner.
  template <typename Writer>
  void save_payload(Writer& w) const {
    for (int t = 0; t < 2; ++t) {
      w.put_u64_vec(cells_[t].words());
      w.put_u64_vec(occ_[t].words());
    }
    w.put_u64(live_);
    w.put_u64(queue_.size());
    for (const auto& [key, b] : queue_) {
      w.put_u64(key);
      w.put_u32(static_cast<u32>(b));
    }
    w.put_u8(failed_ ? 1 : 0);
  }

  template <typename Reader>
  void restore_payload(Reader& rd) {
    for (int t = 0; t < 2; ++t) {
      cells_[t].words() = rd.get_u64_vec();
      occ_[t].words() = rd.get_u64_vec();
    }
    live_ = rd.get_u64();
    u64 qn = rd.get_u64();
    queue_.clear();
    queued_.clear();
    for (u64 i = 0; i < qn; ++i) {
      u64 key = rd.get_u64();
      int b = static_cast<int>(rd.get_u32());
      queue_.emplace_back(key, b);
      queued_[key] = std::prev(queue_.end());
    }
    failed_ = rd.get_u8() != 0;
    cdm_.clear();
    cdm_cycle_closed_ = false;
  }

  void rebind_permutations(PermPtr pi1, PermPtr pi2) {
    if (mode_ != CuckooMode::kPermutation) throw std::logic_error("CuckooTable: not permutation mode");
    if (pi1->size() != cfg_.universe || pi2->size() != cfg_.universe) {
      throw std::runtime_error("CuckooTable: permutation universe mismatch");
    }
    pi1_ = std::move(pi1);
    pi2_ = std::move(pi2);
  }

 private:
  void init_geometry() {
    if (cfg_.capacity == 0) throw std::invalid_argument("CuckooTable: capacity must be positive");
    if (cfg_.universe == 0) throw std::invalid_argument("CuckooTable: universe required");
    r_ = cfg_.r_override
             ? cfg_.r_override
             : static_cast<u64>(
                   std::ceil((1.0 + cfg_.fill_slack) * static_cast<double>(cfg_.capacity)));
    if (r_ == 0) throw std::invalid_argument("CuckooTable: empty tables");
    queue_capacity_ =
        cfg_.queue_capacity ? cfg_.queue_capacity : default_queue_capacity(cfg_.capacity);
  }

  void alloc_tables() {
    for (int t = 0; t < 2; ++t) {
      cells_[t] = PackedCells(r_, cell_bits_);
      occ_[t] = Bitmap(r_);
    }
  }

  void check_key(u64 x) const {
    if (x >= cfg_.universe) throw std::out_of_range("CuckooTable: key outside universe");
  }

  bool push_back(u64 x, int b) {
    if (queue_.size() >= queue_capacity_) {
      failed_ = true;
      ++stats_.structural_failures;
      return false;
    }
    queue_.emplace_back(x, b);
    queued_[x] = std::prev(queue_.end());
    stats_.queue_high_water = std::max<u64>(stats_.queue_high_water, queue_.size());
    steps_.charge();
    return true;
  }

  bool push_front(u64 x, int b) {
    if (queue_.size() >= queue_capacity_) {
      failed_ = true;
      ++stats_.structural_failures;
      return false;
    }
    queue_.emplace_front(x, b);
    queued_[x] = queue_.begin();
    stats_.queue_high_water = std::max<u64>(stats_.queue_high_water, queue_.size());
    steps_.charge();
    return true;
  }

  void cdm_insert(u64 y, int b) {
    if (!cdm_.insert({y, b}).second) cdm_cycle_closed_ = true;
  }

  bool cdm_lookup(u64 y, int b) const {
    return cdm_cycle_closed_ && cdm_.count({y, b}) != 0;
  }

  void cdm_reset() {
    cdm_.clear();
    cdm_cycle_closed_ = false;
  }

  Status run_moves() {
    u64 nestless = 0;
    int b = 0;
    bool have = false;
    u64 moves = 0;
    for (u64 i = 0; i < cfg_.move_budget; ++i) {
      if (!have) {
        if (queue_.empty()) break;
        auto [y, yb] = queue_.front();
        queued_.erase(y);
        queue_.pop_front();
        nestless = y;
        b = yb;
        have = true;
        steps_.charge();
      }
      ++moves;
      if (hook_) {
        ++stats_.hook_calls;
        steps_.charge();
        if (hook_(nestless)) {
          ++stats_.hook_placements;
          have = false;
          cdm_reset();
          continue;
        }
      }
      auto [cell, id] = locate(nestless, b);
      steps_.charge();
      if (!occ_[b - 1].get(cell)) {
        occ_[b - 1].set(cell, true);
        cells_[b - 1].set(cell, id);
        ++live_;
        cdm_reset();
        have = false;
        continue;
      }
      if (cdm_lookup(nestless, b)) {
        ++stats_.second_cycles;
        cdm_reset();
        if (!push_back(nestless, b)) return Status::kStructuralFailure;
        have = false;
        continue;
      }
      u64 victim = reconstruct(b, cell);
      cells_[b - 1].set(cell, id);  // occupancy unchanged: victim out, y in
      cdm_insert(nestless, b);
      steps_.charge(2);
      nestless = victim;
      b = 3 - b;
    }
    stats_.moves += moves;
    stats_.max_moves_per_insert = std::max(stats_.max_moves_per_insert, moves);
    if (have) {
      if (!push_front(nestless, b)) return Status::kStructuralFailure;
    }
    return Status::kOk;
  }

  CuckooConfig cfg_;
  CuckooMode mode_;
  KWiseHash h1_, h2_;
  PermPtr pi1_, pi2_;
  u64 r_ = 0;
  u64 id_space_ = 0;
  int cell_bits_ = 64;
  u64 queue_capacity_ = 0;
  PackedCells cells_[2];
  Bitmap occ_[2];
  std::list<std::pair<u64, int>> queue_;
  std::unordered_map<u64, std::list<std::pair<u64, int>>::iterator> queued_;
  std::unordered_set<std::pair<u64, u64>, PairKeyHash> cdm_;
  bool cdm_cycle_closed_ = false;
  u64 live_ = 0;
  bool failed_ = false;
  Hook hook_;
  CuckooStats stats_;
  mutable StepCounter steps_;
};

// Sampled function-mode hash pair with range r.
inline std::pair<KWiseHash, KWiseHash> sample_cuckoo_hashes(u64 universe, u64 r, std::size_t k,
                                                            Rng& rng) {
  return {sample_kwise(k, universe, r, rng), sample_kwise(k, universe, r, rng)};
}

}  // namespace backyard
