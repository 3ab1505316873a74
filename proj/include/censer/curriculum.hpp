// Copyright 2026 The censer-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "censer/corpus.hpp"
#include "censer/parallel.hpp"
#include "censer/scoring.hpp"
#include "censer/types.hpp"

namespace censer {

// ---------------------------------------------------------------------------
// Curriculum pace
// ---------------------------------------------------------------------------

/// Stage k (1-based) lasts round(k / sum(1..K) * F) iterations. The last stage
/// absorbs the rounding remainder so the durations sum to F. Every stage gets
/// at least one iteration.
inline std::vector<std::int64_t> stage_durations(int K, std::int64_t F) {
  if (K < 1) throw InvalidStageCount("K = " + std::to_string(K) + " must be >= 1");
  if (F < K) throw InvalidStageCount("F = " + std::to_string(F) + " must be >= K = " + std::to_string(K));
  const std::int64_t sum_k = static_cast<std::int64_t>(K) * (K + 1) / 2;
  std::vector<std::int64_t> d(K);
  std::int64_t used = 0;
  for (int k = 1; k < K; ++k) {
    // round-half-up of k * F / sum_k in integers
    d[k - 1] = std::max<std::int64_t>(1, (2 * k * F + sum_k) / (2 * sum_k));
    used += d[k - 1];
  }
  d[K - 1] = F - used;
  // Only reachable when F is close to K: move iterations back from the
  // longest earlier stages until the last one is non-empty.
  for (int j = K - 2; d[K - 1] < 1 && j >= 0; --j) {
    while (d[j] > 1 && d[K - 1] < 1) {
      --d[j];
      ++d[K - 1];
    }
  }
  return d;
}

struct CurriculumSchedule {
  int K = 1;
  std::int64_t F = 1;
  std::vector<std::int64_t> durations;
  std::vector<std::int64_t> boundaries;  // boundaries[k-1] = first iteration after stage k

  static CurriculumSchedule make(int K, std::int64_t F) {
    CurriculumSchedule s;
    s.K = K;
    s.F = F;
    s.durations = stage_durations(K, F);
    std::int64_t acc = 0;
    for (auto d : s.durations) s.boundaries.push_back(acc += d);
    return s;
  }
};

/// 1-based stage containing SSL iteration `iter`.
inline int current_stage(std::int64_t iter, const CurriculumSchedule& sched) {
  if (iter < 0 || iter >= sched.F)
    throw IterOutOfRange("iteration " + std::to_string(iter) + " outside [0, " + std::to_string(sched.F) + ")");
  const auto it = std::upper_bound(sched.boundaries.begin(), sched.boundaries.end(), iter);
  return static_cast<int>(it - sched.boundaries.begin()) + 1;
}

/// Number of pool entries kept at stage k: floor(k / K * count), at least one.
inline std::size_t eta(int k, int K, std::size_t pool_entry_count) {
  if (K < 1 || k < 1 || k > K) throw InvalidArgument("eta needs 1 <= k <= K");
  if (pool_entry_count < 1) throw InvalidArgument("eta needs a non-empty pool");
  return std::max<std::size_t>(1, static_cast<std::size_t>(k) * pool_entry_count / static_cast<std::size_t>(K));
}

// ---------------------------------------------------------------------------
// Pool entries and selection rules
// ---------------------------------------------------------------------------

/// Score given to entries whose pseudo label is empty; sorts below everything.
inline constexpr double kEmptyPlScore = -1.0e30;

struct PoolEntry {
  std::size_t corpus_index = 0;  // position in the unlabeled view (features live there)
  std::string utt_id;
  TokenSeq pl;
  double score = 0.0;
  double cs = 0.0;
  TokenSeq true_ref;  // diagnostics and oracle ordering only
  double true_error = 0.0;
};

/// Descending score, ties by ascending utt_id.
inline bool score_order(const PoolEntry& a, const PoolEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.utt_id < b.utt_id;
}

/// Ascending true error, ties by ascending utt_id.
inline bool oracle_order(const PoolEntry& a, const PoolEntry& b) {
  if (a.true_error != b.true_error) return a.true_error < b.true_error;
  return a.utt_id < b.utt_id;
}

inline void sort_by_score(std::vector<PoolEntry>& entries) { std::sort(entries.begin(), entries.end(), score_order); }

/// Sorts by score and keeps the first eta(k, K, n) entries.
inline std::vector<PoolEntry> curriculum_select(std::vector<PoolEntry> entries, int k, int K) {
  if (entries.empty()) return entries;
  sort_by_score(entries);
  entries.resize(eta(k, K, entries.size()));
  return entries;
}

/// Keeps the entries whose confidence reaches tau, in score order.
inline std::vector<PoolEntry> threshold_select(std::vector<PoolEntry> entries, double tau) {
  sort_by_score(entries);
  std::erase_if(entries, [tau](const PoolEntry& e) { return !(e.cs >= tau); });
  return entries;
}

/// Like curriculum_select, but ranks by the true pseudo-label error.
inline std::vector<PoolEntry> oracle_select(std::vector<PoolEntry> entries, int k, int K) {
  if (entries.empty()) return entries;
  std::sort(entries.begin(), entries.end(), oracle_order);
  entries.resize(eta(k, K, entries.size()));
  return entries;
}

/// How a freshly scored pool is reduced to the entries used for training.
struct SelectionRule {
  enum class Kind { kCurriculum, kOracle, kThreshold };
  Kind kind = Kind::kCurriculum;
  int stage = 1;
  int stages = 1;
  double tau = 0.95;

  static SelectionRule curriculum(int k, int K) { return {Kind::kCurriculum, k, K, 0.0}; }
  static SelectionRule oracle(int k, int K) { return {Kind::kOracle, k, K, 0.0}; }
  static SelectionRule threshold(double tau) { return {Kind::kThreshold, 1, 1, tau}; }
  static SelectionRule full_pool() { return curriculum(1, 1); }
};

inline std::vector<PoolEntry> apply_selection(std::vector<PoolEntry> entries, const SelectionRule& rule) {
  switch (rule.kind) {
    case SelectionRule::Kind::kCurriculum: return curriculum_select(std::move(entries), rule.stage, rule.stages);
    case SelectionRule::Kind::kOracle: return oracle_select(std::move(entries), rule.stage, rule.stages);
    case SelectionRule::Kind::kThreshold: return threshold_select(std::move(entries), rule.tau);
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Epoch sampler and the pool
// ---------------------------------------------------------------------------

/// Draws corpus indices without replacement; reshuffles once every index of
/// the current epoch has been handed out.
class EpochSampler {
 public:
  EpochSampler(std::size_t corpus_size, std::uint64_t seed) : rng_(seed), order_(corpus_size) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    next_ = order_.size();  // shuffle lazily on first draw
  }

  /// Up to n indices; fewer at the end of an epoch.
  std::vector<std::size_t> draw(std::size_t n) {
    if (order_.empty()) throw EmptyCorpus("unlabeled corpus is empty");
    if (next_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      next_ = 0;
      ++epoch_;
    }
    const std::size_t take = std::min(n, order_.size() - next_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(next_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(next_ + take));
    next_ += take;
    return out;
  }

  /// Number of epochs started so far.
  std::size_t epoch() const { return epoch_; }
  std::size_t remaining_in_epoch() const { return order_.size() - next_; }

 private:
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t next_ = 0;
  std::size_t epoch_ = 0;
};

/// What a scorer reports for one unlabeled utterance.
struct PlScore {
  TokenSeq pl;
  double cs = 0.0;
  double score = 0.0;  // the ranking score (CS or CRS)
};

/// Scores the unlabeled utterance at a corpus index. Must be pure given the
/// parameter snapshot it closes over.
using PlScorer = std::function<PlScore(std::size_t corpus_index)>;

/// Temporary pseudo-label pool. Capacity is counted in unlabeled batches.
class PLPool {
 public:
  PLPool(std::size_t capacity_batches, std::size_t batch_size, std::size_t corpus_size, std::uint64_t seed,
         unsigned workers = 1)
      : capacity_batches_(capacity_batches), batch_size_(batch_size), sampler_(corpus_size, seed), workers_(workers) {
    if (capacity_batches < 1 || batch_size < 1) throw InvalidArgument("pool capacity and batch size must be >= 1");
  }

  std::size_t capacity_entries() const { return capacity_batches_ * batch_size_; }

  /// Draw the next capacity_entries() utterances, score them, and keep the
  /// entries chosen by `rule`.
  void refill(const UnlabeledView& corpus, const PlScorer& scorer, const SelectionRule& rule) {
    if (corpus.empty()) throw EmptyCorpus("cannot refill from an empty corpus");
    const auto indices = sampler_.draw(capacity_entries());
    std::vector<PoolEntry> entries(indices.size());
    parallel_for(indices.size(), workers_, [&](std::size_t i) {
      PoolEntry& e = entries[i];
      e.corpus_index = indices[i];
      e.utt_id = corpus.utt_id(e.corpus_index);
      PlScore s = scorer(e.corpus_index);
      e.pl = std::move(s.pl);
      e.cs = s.cs;
      e.score = e.pl.empty() ? kEmptyPlScore : s.score;
      e.true_ref = corpus.oracle_transcript(e.corpus_index);
      e.true_error = e.true_ref.empty() ? (e.pl.empty() ? 0.0 : 1.0) : token_error_rate(e.pl, e.true_ref);
    });
    // Merge in a scheduling-independent order before any sort.
    std::sort(entries.begin(), entries.end(), [](const PoolEntry& a, const PoolEntry& b) { return a.utt_id < b.utt_id; });
    selected_ = apply_selection(entries, rule);
    drawn_ = std::move(entries);
    if (rule.kind == SelectionRule::Kind::kOracle)
      std::sort(drawn_.begin(), drawn_.end(), oracle_order);
    else
      sort_by_score(drawn_);
    rule_ = rule;
    cursor_ = 0;
    ++refills_;
  }

  /// Next batch in selection order, or nullopt once every selected entry
  /// has been fetched.
  std::optional<std::span<const PoolEntry>> next_batch(std::size_t batch_size) {
    if (exhausted()) return std::nullopt;
    const std::size_t n = std::min(batch_size, selected_.size() - cursor_);
    std::span<const PoolEntry> out(selected_.data() + cursor_, n);
    cursor_ += n;
    return out;
  }

  bool exhausted() const { return cursor_ >= selected_.size(); }
  void clear() {
    selected_.clear();
    drawn_.clear();
    cursor_ = 0;
  }

  /// Entries kept for training, in fetch order.
  const std::vector<PoolEntry>& selected() const { return selected_; }
  /// Every entry drawn at the last refill, in the rule's ranking order.
  const std::vector<PoolEntry>& drawn() const { return drawn_; }
  const SelectionRule& rule() const { return rule_; }
  std::size_t cursor() const { return cursor_; }
  std::size_t refills() const { return refills_; }
  const EpochSampler& sampler() const { return sampler_; }

 private:
  std::size_t capacity_batches_;
  std::size_t batch_size_;
  EpochSampler sampler_;
  unsigned workers_;
  std::vector<PoolEntry> drawn_;
  std::vector<PoolEntry> selected_;
  SelectionRule rule_;
  std::size_t cursor_ = 0;
  std::size_t refills_ = 0;
};

}  // namespace censer
