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

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "censer/augment.hpp"
#include "censer/corpus.hpp"
#include "censer/ctc.hpp"
#include "censer/curriculum.hpp"
#include "censer/model.hpp"
#include "censer/parallel.hpp"
#include "censer/rng.hpp"
#include "censer/scoring.hpp"

namespace censer {

/// Which unlabeled entries of a refilled pool are trained on.
enum class SelectionMode {
  kCurriculumCs,   // top eta_k by confidence score
  kCurriculumCrs,  // top eta_k by confidence-robustness score
  kThreshold,      // every entry with CS >= tau
  kFullPool,       // every entry, no ranking cut
  kOracle,         // top eta_k by true pseudo-label error
  kSupervised,     // no unlabeled data; labeled batches only
};

inline std::string to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::kCurriculumCs: return "curriculum-cs";
    case SelectionMode::kCurriculumCrs: return "curriculum-crs";
    case SelectionMode::kThreshold: return "threshold";
    case SelectionMode::kFullPool: return "full-pool";
    case SelectionMode::kOracle: return "oracle";
    case SelectionMode::kSupervised: return "supervised";
  }
  return "?";
}

inline SelectionMode selection_mode_from_string(const std::string& s) {
  for (auto m : {SelectionMode::kCurriculumCs, SelectionMode::kCurriculumCrs, SelectionMode::kThreshold,
                 SelectionMode::kFullPool, SelectionMode::kOracle, SelectionMode::kSupervised})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown selection mode '" + s + "'");
}

struct TrainConfig {
  // model
  int window = 2;
  int hidden = 64;
  // optimizer and schedule
  double peak_lr = 2e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t warmup_steps = 2000;  // S
  std::int64_t ssl_iters = 3000;     // F, counted in labeled batches
  int mu = 2;
  std::size_t batch_size_labeled = 16;
  std::size_t batch_size_unlabeled = 16;
  // pool and curriculum
  std::size_t pool_batches = 20;  // C, in unlabeled batches
  int stages = 5;                 // K
  SelectionMode selection = SelectionMode::kCurriculumCs;
  double tau = 0.95;
  double lambda = 1.0;
  CsVariant cs_variant = CsVariant::kFirstFrame;
  // teacher
  std::optional<double> ema_alpha;  // derived from ema_retention when unset
  double ema_retention = 0.3;
  // augmentation
  MaskPolicy strong{2, 0.2, 2, 0.2, MaskKind::kStrong};
  MaskPolicy weak = weak_of(MaskPolicy{2, 0.2, 2, 0.2, MaskKind::kStrong});
  // bookkeeping
  std::int64_t eval_every = 250;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  int divergence_patience = 3;
  double divergence_ter = 0.98;

  double alpha() const { return ema_alpha ? *ema_alpha : ema_alpha_from_retention(ssl_iters, ema_retention); }
  std::int64_t total_iters() const { return warmup_steps + ssl_iters; }
  LrSchedule lr_schedule() const { return LrSchedule{peak_lr, total_iters()}; }

  void validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument(m); };
    if (window < 0 || hidden < 1) fail("model: need window >= 0 and hidden >= 1");
    if (!(peak_lr > 0.0)) fail("peak_lr must be > 0");
    if (warmup_steps < 0) fail("S must be >= 0");
    if (ssl_iters < 1) fail("F must be >= 1");
    if (mu < 1) fail("mu must be >= 1");
    if (pool_batches < 1) fail("C must be >= 1");
    if (stages < 1 || stages > ssl_iters) fail("K must satisfy 1 <= K <= F");
    if (lambda < 0.0) fail("lambda must be >= 0");
    if (tau < 0.0 || tau > 1.0) fail("tau must be in [0, 1]");
    if (batch_size_labeled < 1 || batch_size_unlabeled < 1) fail("batch sizes must be >= 1");
    if (ema_alpha && !(*ema_alpha >= 0.0 && *ema_alpha <= 1.0)) fail("alpha must be in [0, 1]");
    if (!(ema_retention > 0.0 && ema_retention < 1.0)) fail("ema retention must be in (0, 1)");
    if (eval_every < 1) fail("eval_every must be >= 1");
    strong.validate();
    weak.validate();
    if (strong.kind != MaskKind::kStrong || weak.kind != MaskKind::kWeak) fail("mask policy kinds are swapped");
  }
};

/// Borrowed views of the corpus splits used by a run.
struct Dataset {
  const std::vector<Utterance>* labeled = nullptr;
  UnlabeledView unlabeled;
  const std::vector<Utterance>* dev = nullptr;
  const std::vector<Utterance>* test = nullptr;
  int vocab_size = 0;

  static Dataset of(const Corpus& c) {
    return {&c.labeled, c.unlabeled_view(), &c.dev, &c.test, c.spec.vocab_size};
  }
  static Dataset of(const CorpusHandle& h) {
    return {&h.labeled(), h.unlabeled(), &h.dev(), &h.test(), h.spec().vocab_size};
  }

  int feature_dim() const { return static_cast<int>(labeled->front().features.cols()); }
};

struct Counters {
  std::int64_t labeled_batches = 0;
  std::int64_t unlabeled_batches = 0;
  std::int64_t unlabeled_utterances = 0;
  std::int64_t skipped_empty = 0;
  std::int64_t skipped_infeasible = 0;
  std::int64_t refills = 0;
};

/// Everything the training loop owns.
struct TrainState {
  ParamSet params;
  AdamState optimizer;
  ParamSet ema;
  std::int64_t iteration = 0;  // global: warmup steps then SSL iterations
  Counters counters;
};

inline ModelDims model_dims(const TrainConfig& cfg, int feature_dim, int vocab) {
  return ModelDims{cfg.window, feature_dim, cfg.hidden, vocab};
}

inline TrainState init_state(const TrainConfig& cfg, const ModelDims& dims) {
  TrainState s;
  s.params = init_params(derive_seed(cfg.seed, {0x1A17}), dims);
  s.optimizer = AdamState(s.params.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  s.ema = s.params;
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double ter = 0.0;
  double ter_easy = 0.0;  // NaN if the split has no easy utterances
  double ter_hard = 0.0;
};

/// Greedy-decodes every utterance without augmentation.
inline EvalResult evaluate_detailed(const ParamSet& params, const std::vector<Utterance>& utts, unsigned workers = 1) {
  std::vector<TokenSeq> hyps(utts.size());
  parallel_for(utts.size(), workers, [&](std::size_t i) { hyps[i] = greedy_decode(forward(params, utts[i].features)).pl; });
  TerAccumulator all, easy, hard;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    all.add(hyps[i], utts[i].transcript);
    (utts[i].stratum == Stratum::kEasy ? easy : hard).add(hyps[i], utts[i].transcript);
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  return {all.rate(), easy.ref_length() ? easy.rate() : nan, hard.ref_length() ? hard.rate() : nan};
}

/// Corpus token error rate.
inline double evaluate(const ParamSet& params, const std::vector<Utterance>& utts, unsigned workers = 1) {
  return evaluate_detailed(params, utts, workers).ter;
}

// ---------------------------------------------------------------------------
// Run log
// ---------------------------------------------------------------------------

struct RunLogRecord {
  std::string phase;  // "warmup" or "ssl"
  std::int64_t iter = 0;
  int stage = 0;       // curriculum stage of this iteration (0 during warmup)
  int pool_stage = 0;  // stage frozen at the last refill
  double lr = 0.0;
  std::optional<double> sup_loss;
  std::optional<double> unsup_loss;
  double dev_ter = 0.0;
  std::optional<double> dev_ter_ema;
  std::optional<double> pool_mean_score;
  std::optional<double> pool_mean_true_error;
  std::int64_t selected_count = 0;
  Counters counters;
};

inline nlohmann::ordered_json to_json(const RunLogRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  return {{"phase", r.phase},
          {"iter", r.iter},
          {"stage", r.stage},
          {"pool_stage", r.pool_stage},
          {"lr", r.lr},
          {"sup_loss", opt(r.sup_loss)},
          {"unsup_loss", opt(r.unsup_loss)},
          {"dev_ter", r.dev_ter},
          {"dev_ter_ema", opt(r.dev_ter_ema)},
          {"pool_mean_score", opt(r.pool_mean_score)},
          {"pool_mean_true_error", opt(r.pool_mean_true_error)},
          {"selected_count", r.selected_count},
          {"labeled_batches", r.counters.labeled_batches},
          {"unlabeled_batches", r.counters.unlabeled_batches},
          {"skipped_empty", r.counters.skipped_empty},
          {"skipped_infeasible", r.counters.skipped_infeasible},
          {"refills", r.counters.refills}};
}

struct RunLog {
  std::vector<RunLogRecord> records;

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
  }
};

/// Optional observation points, mostly for tests and diagnostics.
struct TrainHooks {
  std::function<void(const PLPool&, std::int64_t ssl_iter)> on_refill;
  /// Unlabeled (utt_id, target) pairs used by one step.
  std::function<void(std::int64_t ssl_iter, const std::vector<std::pair<std::string, TokenSeq>>&)> on_unlabeled_step;
  std::function<void(const TrainState&, std::int64_t ssl_iter)> on_ssl_iteration;
  std::function<void(const RunLogRecord&)> on_record;
  std::function<void(const TrainState&)> on_eval;
};

// ---------------------------------------------------------------------------
// One optimization step
// ---------------------------------------------------------------------------

struct TrainSample {
  const FeatureMatrix* features = nullptr;
  const TokenSeq* target = nullptr;
  bool unlabeled = false;
  std::uint64_t aug_seed = 0;
};

struct StepLoss {
  double sup_sum = 0.0;
  std::int64_t sup_count = 0;
  double unsup_sum = 0.0;
  std::int64_t unsup_count = 0;
  std::int64_t infeasible = 0;
};

/// Strongly augments every sample, sums CTC gradients in sample order and
/// takes one Adam step on the mean. Samples whose target cannot be aligned
/// are skipped.
inline StepLoss train_step(TrainState& state, std::span<const TrainSample> samples, double lr,
                           const TrainConfig& cfg) {
  struct Slot {
    std::optional<ParamSet> grad;
    double loss = 0.0;
  };
  std::vector<Slot> slots(samples.size());
  parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
    const auto& s = samples[i];
    const FeatureMatrix aug = augment(*s.features, cfg.strong, s.aug_seed);
    const ForwardCache cache = forward_cached(state.params, aug);
    try {
      CtcResult ctc = ctc_loss_grad(cache.logits, *s.target);
      slots[i].loss = ctc.loss;
      slots[i].grad = backward(state.params, cache, ctc.grad);
    } catch (const InfeasibleTarget&) {
    }
  });
  StepLoss out;
  ParamSet total(state.params.dims());
  std::int64_t used = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!slots[i].grad) {
      ++out.infeasible;
      continue;
    }
    total.values() += slots[i].grad->values();
    ++used;
    if (samples[i].unlabeled) {
      out.unsup_sum += slots[i].loss;
      ++out.unsup_count;
    } else {
      out.sup_sum += slots[i].loss;
      ++out.sup_count;
    }
  }
  if (used > 0) {
    total.values() /= static_cast<double>(used);
    adam_step(state.params, state.optimizer, total, lr);
  }
  return out;
}

namespace detail {

enum StreamTag : std::uint64_t {
  kLabeledDraw = 0x11,
  kLabeledAug = 0x12,
  kUnlabeledAug = 0x13,
  kPoolSampler = 0x14,
  kWeakAug = 0x15,
};

inline std::vector<std::size_t> draw_labeled(std::size_t n_labeled, std::size_t batch, std::uint64_t seed,
                                             std::int64_t iteration) {
  std::mt19937_64 rng(derive_seed(seed, {kLabeledDraw, static_cast<std::uint64_t>(iteration)}));
  std::uniform_int_distribution<std::size_t> pick(0, n_labeled - 1);
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = pick(rng);
  return out;
}

/// Running means of the losses between two log records.
struct LossWindow {
  double sup = 0.0, unsup = 0.0;
  std::int64_t n_sup = 0, n_unsup = 0;

  void add(const StepLoss& s) {
    sup += s.sup_sum;
    n_sup += s.sup_count;
    unsup += s.unsup_sum;
    n_unsup += s.unsup_count;
  }
  std::optional<double> sup_mean() const { return n_sup ? std::optional(sup / n_sup) : std::nullopt; }
  std::optional<double> unsup_mean() const { return n_unsup ? std::optional(unsup / n_unsup) : std::nullopt; }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Supervised warmup
// ---------------------------------------------------------------------------

/// Runs the remaining supervised steps up to S on strongly augmented labeled
/// batches. The learning-rate schedule spans S + F iterations.
inline void supervised_warmup(TrainState& state, const Dataset& data, const TrainConfig& cfg, RunLog& log,
                              const TrainHooks& hooks = {}) {
  if (!data.labeled || data.labeled->empty()) throw EmptyCorpus("no labeled data");
  const auto schedule = cfg.lr_schedule();
  detail::LossWindow window;
  while (state.iteration < cfg.warmup_steps) {
    const std::int64_t g = state.iteration;
    const double lr = lr_at(g, schedule);
    const auto picks = detail::draw_labeled(data.labeled->size(), cfg.batch_size_labeled, cfg.seed, g);
    std::vector<TrainSample> samples;
    for (std::size_t j = 0; j < picks.size(); ++j) {
      const auto& u = (*data.labeled)[picks[j]];
      samples.push_back({&u.features, &u.transcript, false,
                         derive_seed(cfg.seed, {detail::kLabeledAug, static_cast<std::uint64_t>(g), j})});
    }
    window.add(train_step(state, samples, lr, cfg));
    ++state.counters.labeled_batches;
    ++state.iteration;
    if (state.iteration % cfg.eval_every == 0 || state.iteration == cfg.warmup_steps) {
      RunLogRecord r;
      r.phase = "warmup";
      r.iter = state.iteration;
      r.lr = lr;
      r.sup_loss = window.sup_mean();
      r.dev_ter = data.dev ? evaluate(state.params, *data.dev, cfg.workers) : 0.0;
      r.counters = state.counters;
      log.records.push_back(r);
      if (hooks.on_record) hooks.on_record(r);
      if (hooks.on_eval) hooks.on_eval(state);
      window = {};
    }
  }
}

// ---------------------------------------------------------------------------
// Semi-supervised phase
// ---------------------------------------------------------------------------

/// Builds the pool scorer for one refill. It closes over a copy of the EMA
/// weights, so the scores reflect the teacher at refill time only.
inline PlScorer make_scorer(const ParamSet& ema_snapshot, const UnlabeledView& corpus, const TrainConfig& cfg,
                            std::size_t refill_index) {
  const bool robust = cfg.selection == SelectionMode::kCurriculumCrs;
  return [params = ema_snapshot, corpus, robust, lambda = cfg.lambda, variant = cfg.cs_variant, weak = cfg.weak,
          seed = cfg.seed, refill_index](std::size_t idx) {
    const auto& feats = corpus.features(idx);
    auto clean = greedy_decode(forward(params, feats));
    PlScore out;
    out.cs = confidence_score(clean.path, variant);
    out.score = out.cs;
    if (robust) {
      const auto perturbed_feats = augment(feats, weak, derive_seed(seed, {detail::kWeakAug, refill_index, idx}));
      auto perturbed = greedy_decode(forward(params, perturbed_feats));
      out.score = crs(clean.pl, out.cs, perturbed.pl, confidence_score(perturbed.path, variant), lambda);
    }
    out.pl = std::move(clean.pl);
    return out;
  };
}

inline SelectionRule selection_rule(const TrainConfig& cfg, int stage) {
  switch (cfg.selection) {
    case SelectionMode::kCurriculumCs:
    case SelectionMode::kCurriculumCrs: return SelectionRule::curriculum(stage, cfg.stages);
    case SelectionMode::kOracle: return SelectionRule::oracle(stage, cfg.stages);
    case SelectionMode::kThreshold: return SelectionRule::threshold(cfg.tau);
    case SelectionMode::kFullPool:
    case SelectionMode::kSupervised: return SelectionRule::full_pool();
  }
  return SelectionRule::full_pool();
}

/// The pool-driven loop: initializes the EMA teacher from the student, then
/// for F iterations trains on one labeled batch plus mu pool batches,
/// refilling and re-scoring the pool with the teacher whenever it runs dry.
inline void semi_supervised_train(TrainState& state, const Dataset& data, const TrainConfig& cfg, RunLog& log,
                                  const TrainHooks& hooks = {}) {
  if (state.iteration != cfg.warmup_steps)
    throw InvalidArgument("semi-supervised phase must start right after S warmup steps");
  if (!data.labeled || data.labeled->empty()) throw EmptyCorpus("no labeled data");
  const bool use_unlabeled = cfg.selection != SelectionMode::kSupervised;
  if (use_unlabeled && data.unlabeled.empty()) throw EmptyCorpus("no unlabeled data");

  state.ema = state.params;
  const double alpha = cfg.alpha();
  const auto schedule = cfg.lr_schedule();
  const auto curriculum = CurriculumSchedule::make(cfg.stages, cfg.ssl_iters);

  PLPool pool(cfg.pool_batches, cfg.batch_size_unlabeled, data.unlabeled.size(),
              derive_seed(cfg.seed, {detail::kPoolSampler}), cfg.workers);
  int pool_stage = 0;
  const std::size_t max_refills_per_fetch =
      data.unlabeled.size() / pool.capacity_entries() + 2;  // one epoch plus slack

  std::int64_t ssl_iter = 0;
  auto refill = [&] {
    pool_stage = current_stage(ssl_iter, curriculum);
    pool.refill(data.unlabeled, make_scorer(state.ema, data.unlabeled, cfg, pool.refills()),
                selection_rule(cfg, pool_stage));
    ++state.counters.refills;
    if (hooks.on_refill) hooks.on_refill(pool, ssl_iter);
  };
  auto fetch = [&]() -> std::optional<std::span<const PoolEntry>> {
    if (auto b = pool.next_batch(cfg.batch_size_unlabeled)) return b;
    // Threshold selection may keep nothing; give up after a full epoch.
    for (std::size_t r = 0; r < max_refills_per_fetch; ++r) {
      refill();
      if (auto b = pool.next_batch(cfg.batch_size_unlabeled)) return b;
    }
    return std::nullopt;
  };

  detail::LossWindow window;
  int bad_evals = 0;
  for (; ssl_iter < cfg.ssl_iters; ++ssl_iter) {
    const std::int64_t g = state.iteration;
    const double lr = lr_at(g, schedule);

    const auto picks = detail::draw_labeled(data.labeled->size(), cfg.batch_size_labeled, cfg.seed, g);
    std::vector<TrainSample> samples;
    for (std::size_t j = 0; j < picks.size(); ++j) {
      const auto& u = (*data.labeled)[picks[j]];
      samples.push_back({&u.features, &u.transcript, false,
                         derive_seed(cfg.seed, {detail::kLabeledAug, static_cast<std::uint64_t>(g), j})});
    }

    // Targets are copied out of the pool: a later fetch in this iteration
    // may refill it.
    std::vector<std::pair<std::size_t, TokenSeq>> unl;
    std::vector<std::pair<std::string, TokenSeq>> used;
    if (use_unlabeled) {
      for (int b = 0; b < cfg.mu; ++b) {
        auto batch = fetch();
        if (!batch) break;
        ++state.counters.unlabeled_batches;
        for (const auto& e : *batch) {
          if (e.pl.empty()) {
            ++state.counters.skipped_empty;
            continue;
          }
          unl.emplace_back(e.corpus_index, e.pl);
          used.emplace_back(e.utt_id, e.pl);
        }
      }
    }
    for (std::size_t j = 0; j < unl.size(); ++j)
      samples.push_back({&data.unlabeled.features(unl[j].first), &unl[j].second, true,
                         derive_seed(cfg.seed, {detail::kUnlabeledAug, static_cast<std::uint64_t>(g), j})});
    state.counters.unlabeled_utterances += static_cast<std::int64_t>(unl.size());
    if (hooks.on_unlabeled_step) hooks.on_unlabeled_step(ssl_iter, used);

    const StepLoss step = train_step(state, samples, lr, cfg);
    state.counters.skipped_infeasible += step.infeasible;
    window.add(step);
    ++state.counters.labeled_batches;
    ++state.iteration;
    ema_update(state.ema, state.params, alpha);
    if (hooks.on_ssl_iteration) hooks.on_ssl_iteration(state, ssl_iter);

    const bool last = ssl_iter + 1 == cfg.ssl_iters;
    if (state.iteration % cfg.eval_every == 0 || last) {
      RunLogRecord r;
      r.phase = "ssl";
      r.iter = state.iteration;
      r.stage = current_stage(ssl_iter, curriculum);
      r.pool_stage = pool_stage;
      r.lr = lr;
      r.sup_loss = window.sup_mean();
      r.unsup_loss = window.unsup_mean();
      r.dev_ter = data.dev ? evaluate(state.params, *data.dev, cfg.workers) : 0.0;
      if (data.dev) r.dev_ter_ema = evaluate(state.ema, *data.dev, cfg.workers);
      if (!pool.selected().empty()) {
        double score = 0.0, err = 0.0;
        std::int64_t n_scored = 0;
        for (const auto& e : pool.selected()) {
          if (e.score > kEmptyPlScore) {
            score += e.score;
            ++n_scored;
          }
          err += e.true_error;
        }
        if (n_scored) r.pool_mean_score = score / static_cast<double>(n_scored);
        r.pool_mean_true_error = err / static_cast<double>(pool.selected().size());
      }
      r.selected_count = static_cast<std::int64_t>(pool.selected().size());
      r.counters = state.counters;
      log.records.push_back(r);
      if (hooks.on_record) hooks.on_record(r);
      if (hooks.on_eval) hooks.on_eval(state);
      window = {};
      bad_evals = (data.dev && r.dev_ter > cfg.divergence_ter) ? bad_evals + 1 : 0;
      if (bad_evals >= cfg.divergence_patience)
        throw DivergenceDetected("dev TER above " + std::to_string(cfg.divergence_ter) + " for " +
                                 std::to_string(bad_evals) + " consecutive evaluations (iteration " +
                                 std::to_string(state.iteration) + ", last TER " + std::to_string(r.dev_ter) +
                                 ", pool mean true error " +
                                 (r.pool_mean_true_error ? std::to_string(*r.pool_mean_true_error) : "n/a") + ")");
    }
  }
}

}  // namespace censer
