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

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace censer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

unsigned worker_count() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

/// The defaults of the run config, as a TrainConfig.
TrainConfig default_train_config() { return train_config_from_json(resolve_config({{"data_dir", ""}})); }

const Corpus& default_corpus() {
  static const Corpus c = generate(CorpusSpec{});
  return c;
}

// ---------------------------------------------------------------------------

Outcome ctc_oracle() {
  std::mt19937_64 rng(2024);
  int checked = 0;
  double worst = 0.0;
  while (checked < 200) {
    const int T = 1 + static_cast<int>(rng() % 6);
    const int V = 1 + static_cast<int>(rng() % 3);
    const int L = static_cast<int>(rng() % 3);
    TokenSeq y(L);
    for (auto& t : y) t = 1 + static_cast<TokenId>(rng() % V);
    if (ctc_min_frames(y) > static_cast<std::size_t>(T)) continue;
    const Matrix logits = testing::random_matrix(T, V + 1, rng, 1.5);
    worst = std::max(worst, std::abs(ctc_loss_grad(logits, y).loss - oracle::ctc_brute_force(logits, y)));
    ++checked;
  }
  return {worst <= 1e-8, "200 instances, max |DP - enumeration| = " + std::to_string(worst)};
}

Outcome gradient_integrity() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  const int instances = 24;
  for (int i = 0; i < instances; ++i) {
    const ModelDims d{static_cast<int>(rng() % 3), 2 + static_cast<int>(rng() % 3), 3 + static_cast<int>(rng() % 4),
                      2 + static_cast<int>(rng() % 2)};
    const int T = 3 + static_cast<int>(rng() % 5);
    TokenSeq y(1 + rng() % 2);
    for (auto& t : y) t = 1 + static_cast<TokenId>(rng() % d.vocab);
    if (ctc_min_frames(y) > static_cast<std::size_t>(T)) y.resize(1);
    const ParamSet p = init_params(rng(), d);
    const FeatureMatrix x = testing::random_matrix(T, d.feat_dim, rng);
    const ForwardCache cache = forward_cached(p, x);
    const Vector g = backward(p, cache, ctc_loss_grad(cache.logits, y).grad).values();
    auto f = [&](const Vector& v) {
      ParamSet q = p;
      q.values() = v;
      return ctc_loss_grad(forward_cached(q, x).logits, y).loss;
    };
    Vector fd(g.size());
    for (Eigen::Index k = 0; k < g.size(); ++k) fd[k] = oracle::central_difference(f, p.values(), k, 1e-5);
    const double rel = (g - fd).norm() / std::max({g.norm(), fd.norm(), 1e-12});
    worst = std::max(worst, rel);
  }
  return {worst < 1e-4, std::to_string(instances) + " instances, max relative error " + std::to_string(worst)};
}

Outcome schedule_properties() {
  std::vector<std::string> problems;
  for (int K = 1; K <= 10; ++K)
    for (std::int64_t F : {100, 30000}) {
      const auto d = stage_durations(K, F);
      if (std::accumulate(d.begin(), d.end(), std::int64_t{0}) != F)
        problems.push_back("sum K=" + std::to_string(K) + " F=" + std::to_string(F));
    }
  double worst_spread = 0.0;
  for (int K = 1; K <= 10; ++K)
    for (std::size_t pool : {100, 320, 1000, 6400}) {
      const auto d = stage_durations(K, 30000);
      double lo = 1e300, hi = 0.0;
      for (int k = 1; k <= K; ++k) {
        const double r = static_cast<double>(d[k - 1]) / static_cast<double>(eta(k, K, pool));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      worst_spread = std::max(worst_spread, hi / lo - 1.0);
    }
  if (worst_spread > 0.05) problems.push_back("ratio spread " + std::to_string(worst_spread));
  if (stage_durations(5, 30000) != std::vector<std::int64_t>{2000, 4000, 6000, 8000, 10000})
    problems.push_back("K=5 F=30000 reference durations");
  return {problems.empty(), "sums exact for K in [1,10], F in {100, 30000}; duration/eta spread at F=30000 " +
                                fmt(100.0 * worst_spread, 2) + "%; K=5 reference " +
                                (problems.empty() ? "ok" : "problems: " + problems.front())};
}

Outcome ema_identity() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  const ModelDims d{1, 3, 4, 2};
  for (double alpha : {0.0, 0.5, 0.9, 0.99, 0.99996, 1.0}) {
    for (int len : {1, 10, 200}) {
      ParamSet ema = init_params(rng(), d);
      const Vector z0 = ema.values();
      std::vector<Vector> thetas;
      for (int i = 0; i < len; ++i) {
        ParamSet s(d);
        s.values() = testing::random_matrix(d.param_count(), 1, rng);
        thetas.push_back(s.values());
        ema_update(ema, s, alpha);
      }
      worst = std::max(worst, (ema.values() - oracle::ema_closed_form(z0, thetas, alpha)).cwiseAbs().maxCoeff());
    }
  }
  const double a = ema_alpha_from_retention(30000, 0.3);
  const bool ok = worst <= 1e-10 && std::abs(a - 0.999960) <= 1e-6;
  return {ok, "max closed-form deviation " + std::to_string(worst) + ", alpha(30000, 0.3) = " + fmt(a, 8)};
}

Outcome pool_fairness() {
  const Corpus& c = default_corpus();
  const Dataset data = Dataset::of(c);
  TrainConfig cfg = default_train_config();
  cfg.warmup_steps = 200;
  cfg.ssl_iters = 2000;
  cfg.eval_every = 1000000;

  struct Trace {
    std::vector<std::vector<std::string>> selected;
    std::size_t full_epochs = 0;
    bool epochs_ok = true;
    bool sorted_ok = true;
  };
  auto run = [&](unsigned workers) {
    TrainConfig rc = cfg;
    rc.workers = workers;
    Trace tr;
    std::map<std::string, int> epoch_count;
    std::size_t current_epoch = 1;
    auto close_epoch = [&] {
      bool ok = epoch_count.size() == c.unlabeled.size();
      for (const auto& [id, n] : epoch_count) ok = ok && n == 1;
      tr.epochs_ok = tr.epochs_ok && ok;
      ++tr.full_epochs;
      epoch_count.clear();
    };
    TrainHooks hooks;
    hooks.on_refill = [&](const PLPool& pool, std::int64_t) {
      if (pool.sampler().epoch() != current_epoch) {
        close_epoch();
        current_epoch = pool.sampler().epoch();
      }
      std::vector<std::string> ids;
      for (const auto& e : pool.drawn()) ++epoch_count[e.utt_id];
      for (const auto& e : pool.selected()) ids.push_back(e.utt_id);
      tr.sorted_ok = tr.sorted_ok && std::is_sorted(pool.selected().begin(), pool.selected().end(), score_order) &&
                     std::is_sorted(pool.drawn().begin(), pool.drawn().end(), score_order);
      if (pool.sampler().remaining_in_epoch() == 0) {
        close_epoch();
        current_epoch = pool.sampler().epoch() + 1;
      }
      tr.selected.push_back(std::move(ids));
    };
    TrainState s = init_state(rc, model_dims(rc, c.spec.feature_dim, c.spec.vocab_size));
    RunLog log;
    supervised_warmup(s, data, rc, log);
    semi_supervised_train(s, data, rc, log, hooks);
    return tr;
  };
  const Trace a = run(worker_count());
  const Trace b = run(1);
  const bool deterministic = a.selected == b.selected;
  return {a.epochs_ok && a.full_epochs >= 1 && a.sorted_ok && deterministic,
          std::to_string(a.selected.size()) + " refills, " + std::to_string(a.full_epochs) +
              " complete epochs each covering every utt_id once: " + (a.epochs_ok ? "yes" : "no") +
              "; sorted at every refill: " + (a.sorted_ok ? "yes" : "no") +
              "; selected sets identical on rerun: " + (deterministic ? "yes" : "no")};
}

Outcome levenshtein_axioms() {
  const auto all = oracle::all_strings(4, 2);
  bool ok = true;
  for (const auto& a : all)
    for (const auto& b : all) {
      const auto ab = levenshtein(a, b);
      ok = ok && ab == oracle::lev_recursive(a, b) && (ab == 0) == (a == b) && ab == levenshtein(b, a);
      for (const auto& c : all) ok = ok && levenshtein(a, c) <= ab + levenshtein(b, c);
    }
  const std::string k = "kitten", s = "sitting";
  const TokenSeq kt(k.begin(), k.end()), st(s.begin(), s.end());
  const auto d = levenshtein(kt, st);
  ok = ok && d == 3 && oracle::lev_recursive(kt, st) == 3;
  return {ok, std::to_string(all.size()) + " strings, all pairs and triples checked; kitten/sitting = " +
                  std::to_string(d)};
}

// End-to-end runs shared by the SSL-benefit and ordering criteria.
struct SeedResult {
  double warmup = 0.0;
  std::map<std::string, double> final_ter;
};

std::vector<SeedResult> seed_runs() {
  const Corpus& c = default_corpus();
  const Dataset data = Dataset::of(c);
  std::vector<SeedResult> out;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg = default_train_config();
    cfg.seed = seed;
    cfg.workers = worker_count();
    TrainState warm = init_state(cfg, model_dims(cfg, c.spec.feature_dim, c.spec.vocab_size));
    RunLog log;
    supervised_warmup(warm, data, cfg, log);
    SeedResult r;
    r.warmup = evaluate(warm.params, c.dev, cfg.workers);
    for (auto mode : {SelectionMode::kCurriculumCs, SelectionMode::kOracle, SelectionMode::kThreshold,
                      SelectionMode::kCurriculumCrs}) {
      TrainConfig mc = cfg;
      mc.selection = mode;
      TrainState s = warm;
      RunLog l = log;
      semi_supervised_train(s, data, mc, l);
      r.final_ter[to_string(mode)] = evaluate(s.params, c.dev, cfg.workers);
    }
    std::cerr << "  seed " << seed << ": warmup " << fmt(r.warmup) << ", cs " << fmt(r.final_ter["curriculum-cs"])
              << ", oracle " << fmt(r.final_ter["oracle"]) << ", threshold " << fmt(r.final_ter["threshold"])
              << ", crs " << fmt(r.final_ter["curriculum-crs"]) << '\n';
    out.push_back(std::move(r));
  }
  return out;
}

double median_of(const std::vector<SeedResult>& runs, const std::string& mode) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(mode == "warmup" ? r.warmup : r.final_ter.at(mode));
  return median(v);
}

Outcome ssl_benefit(const std::vector<SeedResult>& runs) {
  const double warm = median_of(runs, "warmup"), cs = median_of(runs, "curriculum-cs");
  const double rel = (warm - cs) / warm;
  return {cs < warm && rel >= 0.10, "median dev TER warmup-only " + fmt(warm) + ", curriculum-cs " + fmt(cs) +
                                        ", relative improvement " + fmt(100.0 * rel, 1) + "%"};
}

Outcome selection_ordering(const std::vector<SeedResult>& runs) {
  const double oracle = median_of(runs, "oracle"), cs = median_of(runs, "curriculum-cs"),
               thr = median_of(runs, "threshold"), crs = median_of(runs, "curriculum-crs");
  return {oracle <= cs && cs <= thr, "median dev TER oracle " + fmt(oracle) + " <= curriculum-cs " + fmt(cs) +
                                         " <= threshold(0.95) " + fmt(thr) + "; curriculum-crs " + fmt(crs) +
                                         " (reported only)"};
}

Outcome determinism() {
  const Corpus& c = default_corpus();
  Json cfg = resolve_config({{"data_dir", ""}});
  apply_override(cfg, "schedule.S=300");
  apply_override(cfg, "schedule.F=300");
  apply_override(cfg, "schedule.eval_every=50");
  testing::TempDir a("det_a"), b("det_b");
  RunOptions oa, ob;
  oa.out_dir = a.path();
  ob.out_dir = b.path();
  Json cfg_b = cfg;
  cfg_b["workers"] = static_cast<int>(worker_count());
  run_experiment(cfg, Dataset::of(c), oa);
  run_experiment(cfg_b, Dataset::of(c), ob);
  const bool logs = io::read_file(a.path() / "runlog.jsonl") == io::read_file(b.path() / "runlog.jsonl");
  const bool ckpt = io::read_file(a.path() / "final.ckpt") == io::read_file(b.path() / "final.ckpt");
  return {logs && ckpt, std::string("run logs byte-identical: ") + (logs ? "yes" : "no") +
                            ", final checkpoints byte-identical: " + (ckpt ? "yes" : "no")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs, 1) << " s]"
              << std::endl;
  };

  report("ctc-oracle-equivalence", ctc_oracle);
  report("gradient-integrity", gradient_integrity);
  report("stage-schedule-properties", schedule_properties);
  report("ema-geometric-identity", ema_identity);
  report("pool-fairness", pool_fairness);
  report("levenshtein-metric", levenshtein_axioms);

  std::vector<SeedResult> runs;
  std::string run_error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    runs = seed_runs();
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  const double run_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "  three-seed runs took " << fmt(run_secs, 1) << " s\n";
  auto from_runs = [&](const std::function<Outcome(const std::vector<SeedResult>&)>& fn) {
    return [&, fn] { return run_error.empty() ? fn(runs) : Outcome{false, "runs failed: " + run_error}; };
  };
  report("ssl-benefit", from_runs(ssl_benefit));
  report("selection-mode-ordering", from_runs(selection_ordering));
  report("determinism", determinism);

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
