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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "censer/checkpoint.hpp"
#include "censer/config.hpp"
#include "censer/corpus.hpp"
#include "censer/trainer.hpp"

namespace censer {

inline Checkpoint to_checkpoint(const TrainState& s) {
  return {s.params, s.optimizer, s.ema, static_cast<std::uint64_t>(s.iteration)};
}

struct RunSummary {
  double warmup_dev_ter = 0.0;
  EvalResult dev;
  EvalResult dev_ema;
  EvalResult test;
  EvalResult test_ema;
  Counters counters;
  std::int64_t iterations = 0;
};

inline Json to_json(const EvalResult& e) {
  auto num = [](double v) { return std::isnan(v) ? Json() : Json(v); };
  return {{"ter", e.ter}, {"ter_easy", num(e.ter_easy)}, {"ter_hard", num(e.ter_hard)}};
}

inline Json to_json(const Counters& c) {
  return {{"labeled_batches", c.labeled_batches},   {"unlabeled_batches", c.unlabeled_batches},
          {"unlabeled_utterances", c.unlabeled_utterances}, {"skipped_empty", c.skipped_empty},
          {"skipped_infeasible", c.skipped_infeasible}, {"refills", c.refills}};
}

inline Json to_json(const RunSummary& s) {
  return {{"warmup_dev_ter", s.warmup_dev_ter}, {"dev", to_json(s.dev)},   {"dev_ema", to_json(s.dev_ema)},
          {"test", to_json(s.test)},            {"test_ema", to_json(s.test_ema)},
          {"counters", to_json(s.counters)},    {"iterations", s.iterations}};
}

/// Warmup results keyed by the config fields that influence the warmup, so
/// runs that differ only in semi-supervised settings start from one model.
class WarmupCache {
 public:
  struct Entry {
    TrainState state;
    std::vector<RunLogRecord> records;
  };

  static std::string key(const Json& resolved) {
    Json k = resolved;
    for (const char* section : {"selection", "scoring", "ema", "curriculum", "divergence", "workers"}) k.erase(section);
    k["augment"].erase("weak");
    k["batch"].erase("unlabeled");
    k["batch"].erase("mu");
    return k.dump();
  }

  const Entry* find(const std::string& k) const {
    const auto it = entries_.find(k);
    return it == entries_.end() ? nullptr : &it->second;
  }
  void put(const std::string& k, Entry e) { entries_.insert_or_assign(k, std::move(e)); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

struct RunOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::string config_path;
  bool dump_pool = false;
  std::ostream* progress = nullptr;
  WarmupCache* warmup_cache = nullptr;
  std::map<std::string, std::uint32_t> corpus_checksums;
  std::string corpus_dir;
};

struct RunResult {
  RunSummary summary;
  RunLog log;
  TrainState state;
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string checkpoint_name(std::int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%08lld.ckpt", static_cast<long long>(iter));
  return buf;
}

inline void pool_dump_lines(std::ostream& os, const PLPool& pool, std::int64_t ssl_iter) {
  std::set<std::string> chosen;
  for (const auto& e : pool.selected()) chosen.insert(e.utt_id);
  for (const auto& e : pool.drawn()) {
    Json line = {{"refill", pool.refills()},
                 {"ssl_iter", ssl_iter},
                 {"stage", pool.rule().stage},
                 {"utt_id", e.utt_id},
                 {"score", e.score},
                 {"pl_length", e.pl.size()},
                 {"true_error", e.true_error},
                 {"selected", chosen.contains(e.utt_id)}};
    os << line.dump() << '\n';
  }
}

}  // namespace detail

/// Runs warmup plus the semi-supervised phase for one resolved config.
///
/// With an output directory the run writes run_manifest.json (atomically,
/// before training), runlog.jsonl, a checkpoint per evaluation point under
/// checkpoints/, final.ckpt, summary.json and optionally pool_dump.jsonl.
inline RunResult run_experiment(const Json& resolved, const Dataset& data, const RunOptions& opt = {}) {
  const TrainConfig cfg = train_config_from_json(resolved);
  if (!data.labeled || data.labeled->empty()) throw EmptyCorpus("no labeled data");
  const auto started = std::chrono::steady_clock::now();
  const bool persist = !opt.out_dir.empty();
  const auto ckpt_dir = opt.out_dir / "checkpoints";

  std::ofstream runlog, pool_dump;
  if (persist) {
    std::filesystem::create_directories(ckpt_dir);
    Json artifacts = {{"runlog", "runlog.jsonl"},
                      {"checkpoints", "checkpoints"},
                      {"final_checkpoint", "final.ckpt"},
                      {"summary", "summary.json"}};
    if (opt.dump_pool) artifacts["pool_dump"] = "pool_dump.jsonl";
    Json checksums = Json::object();
    for (const auto& [name, crc] : opt.corpus_checksums) checksums[name] = crc;
    const Json manifest = {{"config_path", opt.config_path},
                           {"config", resolved},
                           {"seed", cfg.seed},
                           {"corpus_dir", opt.corpus_dir},
                           {"corpus_checksums", checksums},
                           {"artifacts", artifacts},
                           {"started_at", detail::utc_timestamp()}};
    io::write_file_atomic(opt.out_dir / "run_manifest.json", manifest.dump(2) + "\n");
    runlog.open(opt.out_dir / "runlog.jsonl", std::ios::binary | std::ios::trunc);
    if (!runlog) throw IoError("cannot open " + (opt.out_dir / "runlog.jsonl").string());
    if (opt.dump_pool) pool_dump.open(opt.out_dir / "pool_dump.jsonl", std::ios::binary | std::ios::trunc);
  }

  TrainHooks hooks;
  hooks.on_record = [&](const RunLogRecord& r) {
    if (persist) runlog << to_json(r).dump() << '\n' << std::flush;
    if (opt.progress) {
      *opt.progress << "[" << r.phase << "] iter " << r.iter << " lr " << r.lr << " dev_ter " << r.dev_ter;
      if (r.dev_ter_ema) *opt.progress << " dev_ter_ema " << *r.dev_ter_ema;
      if (r.phase == "ssl") *opt.progress << " stage " << r.stage << " selected " << r.selected_count;
      *opt.progress << '\n';
    }
  };
  hooks.on_eval = [&](const TrainState& s) {
    if (persist) save_checkpoint(ckpt_dir / detail::checkpoint_name(s.iteration), to_checkpoint(s));
  };
  if (persist && opt.dump_pool)
    hooks.on_refill = [&](const PLPool& pool, std::int64_t ssl_iter) { detail::pool_dump_lines(pool_dump, pool, ssl_iter); };

  RunResult out;
  const auto key = WarmupCache::key(resolved);
  const WarmupCache::Entry* cached = opt.warmup_cache ? opt.warmup_cache->find(key) : nullptr;
  if (cached) {
    out.state = cached->state;
    // Replay the cached records so the run log matches an uncached run.
    for (const auto& r : cached->records) {
      out.log.records.push_back(r);
      hooks.on_record(r);
    }
    if (persist && !cached->records.empty())
      save_checkpoint(ckpt_dir / detail::checkpoint_name(out.state.iteration), to_checkpoint(out.state));
  } else {
    out.state = init_state(cfg, model_dims(cfg, data.feature_dim(), data.vocab_size));
    supervised_warmup(out.state, data, cfg, out.log, hooks);
    if (opt.warmup_cache) opt.warmup_cache->put(key, {out.state, out.log.records});
  }
  out.summary.warmup_dev_ter = data.dev ? (out.log.records.empty() ? evaluate(out.state.params, *data.dev, cfg.workers)
                                                                   : out.log.records.back().dev_ter)
                                        : 0.0;

  semi_supervised_train(out.state, data, cfg, out.log, hooks);

  if (data.dev) {
    out.summary.dev = evaluate_detailed(out.state.params, *data.dev, cfg.workers);
    out.summary.dev_ema = evaluate_detailed(out.state.ema, *data.dev, cfg.workers);
  }
  if (data.test) {
    out.summary.test = evaluate_detailed(out.state.params, *data.test, cfg.workers);
    out.summary.test_ema = evaluate_detailed(out.state.ema, *data.test, cfg.workers);
  }
  out.summary.counters = out.state.counters;
  out.summary.iterations = out.state.iteration;
  if (persist) {
    save_checkpoint(opt.out_dir / "final.ckpt", to_checkpoint(out.state));
    Json summary = to_json(out.summary);
    summary["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    io::write_file_atomic(opt.out_dir / "summary.json", summary.dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation grids
// ---------------------------------------------------------------------------

struct AblationAxis {
  std::string path;  // dotted config path
  std::vector<Json> values;
};

struct AblationCell {
  std::vector<std::pair<std::string, Json>> settings;
  RunSummary summary;
};

/// Reads {"axes": {"dotted.path": [values...], ...}} keeping axis order.
inline std::vector<AblationAxis> ablation_axes_from_json(const Json& grid) {
  if (!grid.is_object() || !grid.contains("axes") || !grid.at("axes").is_object())
    throw ConfigValidation("grid: expected an object with an \"axes\" object");
  for (const auto& [key, _] : grid.items())
    if (key != "axes") throw ConfigValidation("grid." + key + ": unknown key");
  std::vector<AblationAxis> axes;
  for (const auto& [path, values] : grid.at("axes").items()) {
    if (!values.is_array() || values.empty())
      throw ConfigValidation("grid.axes." + path + ": expected a non-empty array");
    axes.push_back({path, std::vector<Json>(values.begin(), values.end())});
  }
  return axes;
}

/// Resolved config of every grid cell, last axis varying fastest.
inline std::vector<std::pair<std::vector<std::pair<std::string, Json>>, Json>> expand_grid(
    const Json& base_resolved, const std::vector<AblationAxis>& axes) {
  std::vector<std::pair<std::vector<std::pair<std::string, Json>>, Json>> cells;
  std::vector<std::size_t> pos(axes.size(), 0);
  for (;;) {
    Json cfg = base_resolved;
    std::vector<std::pair<std::string, Json>> settings;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& v = axes[a].values[pos[a]];
      apply_override(cfg, axes[a].path + "=" + v.dump());
      settings.emplace_back(axes[a].path, v);
    }
    train_config_from_json(cfg);  // fail before any training starts
    cells.emplace_back(std::move(settings), std::move(cfg));
    std::size_t a = axes.size();
    while (a > 0 && ++pos[a - 1] == axes[a - 1].values.size()) pos[--a] = 0;
    if (a == 0) break;
  }
  return cells;
}

inline Json ablation_table_json(const std::vector<AblationCell>& cells) {
  Json rows = Json::array();
  for (const auto& c : cells) {
    Json settings = Json::object();
    for (const auto& [k, v] : c.settings) settings[k] = v;
    rows.push_back({{"settings", settings},
                    {"warmup_dev_ter", c.summary.warmup_dev_ter},
                    {"dev_ter", c.summary.dev.ter},
                    {"dev_ter_ema", c.summary.dev_ema.ter},
                    {"test_ter", c.summary.test.ter},
                    {"test_ter_ema", c.summary.test_ema.ter}});
  }
  return {{"cells", rows}};
}

inline std::string ablation_table_text(const std::vector<AblationCell>& cells) {
  std::vector<std::string> header;
  if (!cells.empty())
    for (const auto& [k, _] : cells.front().settings) header.push_back(k);
  for (const char* h : {"warmup_dev", "dev", "dev_ema", "test", "test_ema"}) header.push_back(h);
  std::vector<std::vector<std::string>> rows;
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  };
  for (const auto& c : cells) {
    std::vector<std::string> row;
    for (const auto& [_, v] : c.settings) row.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    for (double v : {c.summary.warmup_dev_ter, c.summary.dev.ter, c.summary.dev_ema.ter, c.summary.test.ter,
                     c.summary.test_ema.ter})
      row.push_back(fmt(v));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << "  ";
      os << std::left << std::setw(static_cast<int>(width[i])) << r[i];
    }
    os << '\n';
  };
  emit(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  emit(rule);
  for (const auto& r : rows) emit(r);
  return os.str();
}

/// Runs the cartesian product of the axes over a base config. Cells share
/// seeds, and cells with equal warmup settings share one warmup.
inline std::vector<AblationCell> run_ablation_grid(const Json& base_resolved, const std::vector<AblationAxis>& axes,
                                                   const Dataset& data, const RunOptions& opt = {}) {
  const auto grid = expand_grid(base_resolved, axes);
  WarmupCache cache;
  std::vector<AblationCell> cells;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    RunOptions cell_opt = opt;
    cell_opt.warmup_cache = opt.warmup_cache ? opt.warmup_cache : &cache;
    if (!opt.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "cell_%03zu", i);
      cell_opt.out_dir = opt.out_dir / name;
    }
    if (opt.progress) {
      *opt.progress << "[ablate] cell " << i + 1 << "/" << grid.size();
      for (const auto& [k, v] : grid[i].first) *opt.progress << " " << k << "=" << v.dump();
      *opt.progress << '\n';
    }
    cells.push_back({grid[i].first, run_experiment(grid[i].second, data, cell_opt).summary});
  }
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    io::write_file_atomic(opt.out_dir / "ablation.json", ablation_table_json(cells).dump(2) + "\n");
    io::write_file_atomic(opt.out_dir / "ablation.txt", ablation_table_text(cells));
  }
  return cells;
}

}  // namespace censer
