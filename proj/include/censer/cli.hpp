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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "censer/config.hpp"
#include "censer/corpus.hpp"
#include "censer/experiment.hpp"

namespace censer::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

namespace detail {

inline Json read_json_file(const std::string& path, const char* what) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const IoError& e) {
    throw ConfigValidation(std::string(what) + ": " + e.what());
  }
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigValidation(std::string(what) + " " + path + ": " + e.what());
  }
}

/// Config file, then --set overrides in order, then --seed.
inline Json load_config(const std::string& path, const std::vector<std::string>& sets,
                        const std::optional<std::uint64_t>& seed) {
  Json cfg = resolve_config(path.empty() ? Json::object() : read_json_file(path, "config"));
  for (const auto& s : sets) apply_override(cfg, s);
  if (seed) cfg["seed"] = *seed;
  train_config_from_json(cfg);
  data_dir_from_json(cfg);
  return cfg;
}

inline ParamSet pick_weights(const Checkpoint& ck, const std::string& which) {
  if (which == "theta") return ck.params;
  if (which == "ema") return ck.ema;
  throw ConfigValidation("--weights: expected theta or ema, got '" + which + "'");
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Curriculum pseudo-label selection for CTC models on synthetic corpora", "censer"};
  app.require_subcommand(1);

  std::string config_path, out_dir, spec_path, grid_path, checkpoint_path, data_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool dump_pool = false;
  std::string split = "dev", weights = "theta";
  int stage = 1;
  unsigned workers = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "Corpus spec JSON (defaults when omitted)");
  gen->add_option("--seed", seed, "Override the spec seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Run supervised warmup and semi-supervised training");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--set", sets, "Override a config value, e.g. curriculum.K=5");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_flag("--dump-pool", dump_pool, "Write pool_dump.jsonl with every refill");

  auto* eval = app.add_subcommand("eval", "Greedy-decode a split and report token error rate");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Corpus directory")->required();
  eval->add_option("--split", split, "labeled, dev or test")->capture_default_str();
  eval->add_option("--weights", weights, "theta (student) or ema (teacher)")->capture_default_str();
  eval->add_option("--workers", workers, "Decoding threads")->capture_default_str();
  eval->add_option("--out", out_dir, "Directory for eval.json");

  auto* ablate = app.add_subcommand("ablate", "Run a grid of configs and tabulate final TER");
  ablate->add_option("--config", config_path, "Base run config JSON")->required();
  ablate->add_option("--grid", grid_path, "Grid JSON: {\"axes\": {\"dotted.path\": [values]}}")->required();
  ablate->add_option("--set", sets, "Override a base config value");
  ablate->add_option("--seed", seed, "Override the config seed");
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_flag("--dump-pool", dump_pool, "Write pool dumps for every cell");

  auto* inspect = app.add_subcommand("inspect-pool", "Score one pool with a checkpoint's teacher");
  inspect->add_option("--config", config_path, "Run config JSON")->required();
  inspect->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  inspect->add_option("--stage", stage, "Curriculum stage used for selection")->capture_default_str();
  inspect->add_option("--set", sets, "Override a config value");
  inspect->add_option("--seed", seed, "Override the config seed");
  inspect->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*gen) {
      CorpusSpec spec;
      if (!spec_path.empty()) {
        try {
          spec = detail::read_json_file(spec_path, "spec").get<CorpusSpec>();
        } catch (const Json::exception& e) {
          throw ConfigValidation(std::string("spec: ") + e.what());
        } catch (const InvalidArgument& e) {
          throw ConfigValidation(e.what());
        }
      }
      if (seed) spec.seed = *seed;
      try {
        spec.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigValidation(e.what());
      }
      err << "[gen-data] writing corpus to " << out_dir << '\n';
      const Corpus c = generate_to_disk(spec, out_dir);
      err << "[gen-data] " << c.labeled.size() << " labeled, " << c.unlabeled.size() << " unlabeled, "
          << c.dev.size() << " dev, " << c.test.size() << " test\n";
      return kOk;
    }

    if (*train) {
      const Json cfg = detail::load_config(config_path, sets, seed);
      const CorpusHandle corpus = load_manifest(data_dir_from_json(cfg));
      RunOptions opt;
      opt.out_dir = out_dir;
      opt.config_path = config_path;
      opt.dump_pool = dump_pool;
      opt.progress = &err;
      opt.corpus_checksums = corpus.checksums();
      opt.corpus_dir = data_dir_from_json(cfg);
      const auto result = run_experiment(cfg, Dataset::of(corpus), opt);
      err << "[train] done: dev TER " << result.summary.dev.ter << " (ema " << result.summary.dev_ema.ter
          << "), test TER " << result.summary.test.ter << '\n';
      return kOk;
    }

    if (*eval) {
      if (workers < 1) throw ConfigValidation("--workers: must be >= 1");
      Split which;
      try {
        which = split_from_string(split);
      } catch (const InvalidArgument& e) {
        throw ConfigValidation(std::string("--split: ") + e.what());
      }
      if (which == Split::kUnlabeled) throw ConfigValidation("--split: the unlabeled split has no transcripts");
      const ParamSet params = detail::pick_weights(load_checkpoint(checkpoint_path), weights);
      const CorpusHandle corpus = load_manifest(data_dir);
      const auto& utts = corpus.split(which);
      if (params.dims().feat_dim != corpus.spec().feature_dim || params.dims().vocab != corpus.spec().vocab_size)
        throw DimensionMismatch("checkpoint dimensions do not match the corpus");
      const auto r = evaluate_detailed(params, utts, workers);
      out << split << " TER " << r.ter << " (easy " << r.ter_easy << ", hard " << r.ter_hard << ")\n";
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        Json j = to_json(r);
        j["split"] = split;
        j["weights"] = weights;
        j["checkpoint"] = checkpoint_path;
        io::write_file_atomic(std::filesystem::path(out_dir) / "eval.json", j.dump(2) + "\n");
      }
      return kOk;
    }

    if (*ablate) {
      const Json cfg = detail::load_config(config_path, sets, seed);
      const auto axes = ablation_axes_from_json(detail::read_json_file(grid_path, "grid"));
      expand_grid(cfg, axes);  // validate every cell before loading data
      const CorpusHandle corpus = load_manifest(data_dir_from_json(cfg));
      RunOptions opt;
      opt.out_dir = out_dir;
      opt.config_path = config_path;
      opt.dump_pool = dump_pool;
      opt.progress = &err;
      opt.corpus_checksums = corpus.checksums();
      opt.corpus_dir = data_dir_from_json(cfg);
      const auto cells = run_ablation_grid(cfg, axes, Dataset::of(corpus), opt);
      err << ablation_table_text(cells);
      return kOk;
    }

    if (*inspect) {
      const Json cfg_json = detail::load_config(config_path, sets, seed);
      const TrainConfig cfg = train_config_from_json(cfg_json);
      if (stage < 1 || stage > cfg.stages) throw ConfigValidation("--stage: must be in [1, curriculum.K]");
      const CorpusHandle corpus = load_manifest(data_dir_from_json(cfg_json));
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const auto view = corpus.unlabeled();
      PLPool pool(cfg.pool_batches, cfg.batch_size_unlabeled, view.size(),
                  derive_seed(cfg.seed, {censer::detail::kPoolSampler}), cfg.workers);
      pool.refill(view, make_scorer(ck.ema, view, cfg, 0), selection_rule(cfg, stage));
      std::filesystem::create_directories(out_dir);
      std::ostringstream lines;
      censer::detail::pool_dump_lines(lines, pool, 0);
      io::write_file_atomic(std::filesystem::path(out_dir) / "pool_inspect.jsonl", lines.str());
      double sel_err = 0.0, all_err = 0.0;
      for (const auto& e : pool.selected()) sel_err += e.true_error;
      for (const auto& e : pool.drawn()) all_err += e.true_error;
      err << "[inspect-pool] stage " << stage << ": selected " << pool.selected().size() << " of "
          << pool.drawn().size() << ", mean true error selected "
          << (pool.selected().empty() ? 0.0 : sel_err / static_cast<double>(pool.selected().size())) << ", pool "
          << (pool.drawn().empty() ? 0.0 : all_err / static_cast<double>(pool.drawn().size())) << '\n';
      return kOk;
    }
  } catch (const ConfigValidation& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}

}  // namespace censer::cli
