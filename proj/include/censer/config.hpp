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

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "censer/augment.hpp"
#include "censer/trainer.hpp"

namespace censer {

using Json = nlohmann::ordered_json;

// Run configuration as JSON. The defaults below double as the schema: a key
// is valid only if it exists here, and its type is the type of the default.
// Keys whose default is null carry their type in nullable_config_types().
//
// Defaults are a scaled-down version of the full-size recipe:
//
//   key                  here     full-scale recipe
//   optim.peak_lr        2e-3     5e-5
//   schedule.S           2000     20k
//   schedule.F           3000     30k
//   batch.mu             2        5
//   curriculum.C         20       100 (batches of 64)
//   curriculum.K         5        5
//   scoring.lambda       1        1
//   ema.retention        0.3      0.3 (alpha^F = 0.3)
//   augment.strong       2/0.2    10 steps/0.65 time, 64 ch/0.5 channel
inline const Json& default_config() {
  static const Json defaults = Json::parse(R"({
    "data_dir": null,
    "seed": 1,
    "workers": 1,
    "model": {"window": 2, "hidden": 64},
    "optim": {"peak_lr": 0.002, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "schedule": {"S": 2000, "F": 3000, "eval_every": 250},
    "batch": {"labeled": 16, "unlabeled": 16, "mu": 2},
    "curriculum": {"C": 20, "K": 5},
    "selection": {"mode": "curriculum-cs", "tau": 0.95},
    "scoring": {"lambda": 1.0, "cs_variant": "first"},
    "ema": {"alpha": null, "retention": 0.3},
    "augment": {
      "strong": {"time_mask_len": 2, "time_mask_prob": 0.2, "chan_mask_len": 2, "chan_mask_prob": 0.2},
      "weak": {"chan_mask_len": null, "chan_mask_prob": null}
    },
    "divergence": {"patience": 3, "ter": 0.98}
  })");
  return defaults;
}

enum class ConfigType { kString, kInteger, kNumber, kBoolean };

/// Types of the keys whose default is null (null means "derive").
inline const std::map<std::string, ConfigType>& nullable_config_types() {
  static const std::map<std::string, ConfigType> types = {
      {"data_dir", ConfigType::kString},
      {"ema.alpha", ConfigType::kNumber},
      {"augment.weak.chan_mask_len", ConfigType::kInteger},
      {"augment.weak.chan_mask_prob", ConfigType::kNumber},
  };
  return types;
}

namespace detail {

inline std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline const char* type_name(ConfigType t) {
  switch (t) {
    case ConfigType::kString: return "a string";
    case ConfigType::kInteger: return "an integer";
    case ConfigType::kNumber: return "a number";
    case ConfigType::kBoolean: return "a boolean";
  }
  return "?";
}

inline bool has_type(const Json& v, ConfigType t) {
  switch (t) {
    case ConfigType::kString: return v.is_string();
    case ConfigType::kInteger: return v.is_number_integer();
    case ConfigType::kNumber: return v.is_number();
    case ConfigType::kBoolean: return v.is_boolean();
  }
  return false;
}

inline ConfigType type_of_default(const Json& d) {
  if (d.is_string()) return ConfigType::kString;
  if (d.is_number_integer()) return ConfigType::kInteger;
  if (d.is_number()) return ConfigType::kNumber;
  return ConfigType::kBoolean;
}

/// Checks `value` against the default at `path`; rejects unknown keys.
inline void check_node(const Json& value, const Json& def, const std::string& path) {
  if (def.is_object()) {
    if (!value.is_object()) throw ConfigValidation(path + ": expected an object");
    for (const auto& [key, v] : value.items()) {
      const auto sub = join_path(path, key);
      if (!def.contains(key)) throw ConfigValidation(sub + ": unknown key");
      check_node(v, def.at(key), sub);
    }
    return;
  }
  if (def.is_null()) {
    const auto it = nullable_config_types().find(path);
    if (it == nullable_config_types().end()) throw ConfigValidation(path + ": no type registered");
    if (!value.is_null() && !has_type(value, it->second))
      throw ConfigValidation(path + ": expected " + type_name(it->second) + " or null");
    return;
  }
  const auto t = type_of_default(def);
  if (!has_type(value, t)) throw ConfigValidation(path + ": expected " + type_name(t));
}

inline void merge_into(Json& base, const Json& overlay) {
  for (const auto& [key, v] : overlay.items()) {
    if (v.is_object() && base.contains(key) && base[key].is_object())
      merge_into(base[key], v);
    else
      base[key] = v;
  }
}

}  // namespace detail

/// Validates `user` against the schema and overlays it on the defaults.
inline Json resolve_config(const Json& user) {
  if (!user.is_object()) throw ConfigValidation("config: expected a JSON object");
  detail::check_node(user, default_config(), "");
  Json out = default_config();
  detail::merge_into(out, user);
  return out;
}

/// Applies one "dotted.path=value" override. The value is parsed as JSON
/// when possible, otherwise taken as a string.
inline void apply_override(Json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigValidation("override '" + std::string(assignment) + "' is not of the form key=value");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json patch = value;
  const Json* def = &default_config();
  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  std::string so_far;
  for (const auto& k : keys) {
    so_far = detail::join_path(so_far, k);
    if (!def->is_object() || !def->contains(k)) throw ConfigValidation(so_far + ": unknown key");
    def = &def->at(k);
  }
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = Json{{*it, patch}};
  detail::check_node(patch, default_config(), "");
  detail::merge_into(config, patch);
}

namespace detail {

inline const Json& at_path(const Json& root, const std::string& path) {
  const Json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->contains(key)) throw ConfigValidation(path + ": missing");
    node = &node->at(key);
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

template <typename T>
T get(const Json& root, const std::string& path) {
  try {
    return at_path(root, path).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigValidation(path + ": " + e.what());
  }
}

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigValidation(path + ": " + what);
}

}  // namespace detail

/// Builds a TrainConfig from a resolved config, checking every constraint.
inline TrainConfig train_config_from_json(const Json& resolved) {
  using detail::get;
  using detail::require;
  TrainConfig c;
  c.seed = get<std::uint64_t>(resolved, "seed");
  const auto workers = get<std::int64_t>(resolved, "workers");
  require(workers >= 1, "workers", "must be >= 1");
  c.workers = static_cast<unsigned>(workers);

  c.window = get<int>(resolved, "model.window");
  require(c.window >= 0, "model.window", "must be >= 0");
  c.hidden = get<int>(resolved, "model.hidden");
  require(c.hidden >= 1, "model.hidden", "must be >= 1");

  c.peak_lr = get<double>(resolved, "optim.peak_lr");
  require(c.peak_lr > 0.0, "optim.peak_lr", "must be > 0");
  c.adam_beta1 = get<double>(resolved, "optim.beta1");
  require(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "optim.beta1", "must be in [0, 1)");
  c.adam_beta2 = get<double>(resolved, "optim.beta2");
  require(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "optim.beta2", "must be in [0, 1)");
  c.adam_eps = get<double>(resolved, "optim.eps");
  require(c.adam_eps > 0.0, "optim.eps", "must be > 0");

  c.warmup_steps = get<std::int64_t>(resolved, "schedule.S");
  require(c.warmup_steps >= 0, "schedule.S", "must be >= 0");
  c.ssl_iters = get<std::int64_t>(resolved, "schedule.F");
  require(c.ssl_iters >= 1, "schedule.F", "must be >= 1");
  c.eval_every = get<std::int64_t>(resolved, "schedule.eval_every");
  require(c.eval_every >= 1, "schedule.eval_every", "must be >= 1");

  const auto bl = get<std::int64_t>(resolved, "batch.labeled");
  require(bl >= 1, "batch.labeled", "must be >= 1");
  const auto bu = get<std::int64_t>(resolved, "batch.unlabeled");
  require(bu >= 1, "batch.unlabeled", "must be >= 1");
  c.batch_size_labeled = static_cast<std::size_t>(bl);
  c.batch_size_unlabeled = static_cast<std::size_t>(bu);
  c.mu = get<int>(resolved, "batch.mu");
  require(c.mu >= 1, "batch.mu", "must be an integer >= 1");

  const auto C = get<std::int64_t>(resolved, "curriculum.C");
  require(C >= 1, "curriculum.C", "must be >= 1");
  c.pool_batches = static_cast<std::size_t>(C);
  c.stages = get<int>(resolved, "curriculum.K");
  require(c.stages >= 1 && c.stages <= c.ssl_iters, "curriculum.K", "must satisfy 1 <= K <= schedule.F");

  try {
    c.selection = selection_mode_from_string(get<std::string>(resolved, "selection.mode"));
  } catch (const InvalidArgument& e) {
    throw ConfigValidation(std::string("selection.mode: ") + e.what());
  }
  c.tau = get<double>(resolved, "selection.tau");
  require(c.tau >= 0.0 && c.tau <= 1.0, "selection.tau", "must be in [0, 1]");

  c.lambda = get<double>(resolved, "scoring.lambda");
  require(c.lambda >= 0.0, "scoring.lambda", "must be >= 0");
  try {
    c.cs_variant = cs_variant_from_string(get<std::string>(resolved, "scoring.cs_variant"));
  } catch (const InvalidArgument& e) {
    throw ConfigValidation(std::string("scoring.cs_variant: ") + e.what());
  }

  if (const auto& a = detail::at_path(resolved, "ema.alpha"); !a.is_null()) {
    c.ema_alpha = a.get<double>();
    require(*c.ema_alpha >= 0.0 && *c.ema_alpha <= 1.0, "ema.alpha", "must be in [0, 1]");
  }
  c.ema_retention = get<double>(resolved, "ema.retention");
  require(c.ema_retention > 0.0 && c.ema_retention < 1.0, "ema.retention", "must be in (0, 1)");

  auto& s = c.strong;
  s.kind = MaskKind::kStrong;
  s.time_mask_len = get<int>(resolved, "augment.strong.time_mask_len");
  require(s.time_mask_len >= 1, "augment.strong.time_mask_len", "must be >= 1");
  s.time_mask_prob = get<double>(resolved, "augment.strong.time_mask_prob");
  require(s.time_mask_prob >= 0.0 && s.time_mask_prob <= 1.0, "augment.strong.time_mask_prob", "must be in [0, 1]");
  s.chan_mask_len = get<int>(resolved, "augment.strong.chan_mask_len");
  require(s.chan_mask_len >= 1, "augment.strong.chan_mask_len", "must be >= 1");
  s.chan_mask_prob = get<double>(resolved, "augment.strong.chan_mask_prob");
  require(s.chan_mask_prob >= 0.0 && s.chan_mask_prob <= 1.0, "augment.strong.chan_mask_prob", "must be in [0, 1]");
  c.weak = weak_of(s);
  if (const auto& v = detail::at_path(resolved, "augment.weak.chan_mask_len"); !v.is_null()) {
    c.weak.chan_mask_len = v.get<int>();
    require(c.weak.chan_mask_len >= 1, "augment.weak.chan_mask_len", "must be >= 1");
  }
  if (const auto& v = detail::at_path(resolved, "augment.weak.chan_mask_prob"); !v.is_null()) {
    c.weak.chan_mask_prob = v.get<double>();
    require(c.weak.chan_mask_prob >= 0.0 && c.weak.chan_mask_prob <= 1.0, "augment.weak.chan_mask_prob",
            "must be in [0, 1]");
  }

  c.divergence_patience = get<int>(resolved, "divergence.patience");
  require(c.divergence_patience >= 1, "divergence.patience", "must be >= 1");
  c.divergence_ter = get<double>(resolved, "divergence.ter");
  c.validate();
  return c;
}

/// data_dir is the only field without a usable default.
inline std::string data_dir_from_json(const Json& resolved) {
  const auto& v = detail::at_path(resolved, "data_dir");
  if (v.is_null()) throw ConfigValidation("data_dir: missing required field");
  return v.get<std::string>();
}

}  // namespace censer
