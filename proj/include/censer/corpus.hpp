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
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "censer/io.hpp"
#include "censer/rng.hpp"
#include "censer/types.hpp"

namespace censer {

enum class Stratum { kEasy, kHard };

inline std::string to_string(Stratum s) { return s == Stratum::kEasy ? "easy" : "hard"; }

/// Parameters of the synthetic sequence-recognition corpus. Each token has a
/// unit-norm prototype in R^D; an utterance renders every token as a run of
/// noisy copies of its prototype. Hard utterances use more noise and
/// prototypes displaced along a shared shift direction.
struct CorpusSpec {
  int vocab_size = 8;
  int feature_dim = 16;
  int min_tokens = 3;
  int max_tokens = 10;
  int min_frames_per_token = 2;
  int max_frames_per_token = 5;
  double noise_easy = 0.15;
  double noise_hard = 0.45;
  double hard_fraction = 0.5;
  double labeled_hard_fraction = -1.0;  // < 0: same as hard_fraction
  double shift_strength = 0.5;
  double min_prototype_distance = 1.4;
  int n_labeled = 200;
  int n_unlabeled = 4000;
  int n_dev = 500;
  int n_test = 500;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("corpus spec: " + m); };
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (feature_dim < 1) fail("feature_dim must be >= 1");
    if (min_tokens < 1 || max_tokens < min_tokens) fail("need 1 <= min_tokens <= max_tokens");
    if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token)
      fail("need 1 <= min_frames_per_token <= max_frames_per_token");
    if (noise_easy < 0.0 || !(noise_easy < noise_hard)) fail("need 0 <= noise_easy < noise_hard");
    if (hard_fraction < 0.0 || hard_fraction > 1.0) fail("hard_fraction must be in [0, 1]");
    if (labeled_hard_fraction > 1.0) fail("labeled_hard_fraction must be <= 1");
    if (shift_strength < 0.0) fail("shift_strength must be >= 0");
    if (n_labeled < 1 || n_unlabeled < 1 || n_dev < 1 || n_test < 1) fail("all split counts must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = {{"vocab_size", s.vocab_size},
       {"feature_dim", s.feature_dim},
       {"min_tokens", s.min_tokens},
       {"max_tokens", s.max_tokens},
       {"min_frames_per_token", s.min_frames_per_token},
       {"max_frames_per_token", s.max_frames_per_token},
       {"noise_easy", s.noise_easy},
       {"noise_hard", s.noise_hard},
       {"hard_fraction", s.hard_fraction},
       {"labeled_hard_fraction", s.labeled_hard_fraction},
       {"shift_strength", s.shift_strength},
       {"min_prototype_distance", s.min_prototype_distance},
       {"n_labeled", s.n_labeled},
       {"n_unlabeled", s.n_unlabeled},
       {"n_dev", s.n_dev},
       {"n_test", s.n_test},
       {"seed", s.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, CorpusSpec& s) {
  if (!j.is_object()) throw InvalidArgument("corpus spec must be a JSON object");
  const nlohmann::json defaults = CorpusSpec{};
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw InvalidArgument("corpus spec: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("vocab_size", s.vocab_size);
  get("feature_dim", s.feature_dim);
  get("min_tokens", s.min_tokens);
  get("max_tokens", s.max_tokens);
  get("min_frames_per_token", s.min_frames_per_token);
  get("max_frames_per_token", s.max_frames_per_token);
  get("noise_easy", s.noise_easy);
  get("noise_hard", s.noise_hard);
  get("hard_fraction", s.hard_fraction);
  get("labeled_hard_fraction", s.labeled_hard_fraction);
  get("shift_strength", s.shift_strength);
  get("min_prototype_distance", s.min_prototype_distance);
  get("n_labeled", s.n_labeled);
  get("n_unlabeled", s.n_unlabeled);
  get("n_dev", s.n_dev);
  get("n_test", s.n_test);
  get("seed", s.seed);
}

struct Utterance {
  std::string utt_id;
  FeatureMatrix features;
  TokenSeq transcript;
  Stratum stratum = Stratum::kEasy;
};

enum class Split { kLabeled, kUnlabeled, kDev, kTest };

inline constexpr Split kAllSplits[] = {Split::kLabeled, Split::kUnlabeled, Split::kDev, Split::kTest};

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kLabeled: return "labeled";
    case Split::kUnlabeled: return "unlabeled";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  for (Split sp : kAllSplits)
    if (to_string(sp) == s) return sp;
  throw InvalidArgument("unknown split '" + s + "'");
}

/// Read access to a split without its transcripts. References are reachable
/// only through oracle_transcript(), which selection code must not call
/// outside the oracle mode and diagnostics.
class UnlabeledView {
 public:
  UnlabeledView() = default;
  explicit UnlabeledView(const std::vector<Utterance>* utts) : utts_(utts) {}

  std::size_t size() const { return utts_ ? utts_->size() : 0; }
  bool empty() const { return size() == 0; }
  const std::string& utt_id(std::size_t i) const { return utts_->at(i).utt_id; }
  const FeatureMatrix& features(std::size_t i) const { return utts_->at(i).features; }
  Stratum stratum(std::size_t i) const { return utts_->at(i).stratum; }
  const TokenSeq& oracle_transcript(std::size_t i) const { return utts_->at(i).transcript; }

 private:
  const std::vector<Utterance>* utts_ = nullptr;
};

/// Clean and shifted token prototypes, index 0 unused (blank).
struct Prototypes {
  std::vector<Vector> clean;
  std::vector<Vector> hard;
};

inline Prototypes make_prototypes(const CorpusSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, {0xC0DE}));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit = [&] {
    Vector v(spec.feature_dim);
    do {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    } while (v.norm() < 1e-12);
    return Vector(v / v.norm());
  };
  Prototypes p;
  p.clean.assign(spec.vocab_size + 1, Vector::Zero(spec.feature_dim));
  constexpr int kMaxAttempts = 100000;
  int attempts = 0;
  for (int v = 1; v <= spec.vocab_size; ++v) {
    for (;;) {
      if (++attempts > kMaxAttempts)
        throw PrototypeRejectionExceeded("could not place " + std::to_string(spec.vocab_size) +
                                         " prototypes at distance >= " +
                                         std::to_string(spec.min_prototype_distance));
      Vector cand = unit();
      bool ok = true;
      for (int u = 1; u < v && ok; ++u) ok = (cand - p.clean[u]).norm() >= spec.min_prototype_distance;
      if (ok) {
        p.clean[v] = cand;
        break;
      }
    }
  }
  const Vector shift = unit() * spec.shift_strength;
  p.hard = p.clean;
  for (int v = 1; v <= spec.vocab_size; ++v) p.hard[v] += shift;
  return p;
}

inline Utterance make_utterance(const CorpusSpec& spec, const Prototypes& protos, Split split, std::size_t index) {
  std::mt19937_64 rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(split) + 1, index}));
  std::uniform_int_distribution<int> len_dist(spec.min_tokens, spec.max_tokens);
  std::uniform_int_distribution<int> dur_dist(spec.min_frames_per_token, spec.max_frames_per_token);
  const double rho =
      split == Split::kLabeled && spec.labeled_hard_fraction >= 0.0 ? spec.labeled_hard_fraction : spec.hard_fraction;
  std::bernoulli_distribution hard(rho);
  std::normal_distribution<double> normal(0.0, 1.0);

  Utterance u;
  char id[32];
  std::snprintf(id, sizeof id, "%s-%06zu", to_string(split).c_str(), index);
  u.utt_id = id;
  u.stratum = hard(rng) ? Stratum::kHard : Stratum::kEasy;
  const int L = len_dist(rng);
  // Immediate repeats are excluded: two adjacent runs of one token would be
  // indistinguishable from a single long run.
  for (int i = 0; i < L; ++i) {
    const int choices = i == 0 ? spec.vocab_size : spec.vocab_size - 1;
    int tok = std::uniform_int_distribution<int>(1, choices)(rng);
    if (i > 0 && tok >= u.transcript.back()) ++tok;
    u.transcript.push_back(tok);
  }
  std::vector<int> durations(L);
  int T = 0;
  for (auto& d : durations) T += (d = dur_dist(rng));

  const auto& table = u.stratum == Stratum::kEasy ? protos.clean : protos.hard;
  const double sigma = u.stratum == Stratum::kEasy ? spec.noise_easy : spec.noise_hard;
  u.features.resize(T, spec.feature_dim);
  int t = 0;
  for (int i = 0; i < L; ++i) {
    for (int k = 0; k < durations[i]; ++k, ++t) {
      for (int c = 0; c < spec.feature_dim; ++c) {
        // Stored as float32 on disk; round now so memory and disk agree.
        const double v = table[u.transcript[i]][c] + sigma * normal(rng);
        u.features(t, c) = static_cast<double>(static_cast<float>(v));
      }
    }
  }
  return u;
}

/// Fully materialized corpus.
struct Corpus {
  CorpusSpec spec;
  Prototypes prototypes;
  std::vector<Utterance> labeled, unlabeled, dev, test;

  std::vector<Utterance>& split(Split s) {
    switch (s) {
      case Split::kLabeled: return labeled;
      case Split::kUnlabeled: return unlabeled;
      case Split::kDev: return dev;
      case Split::kTest: return test;
    }
    throw InvalidArgument("bad split");
  }
  const std::vector<Utterance>& split(Split s) const { return const_cast<Corpus*>(this)->split(s); }
  UnlabeledView unlabeled_view() const { return UnlabeledView(&unlabeled); }
};

inline std::size_t split_count(const CorpusSpec& spec, Split s) {
  switch (s) {
    case Split::kLabeled: return static_cast<std::size_t>(spec.n_labeled);
    case Split::kUnlabeled: return static_cast<std::size_t>(spec.n_unlabeled);
    case Split::kDev: return static_cast<std::size_t>(spec.n_dev);
    case Split::kTest: return static_cast<std::size_t>(spec.n_test);
  }
  return 0;
}

/// Deterministic in spec.seed; every utterance has its own derived stream.
inline Corpus generate(const CorpusSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  c.prototypes = make_prototypes(spec);
  for (Split s : kAllSplits) {
    auto& out = c.split(s);
    const std::size_t n = split_count(spec, s);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_utterance(spec, c.prototypes, s, i));
  }
  return c;
}

// ---------------------------------------------------------------------------
// On-disk format
//
//   corpus.json       index: spec, per-split file names, counts and CRC-32s
//   <split>.jsonl     one line per utterance:
//                     {utt_id, file, offset, n_frames, transcript, stratum}
//                     unlabeled lines carry transcript: null and keep the
//                     reference under "oracle_transcript"
//   <split>.feats     concatenated blobs: u32 T, u32 D, T*D f32 row-major,
//                     all little-endian
// ---------------------------------------------------------------------------

inline constexpr const char* kCorpusIndex = "corpus.json";

inline std::string encode_features(const FeatureMatrix& f) {
  io::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(f.rows()));
  w.u32(static_cast<std::uint32_t>(f.cols()));
  for (Eigen::Index t = 0; t < f.rows(); ++t)
    for (Eigen::Index c = 0; c < f.cols(); ++c) w.f32(static_cast<float>(f(t, c)));
  return w.take();
}

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json index;
  index["format"] = "censer-corpus";
  index["version"] = 1;
  index["spec"] = corpus.spec;
  for (Split s : kAllSplits) {
    const std::string name = to_string(s);
    const std::string feats_name = name + ".feats";
    const std::string manifest_name = name + ".jsonl";
    std::string feats;
    std::string manifest;
    for (const auto& u : corpus.split(s)) {
      nlohmann::json line;
      line["utt_id"] = u.utt_id;
      line["file"] = feats_name;
      line["offset"] = feats.size();
      line["n_frames"] = u.features.rows();
      if (s == Split::kUnlabeled) {
        line["transcript"] = nullptr;
        line["oracle_transcript"] = u.transcript;
      } else {
        line["transcript"] = u.transcript;
      }
      line["stratum"] = to_string(u.stratum);
      manifest += line.dump();
      manifest += '\n';
      feats += encode_features(u.features);
    }
    io::write_file_atomic(dir / feats_name, feats);
    io::write_file_atomic(dir / manifest_name, manifest);
    index["splits"][name] = {{"manifest", manifest_name},
                             {"features", feats_name},
                             {"count", corpus.split(s).size()},
                             {"manifest_crc32", io::crc32(manifest)},
                             {"features_crc32", io::crc32(feats)}};
  }
  io::write_file_atomic(dir / kCorpusIndex, index.dump(2) + "\n");
}

inline Corpus generate_to_disk(const CorpusSpec& spec, const std::filesystem::path& dir) {
  Corpus c = generate(spec);
  write_corpus(c, dir);
  return c;
}

/// Corpus on disk. Checksums of every file are verified when the handle is
/// opened; feature matrices of a split are decoded on first access.
class CorpusHandle {
 public:
  const CorpusSpec& spec() const { return spec_; }
  const std::filesystem::path& dir() const { return dir_; }

  const std::vector<Utterance>& split(Split s) const {
    auto& slot = splits_.at(s);
    if (!slot.loaded) load_split(s, slot);
    return slot.utts;
  }
  const std::vector<Utterance>& labeled() const { return split(Split::kLabeled); }
  const std::vector<Utterance>& dev() const { return split(Split::kDev); }
  const std::vector<Utterance>& test() const { return split(Split::kTest); }
  UnlabeledView unlabeled() const { return UnlabeledView(&split(Split::kUnlabeled)); }
  /// Transcript-free view of any split.
  UnlabeledView unlabeled_view(Split s) const { return UnlabeledView(&split(s)); }

  /// CRC-32 of each file, keyed by file name.
  const std::map<std::string, std::uint32_t>& checksums() const { return checksums_; }

  friend CorpusHandle load_manifest(const std::filesystem::path& dir);

 private:
  struct SplitSlot {
    std::string manifest_file;
    std::string features_file;
    std::size_t count = 0;
    std::uint32_t manifest_crc = 0;
    std::uint32_t features_crc = 0;
    bool loaded = false;
    std::vector<Utterance> utts;
  };

  std::string read_verified(const std::string& name, std::uint32_t crc) const {
    std::string bytes = io::read_file(dir_ / name);
    if (io::crc32(bytes) != crc) throw ChecksumMismatch(name + " does not match the corpus index");
    return bytes;
  }

  void load_split(Split s, SplitSlot& slot) const {
    const std::string manifest = read_verified(slot.manifest_file, slot.manifest_crc);
    const std::string feats = read_verified(slot.features_file, slot.features_crc);
    std::istringstream lines(manifest);
    std::string line;
    std::vector<Utterance> out;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto where = [&] { return slot.manifest_file + ":" + std::to_string(lineno); };
      try {
        const auto j = nlohmann::json::parse(line);
        Utterance u;
        u.utt_id = j.at("utt_id").get<std::string>();
        if (j.at("file").get<std::string>() != slot.features_file)
          throw CorruptManifest(where() + ": unexpected feature file");
        const auto offset = j.at("offset").get<std::size_t>();
        const auto n_frames = j.at("n_frames").get<std::size_t>();
        const auto& tr = s == Split::kUnlabeled ? j.at("oracle_transcript") : j.at("transcript");
        u.transcript = tr.get<TokenSeq>();
        const auto stratum = j.at("stratum").get<std::string>();
        if (stratum != "easy" && stratum != "hard") throw CorruptManifest(where() + ": bad stratum");
        u.stratum = stratum == "easy" ? Stratum::kEasy : Stratum::kHard;
        io::ByteReader r(feats);
        r.seek(offset);
        const auto T = r.u32();
        const auto D = r.u32();
        if (T != n_frames || static_cast<int>(D) != spec_.feature_dim)
          throw CorruptManifest(where() + ": feature header disagrees with manifest");
        u.features.resize(T, D);
        for (std::uint32_t t = 0; t < T; ++t)
          for (std::uint32_t c = 0; c < D; ++c) u.features(t, c) = static_cast<double>(r.f32());
        out.push_back(std::move(u));
      } catch (const nlohmann::json::exception& e) {
        throw CorruptManifest(where() + ": " + e.what());
      } catch (const IoError& e) {
        throw CorruptManifest(where() + ": " + e.what());
      }
    }
    if (out.size() != slot.count)
      throw CorruptManifest(slot.manifest_file + " has " + std::to_string(out.size()) + " entries, index says " +
                            std::to_string(slot.count));
    slot.utts = std::move(out);
    slot.loaded = true;
  }

  std::filesystem::path dir_;
  CorpusSpec spec_;
  mutable std::map<Split, SplitSlot> splits_;
  std::map<std::string, std::uint32_t> checksums_;
};

inline CorpusHandle load_manifest(const std::filesystem::path& dir) {
  CorpusHandle h;
  h.dir_ = dir;
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(io::read_file(dir / kCorpusIndex));
    if (index.at("format") != "censer-corpus" || index.at("version") != 1)
      throw CorruptManifest("unsupported corpus format");
    h.spec_ = index.at("spec").get<CorpusSpec>();
    for (Split s : kAllSplits) {
      const auto& js = index.at("splits").at(to_string(s));
      CorpusHandle::SplitSlot slot;
      slot.manifest_file = js.at("manifest").get<std::string>();
      slot.features_file = js.at("features").get<std::string>();
      slot.count = js.at("count").get<std::size_t>();
      slot.manifest_crc = js.at("manifest_crc32").get<std::uint32_t>();
      slot.features_crc = js.at("features_crc32").get<std::uint32_t>();
      h.splits_[s] = std::move(slot);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptManifest(std::string(kCorpusIndex) + ": " + e.what());
  }
  for (auto& [s, slot] : h.splits_) {
    for (auto [name, crc] : {std::pair{slot.manifest_file, slot.manifest_crc},
                             std::pair{slot.features_file, slot.features_crc}}) {
      const std::string bytes = io::read_file(dir / name);
      if (io::crc32(bytes) != crc) throw ChecksumMismatch(name + " does not match the corpus index");
      h.checksums_[name] = crc;
    }
  }
  return h;
}

}  // namespace censer
