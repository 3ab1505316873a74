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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "censer/ctc.hpp"
#include "censer/types.hpp"

namespace censer {

/// How a non-blank run of the greedy path contributes to the confidence score.
enum class CsVariant {
  kFirstFrame,  // probability at the run's first frame
  kRunMean,     // mean probability over the run
  kRunMax,      // highest probability in the run
};

inline std::string to_string(CsVariant v) {
  switch (v) {
    case CsVariant::kFirstFrame: return "first";
    case CsVariant::kRunMean: return "mean";
    case CsVariant::kRunMax: return "max";
  }
  return "?";
}

inline CsVariant cs_variant_from_string(const std::string& s) {
  if (s == "first") return CsVariant::kFirstFrame;
  if (s == "mean") return CsVariant::kRunMean;
  if (s == "max") return CsVariant::kRunMax;
  throw InvalidArgument("unknown confidence variant '" + s + "' (expected first|mean|max)");
}

/// Mean over non-blank runs of the greedy path of the run's representative
/// probability. Zero when the path holds only blanks.
inline double confidence_score(const FramePath& path, CsVariant variant = CsVariant::kFirstFrame) {
  double sum = 0.0;
  std::size_t runs = 0;
  const std::size_t T = path.ids.size();
  for (std::size_t begin = 0; begin < T;) {
    std::size_t end = begin + 1;
    while (end < T && path.ids[end] == path.ids[begin]) ++end;
    if (path.ids[begin] != kBlank) {
      double v = path.max_prob[begin];
      if (variant == CsVariant::kRunMean) {
        v = 0.0;
        for (std::size_t t = begin; t < end; ++t) v += path.max_prob[t];
        v /= static_cast<double>(end - begin);
      } else if (variant == CsVariant::kRunMax) {
        for (std::size_t t = begin; t < end; ++t) v = std::max(v, path.max_prob[t]);
      }
      sum += v;
      ++runs;
    }
    begin = end;
  }
  return runs == 0 ? 0.0 : sum / static_cast<double>(runs);
}

/// Unit-cost edit distance.
inline std::size_t levenshtein(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Pseudo label plus the ingredients of its scores.
struct ScoredPL {
  TokenSeq pl;
  double cs = 0.0;
  TokenSeq perturbed_pl;
  double perturbed_cs = 0.0;
  double crs = 0.0;
};

/// Confidence-robustness score: mean confidence of the clean and perturbed
/// decodes minus lambda times their edit distance normalized by |pl|. An
/// empty clean PL normalizes by max(1, |perturbed|) instead.
inline double crs(std::span<const TokenId> pl, double cs, std::span<const TokenId> perturbed_pl,
                  double perturbed_cs, double lambda) {
  if (lambda < 0.0) throw NegativeLambda("lambda = " + std::to_string(lambda));
  const double mean_cs = 0.5 * (cs + perturbed_cs);
  const std::size_t dist = levenshtein(pl, perturbed_pl);
  if (dist == 0) return mean_cs;
  const double len = pl.empty() ? static_cast<double>(std::max<std::size_t>(1, perturbed_pl.size()))
                                : static_cast<double>(pl.size());
  return mean_cs - lambda * static_cast<double>(dist) / len;
}

/// Decode clean and weakly perturbed posteriors and assemble a ScoredPL.
inline ScoredPL score_pseudo_label(const PosteriorMatrix& clean, const PosteriorMatrix& perturbed,
                                   double lambda, CsVariant variant = CsVariant::kFirstFrame) {
  ScoredPL out;
  auto c = greedy_decode(clean);
  auto p = greedy_decode(perturbed);
  out.cs = confidence_score(c.path, variant);
  out.perturbed_cs = confidence_score(p.path, variant);
  out.pl = std::move(c.pl);
  out.perturbed_pl = std::move(p.pl);
  out.crs = crs(out.pl, out.cs, out.perturbed_pl, out.perturbed_cs, lambda);
  return out;
}

inline double token_error_rate(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  if (ref.empty()) throw EmptyReference("token error rate of an empty reference is undefined");
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

/// Accumulates corpus-level TER as total distance over total reference length.
class TerAccumulator {
 public:
  void add(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
    distance_ += levenshtein(hyp, ref);
    ref_length_ += ref.size();
  }
  std::size_t distance() const { return distance_; }
  std::size_t ref_length() const { return ref_length_; }
  double rate() const {
    if (ref_length_ == 0) throw EmptyReference("corpus has no reference tokens");
    return static_cast<double>(distance_) / static_cast<double>(ref_length_);
  }

 private:
  std::size_t distance_ = 0;
  std::size_t ref_length_ = 0;
};

}  // namespace censer
