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
#include <random>
#include <string>
#include <vector>

#include "censer/types.hpp"

namespace censer {

enum class MaskKind { kStrong, kWeak };

/// Span masking along time and channels. Strong policies mask both axes,
/// weak ones only channels.
struct MaskPolicy {
  int time_mask_len = 10;
  double time_mask_prob = 0.65;
  int chan_mask_len = 64;
  double chan_mask_prob = 0.5;
  MaskKind kind = MaskKind::kStrong;

  void validate() const {
    if (time_mask_len < 1 || chan_mask_len < 1) throw InvalidArgument("mask lengths must be >= 1");
    if (time_mask_prob < 0.0 || time_mask_prob > 1.0 || chan_mask_prob < 0.0 || chan_mask_prob > 1.0)
      throw InvalidArgument("mask probabilities must be in [0, 1]");
    if (kind == MaskKind::kWeak && time_mask_prob != 0.0)
      throw InvalidArgument("weak policy must not mask time");
  }
};

/// Reference masking parameters of the full-scale recipe.
inline MaskPolicy reference_strong_policy() { return MaskPolicy{10, 0.65, 64, 0.5, MaskKind::kStrong}; }

/// Same channel masking, time masking disabled.
inline MaskPolicy weak_of(const MaskPolicy& strong) {
  if (strong.kind != MaskKind::kStrong) throw InvalidArgument("weak_of expects a strong policy");
  MaskPolicy weak = strong;
  weak.time_mask_prob = 0.0;
  weak.kind = MaskKind::kWeak;
  return weak;
}

namespace detail {

// Time: every frame starts a span with probability prob / len; spans are
// clipped at the end. Overlaps are allowed.
inline std::vector<bool> time_mask(Eigen::Index n, int len, double prob, std::mt19937_64& rng) {
  std::vector<bool> masked(static_cast<std::size_t>(n), false);
  if (prob <= 0.0 || n == 0) return masked;
  std::bernoulli_distribution start(std::min(1.0, prob / len));
  for (Eigen::Index i = 0; i < n; ++i)
    if (start(rng))
      for (Eigen::Index j = i; j < std::min<Eigen::Index>(n, i + len); ++j) masked[j] = true;
  return masked;
}

// Channels: spans must fit inside [0, n). Each of the n - len + 1 valid
// starts fires independently so that the expected number of spans is
// prob * n / len.
inline std::vector<bool> channel_mask(Eigen::Index n, int len, double prob, std::mt19937_64& rng) {
  std::vector<bool> masked(static_cast<std::size_t>(n), false);
  if (prob <= 0.0 || n == 0) return masked;
  const Eigen::Index span = std::min<Eigen::Index>(len, n);
  const Eigen::Index starts = n - span + 1;
  const double rate = std::min(1.0, prob * static_cast<double>(n) / (static_cast<double>(span) * starts));
  std::bernoulli_distribution start(rate);
  for (Eigen::Index i = 0; i < starts; ++i)
    if (start(rng))
      for (Eigen::Index j = i; j < i + span; ++j) masked[j] = true;
  return masked;
}

}  // namespace detail

/// Returns a masked copy of `feats`; masked cells are zero.
inline FeatureMatrix augment(const FeatureMatrix& feats, const MaskPolicy& policy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMatrix out = feats;
  const auto tmask = detail::time_mask(feats.rows(), policy.time_mask_len, policy.time_mask_prob, rng);
  const auto cmask = detail::channel_mask(feats.cols(), policy.chan_mask_len, policy.chan_mask_prob, rng);
  for (Eigen::Index t = 0; t < out.rows(); ++t)
    if (tmask[t]) out.row(t).setZero();
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    if (cmask[c]) out.col(c).setZero();
  return out;
}

}  // namespace censer
