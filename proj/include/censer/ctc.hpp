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
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "censer/types.hpp"

namespace censer {

/// T x (V+1) per-frame log-probabilities; column 0 is blank.
using PosteriorMatrix = Matrix;

/// Per-frame argmax of a PosteriorMatrix.
struct FramePath {
  std::vector<TokenId> ids;
  std::vector<double> max_prob;

  std::size_t size() const { return ids.size(); }
};

struct CtcResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits, same shape as the logits
};

struct GreedyResult {
  TokenSeq pl;
  FramePath path;
};

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Row-wise log-softmax.
inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    const double lse = mx + std::log((logits.row(t).array() - mx).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

/// Number of frames the shortest alignment of `target` needs: one per token
/// plus one blank between each pair of identical neighbours.
inline std::size_t ctc_min_frames(std::span<const TokenId> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

/// Merge runs of identical ids, then drop blanks.
inline TokenSeq collapse(std::span<const TokenId> path) {
  TokenSeq out;
  TokenId prev = -1;
  for (TokenId id : path) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

/// CTC negative log-likelihood of `target` and its gradient w.r.t. the
/// unnormalized logits, by log-space forward-backward. Since log-softmax is
/// idempotent, log-probabilities may be passed as logits.
inline CtcResult ctc_loss_grad(const Matrix& logits, std::span<const TokenId> target) {
  const auto T = static_cast<int>(logits.rows());
  const auto C = static_cast<int>(logits.cols());
  if (T < 1 || C < 2) throw InvalidArgument("ctc_loss_grad needs T >= 1 and at least one non-blank class");
  if (!logits.allFinite()) throw NonFiniteInput("logits contain NaN or inf");
  for (TokenId id : target)
    if (id < 1 || id >= C)
      throw InvalidArgument("target token " + std::to_string(id) + " outside [1, " + std::to_string(C - 1) + "]");
  if (ctc_min_frames(target) > static_cast<std::size_t>(T))
    throw InfeasibleTarget("target of length " + std::to_string(target.size()) + " needs " +
                           std::to_string(ctc_min_frames(target)) + " frames, have " + std::to_string(T));

  const Matrix logp = log_softmax(logits);
  const int L = static_cast<int>(target.size());
  const int S = 2 * L + 1;
  std::vector<TokenId> ext(S, kBlank);
  for (int i = 0; i < L; ++i) ext[2 * i + 1] = target[i];

  // A transition s-2 -> s is allowed into a non-blank state whose label
  // differs from the one two states back.
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  Matrix alpha = Matrix::Constant(T, S, kLogZero);
  Matrix beta = Matrix::Constant(T, S, kLogZero);

  alpha(0, 0) = logp(0, ext[0]);
  if (S > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a <= kLogZero ? kLogZero : a + logp(t, ext[s]);
    }
  }

  // beta(t, s): log-probability of emitting frames t+1..T-1 given state s at t.
  beta(T - 1, S - 1) = 0.0;
  if (S > 1) beta(T - 1, S - 2) = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta(t + 1, s) + logp(t + 1, ext[s]);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1) + logp(t + 1, ext[s + 1]));
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2) + logp(t + 1, ext[s + 2]));
      beta(t, s) = std::max(b, kLogZero);
    }
  }

  double log_total = alpha(T - 1, S - 1);
  if (S > 1) log_total = log_add(log_total, alpha(T - 1, S - 2));

  CtcResult result;
  result.loss = std::max(0.0, -log_total);
  result.grad = logp.array().exp();
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double occ = alpha(t, s) + beta(t, s);
      if (occ <= kLogZero) continue;
      result.grad(t, ext[s]) -= std::exp(occ - log_total);
    }
  }
  return result;
}

/// Per-frame argmax (ties go to the lowest id) followed by collapse.
inline GreedyResult greedy_decode(const PosteriorMatrix& logp) {
  GreedyResult out;
  const auto T = logp.rows();
  out.path.ids.resize(T);
  out.path.max_prob.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logp.cols(); ++c)
      if (logp(t, c) > logp(t, best)) best = c;
    out.path.ids[t] = static_cast<TokenId>(best);
    out.path.max_prob[t] = std::exp(logp(t, best));
  }
  out.pl = collapse(out.path.ids);
  return out;
}

}  // namespace censer
