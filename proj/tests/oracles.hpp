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

// Reference implementations used only to check the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "censer.hpp"

namespace censer::oracle {

/// CTC negative log-likelihood by enumerating every frame labelling.
inline double ctc_brute_force(const Matrix& logits, const TokenSeq& target) {
  const Matrix logp = log_softmax(logits);
  const int T = static_cast<int>(logp.rows());
  const int C = static_cast<int>(logp.cols());
  std::vector<TokenId> path(T, 0);
  double total = 0.0;
  for (;;) {
    if (collapse(path) == target) {
      double lp = 0.0;
      for (int t = 0; t < T; ++t) lp += logp(t, path[t]);
      total += std::exp(lp);
    }
    int t = T - 1;
    while (t >= 0 && ++path[t] == C) path[t--] = 0;
    if (t < 0) break;
  }
  return -std::log(total);
}

/// Levenshtein distance by plain recursion over prefixes.
inline std::size_t lev_recursive(const TokenSeq& a, std::size_t i, const TokenSeq& b, std::size_t j) {
  if (i == 0) return j;
  if (j == 0) return i;
  const std::size_t sub = lev_recursive(a, i - 1, b, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
  return std::min({sub, lev_recursive(a, i - 1, b, j) + 1, lev_recursive(a, i, b, j - 1) + 1});
}

inline std::size_t lev_recursive(const TokenSeq& a, const TokenSeq& b) { return lev_recursive(a, a.size(), b, b.size()); }

/// All sequences of length <= max_len over tokens {1, ..., alphabet}.
inline std::vector<TokenSeq> all_strings(int max_len, int alphabet) {
  std::vector<TokenSeq> out{{}};
  std::vector<TokenSeq> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& s : frontier)
      for (int a = 1; a <= alphabet; ++a) {
        auto t = s;
        t.push_back(a);
        next.push_back(t);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

/// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const Vector&)>& f, Vector x, Eigen::Index i,
                                  double h = 1e-6) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// EMA after n updates from zeta0 toward a sequence of students, closed form:
/// alpha^n zeta0 + sum_i (1 - alpha) alpha^(n - 1 - i) theta_i.
inline Vector ema_closed_form(const Vector& zeta0, const std::vector<Vector>& thetas, double alpha) {
  const auto n = thetas.size();
  Vector out = std::pow(alpha, static_cast<double>(n)) * zeta0;
  for (std::size_t i = 0; i < n; ++i)
    out += (1.0 - alpha) * std::pow(alpha, static_cast<double>(n - 1 - i)) * thetas[i];
  return out;
}

}  // namespace censer::oracle
