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

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace censer {
namespace {

TokenSeq chars(const std::string& s) { return TokenSeq(s.begin(), s.end()); }

TEST(Levenshtein, KittenSitting) {
  EXPECT_EQ(levenshtein(chars("kitten"), chars("sitting")), 3u);
  EXPECT_EQ(oracle::lev_recursive(chars("kitten"), chars("sitting")), 3u);
}

TEST(Levenshtein, MetricAxiomsOnAllShortBinaryStrings) {
  const auto all = oracle::all_strings(4, 2);
  ASSERT_EQ(all.size(), 31u);
  for (const auto& a : all)
    for (const auto& b : all) {
      const auto ab = levenshtein(a, b);
      ASSERT_EQ(ab, oracle::lev_recursive(a, b));
      ASSERT_EQ(ab == 0, a == b);
      ASSERT_EQ(ab, levenshtein(b, a));
      for (const auto& c : all) ASSERT_LE(levenshtein(a, c), ab + levenshtein(b, c));
    }
}

FramePath make_path(std::vector<TokenId> ids, std::vector<double> probs) { return {std::move(ids), std::move(probs)}; }

TEST(ConfidenceScore, UsesFirstFrameOfEachNonBlankRun) {
  const auto p = make_path({0, 1, 1, 0, 2, 2, 2, 0}, {0.9, 0.6, 0.9, 0.8, 0.5, 0.7, 1.0, 0.9});
  EXPECT_NEAR(confidence_score(p), (0.6 + 0.5) / 2.0, 1e-12);
  EXPECT_NEAR(confidence_score(p, CsVariant::kRunMean), (0.75 + 0.733333333333333) / 2.0, 1e-9);
  EXPECT_NEAR(confidence_score(p, CsVariant::kRunMax), (0.9 + 1.0) / 2.0, 1e-12);
}

TEST(ConfidenceScore, RepeatedTokensSplitByBlankAreSeparateRuns) {
  const auto p = make_path({1, 0, 1}, {0.2, 0.9, 0.8});
  EXPECT_NEAR(confidence_score(p), 0.5, 1e-12);
}

TEST(ConfidenceScore, AllBlankIsZero) { EXPECT_EQ(confidence_score(make_path({0, 0}, {0.9, 0.9})), 0.0); }

TEST(ConfidenceScore, VariantNamesRoundTrip) {
  for (auto v : {CsVariant::kFirstFrame, CsVariant::kRunMean, CsVariant::kRunMax})
    EXPECT_EQ(cs_variant_from_string(to_string(v)), v);
  EXPECT_THROW(cs_variant_from_string("median"), InvalidArgument);
}

TEST(Crs, AgreementGivesMeanConfidence) {
  EXPECT_NEAR(crs(TokenSeq{1, 2}, 0.8, TokenSeq{1, 2}, 0.6, 1.0), 0.7, 1e-12);
}

TEST(Crs, DisagreementIsPenalizedByNormalizedDistance) {
  EXPECT_NEAR(crs(TokenSeq{1, 2, 3, 4}, 0.8, TokenSeq{1, 3, 4}, 0.6, 1.0), 0.7 - 0.25, 1e-12);
  EXPECT_NEAR(crs(TokenSeq{1, 2, 3, 4}, 0.8, TokenSeq{1, 3, 4}, 0.6, 0.0), 0.7, 1e-12);
  EXPECT_NEAR(crs(TokenSeq{}, 0.0, TokenSeq{2, 2}, 0.5, 1.0), 0.25 - 1.0, 1e-12);
}

TEST(Crs, RejectsNegativeLambda) { EXPECT_THROW(crs(TokenSeq{1}, 1, TokenSeq{1}, 1, -0.1), NegativeLambda); }

TEST(Crs, ScorePseudoLabelDecodesBothViews) {
  Matrix clean = Matrix::Constant(3, 3, std::log(0.1));
  clean(0, 1) = std::log(0.8);
  clean(1, 0) = std::log(0.8);
  clean(2, 2) = std::log(0.8);
  Matrix perturbed = clean;
  perturbed(2, 2) = std::log(0.1);
  perturbed(2, 0) = std::log(0.8);
  const auto s = score_pseudo_label(clean, perturbed, 1.0);
  EXPECT_EQ(s.pl, (TokenSeq{1, 2}));
  EXPECT_EQ(s.perturbed_pl, (TokenSeq{1}));
  EXPECT_NEAR(s.crs, 0.8 - 0.5, 1e-12);
}

TEST(TokenErrorRate, CorpusLevelAggregation) {
  EXPECT_THROW(token_error_rate(TokenSeq{1}, TokenSeq{}), EmptyReference);
  TerAccumulator acc;
  acc.add(TokenSeq{1, 2}, TokenSeq{1, 2, 3});
  acc.add(TokenSeq{3}, TokenSeq{2});
  EXPECT_NEAR(acc.rate(), 2.0 / 4.0, 1e-12);
  EXPECT_THROW(TerAccumulator{}.rate(), EmptyReference);
}

}  // namespace
}  // namespace censer
