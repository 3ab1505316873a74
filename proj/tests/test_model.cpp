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

double model_loss(const ParamSet& p, const FeatureMatrix& x, const TokenSeq& y) {
  return ctc_loss_grad(forward_cached(p, x).logits, y).loss;
}

TEST(Model, ParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const ModelDims dims{1, 3, 5, 3};
  for (int trial = 0; trial < 5; ++trial) {
    const ParamSet p = init_params(100 + trial, dims);
    const FeatureMatrix x = testing::random_matrix(6, 3, rng);
    const TokenSeq y = {1, 3};
    const ForwardCache cache = forward_cached(p, x);
    const ParamSet g = backward(p, cache, ctc_loss_grad(cache.logits, y).grad);
    auto f = [&](const Vector& v) {
      ParamSet q = p;
      q.values() = v;
      return model_loss(q, x, y);
    };
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double fd = oracle::central_difference(f, p.values(), i);
      EXPECT_NEAR(g.values()[i], fd, 1e-6 + 1e-5 * std::abs(fd)) << "coordinate " << i;
    }
  }
}

TEST(Model, ForwardRowsAreLogDistributions) {
  std::mt19937_64 rng(2);
  const ParamSet p = init_params(1, ModelDims{2, 4, 8, 5});
  const Matrix logp = forward(p, testing::random_matrix(7, 4, rng));
  ASSERT_EQ(logp.rows(), 7);
  ASSERT_EQ(logp.cols(), 6);
  for (Eigen::Index t = 0; t < 7; ++t) EXPECT_NEAR(logp.row(t).array().exp().sum(), 1.0, 1e-12);
}

TEST(Model, InitIsDeterministicAndScaled) {
  const ModelDims d{2, 4, 8, 5};
  const ParamSet a = init_params(9, d), b = init_params(9, d), c = init_params(10, d);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
  EXPECT_LE(a.w1().cwiseAbs().maxCoeff(), 1.0 / std::sqrt(d.input_dim()));
  EXPECT_EQ(a.b1().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, ForwardRejectsWrongFeatureDim) {
  const ParamSet p = init_params(1, ModelDims{1, 4, 3, 2});
  EXPECT_THROW(forward(p, FeatureMatrix::Zero(3, 5)), DimensionMismatch);
}

TEST(Adam, FirstStepMovesEachCoordinateByLr) {
  ParamSet p(ModelDims{0, 1, 1, 1});
  ParamSet g(p.dims());
  for (Eigen::Index i = 0; i < g.size(); ++i) g.values()[i] = (i % 2 ? -1.0 : 1.0) * (i + 1);
  AdamState s(p.size());
  adam_step(p, s, g, 0.1);
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p.values()[i], (i % 2 ? 0.1 : -0.1), 1e-7);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, MatchesHandComputedSecondStep) {
  ParamSet p(ModelDims{0, 1, 1, 1});
  AdamState s(p.size());
  ParamSet g(p.dims());
  g.values().setConstant(2.0);
  adam_step(p, s, g, 0.01);
  g.values().setConstant(-1.0);
  adam_step(p, s, g, 0.01);
  const double m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0, v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
  const double step2 = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  const double step1 = 0.01 * 2.0 / (2.0 + 1e-8);
  EXPECT_NEAR(p.values()[0], -step1 - step2, 1e-12);
}

TEST(Adam, RejectsNonFiniteGradient) {
  ParamSet p(ModelDims{0, 1, 1, 1});
  AdamState s(p.size());
  ParamSet g(p.dims());
  g.values()[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(p, s, g, 0.1), NonFiniteGradient);
}

TEST(LrSchedule, WarmupHoldDecay) {
  const LrSchedule s{1.0, 1000};
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_NEAR(lr_at(50, s), 0.5, 1e-12);
  EXPECT_EQ(lr_at(100, s), 1.0);
  EXPECT_EQ(lr_at(499, s), 1.0);
  EXPECT_NEAR(lr_at(750, s), 1.0 - 0.95 * 0.5, 1e-12);
  EXPECT_NEAR(lr_at(1000, s), 0.05, 1e-12);
  for (std::int64_t i = 500; i < 1000; ++i) EXPECT_GE(lr_at(i, s), lr_at(i + 1, s));
}

TEST(Ema, MatchesClosedFormGeometricSum) {
  std::mt19937_64 rng(4);
  const ModelDims d{0, 2, 2, 1};
  for (double alpha : {0.0, 0.3, 0.9, 0.999, 1.0}) {
    ParamSet ema = init_params(1, d);
    const Vector zeta0 = ema.values();
    std::vector<Vector> thetas;
    for (int i = 0; i < 50; ++i) {
      ParamSet student(d);
      student.values() = testing::random_matrix(1, d.param_count(), rng).transpose();
      thetas.push_back(student.values());
      ema_update(ema, student, alpha);
    }
    EXPECT_LT((ema.values() - oracle::ema_closed_form(zeta0, thetas, alpha)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Ema, AlphaFromRetention) {
  EXPECT_NEAR(ema_alpha_from_retention(30000, 0.3), 0.999960, 1e-6);
  EXPECT_NEAR(std::pow(ema_alpha_from_retention(3000, 0.3), 3000), 0.3, 1e-12);
  EXPECT_THROW(ema_alpha_from_retention(0, 0.3), InvalidArgument);
  ParamSet a(ModelDims{0, 1, 1, 1}), b(ModelDims{0, 1, 1, 1});
  EXPECT_THROW(ema_update(a, b, 1.5), AlphaOutOfRange);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  const ModelDims d{2, 3, 4, 5};
  Checkpoint ck{init_params(1, d), AdamState(d.param_count(), 0.8, 0.99, 1e-7), init_params(2, d), 1234};
  ck.optimizer.m.setRandom();
  ck.optimizer.v.setRandom();
  ck.optimizer.step = 77;
  const std::string bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.params.values(), ck.params.values());
  EXPECT_EQ(back.ema.values(), ck.ema.values());
  EXPECT_EQ(back.optimizer.step, 77);
  EXPECT_EQ(back.iteration, 1234u);
  EXPECT_EQ(back.params.dims(), d);

  testing::TempDir dir("ckpt");
  save_checkpoint(dir.path() / "a.ckpt", ck);
  EXPECT_EQ(io::read_file(dir.path() / "a.ckpt"), bytes);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IoError);
  EXPECT_THROW(decode_checkpoint("NOTACKPT" + bytes.substr(8)), IoError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
}

}  // namespace
}  // namespace censer
