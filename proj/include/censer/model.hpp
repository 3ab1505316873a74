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
#include <random>
#include <string>

#include "censer/ctc.hpp"
#include "censer/types.hpp"

namespace censer {

/// Shape of the frame-wise acoustic model: each frame sees a window of
/// +/- `window` neighbours, one tanh hidden layer, and V+1 output classes.
struct ModelDims {
  int window = 2;
  int feat_dim = 16;
  int hidden = 64;
  int vocab = 8;

  int input_dim() const { return (2 * window + 1) * feat_dim; }
  int classes() const { return vocab + 1; }
  Eigen::Index param_count() const {
    return static_cast<Eigen::Index>(input_dim()) * hidden + hidden +
           static_cast<Eigen::Index>(hidden) * classes() + classes();
  }
  bool valid() const { return window >= 0 && feat_dim >= 1 && hidden >= 1 && vocab >= 1; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Flat parameter vector with matrix views. The same type holds student
/// weights, EMA weights and gradients.
class ParamSet {
 public:
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Eigen::RowVectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

  ParamSet() = default;
  explicit ParamSet(const ModelDims& dims) : dims_(dims), values_(Vector::Zero(dims.param_count())) {
    if (!dims.valid()) throw InvalidArgument("invalid model dimensions");
  }

  const ModelDims& dims() const { return dims_; }
  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  MatrixMap w1() { return {values_.data() + w1_offset(), dims_.input_dim(), dims_.hidden}; }
  ConstMatrixMap w1() const { return {values_.data() + w1_offset(), dims_.input_dim(), dims_.hidden}; }
  VectorMap b1() { return {values_.data() + b1_offset(), dims_.hidden}; }
  ConstVectorMap b1() const { return {values_.data() + b1_offset(), dims_.hidden}; }
  MatrixMap w2() { return {values_.data() + w2_offset(), dims_.hidden, dims_.classes()}; }
  ConstMatrixMap w2() const { return {values_.data() + w2_offset(), dims_.hidden, dims_.classes()}; }
  VectorMap b2() { return {values_.data() + b2_offset(), dims_.classes()}; }
  ConstVectorMap b2() const { return {values_.data() + b2_offset(), dims_.classes()}; }

  bool same_shape(const ParamSet& other) const { return dims_ == other.dims_ && size() == other.size(); }

 private:
  Eigen::Index w1_offset() const { return 0; }
  Eigen::Index b1_offset() const { return static_cast<Eigen::Index>(dims_.input_dim()) * dims_.hidden; }
  Eigen::Index w2_offset() const { return b1_offset() + dims_.hidden; }
  Eigen::Index b2_offset() const { return w2_offset() + static_cast<Eigen::Index>(dims_.hidden) * dims_.classes(); }

  ModelDims dims_;
  Vector values_;
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases.
inline ParamSet init_params(std::uint64_t seed, const ModelDims& dims) {
  ParamSet p(dims);
  std::mt19937_64 rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(dims.input_dim()));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  std::uniform_real_distribution<double> u1(-r1, r1), u2(-r2, r2);
  auto w1 = p.w1();
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = u1(rng);
  auto w2 = p.w2();
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = u2(rng);
  return p;
}

/// Intermediates kept from the forward pass for backprop.
struct ForwardCache {
  Matrix input;   // T x input_dim, windowed and zero padded
  Matrix hidden;  // T x H, post-tanh
  Matrix logits;  // T x (V+1)
};

inline Matrix window_features(const FeatureMatrix& feats, int window) {
  const auto T = feats.rows();
  const auto D = feats.cols();
  Matrix x = Matrix::Zero(T, (2 * window + 1) * D);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int o = -window; o <= window; ++o) {
      const Eigen::Index src = t + o;
      if (src < 0 || src >= T) continue;
      x.block(t, (o + window) * D, 1, D) = feats.row(src);
    }
  }
  return x;
}

inline ForwardCache forward_cached(const ParamSet& params, const FeatureMatrix& feats) {
  const auto& d = params.dims();
  if (feats.cols() != d.feat_dim)
    throw DimensionMismatch("features have " + std::to_string(feats.cols()) + " channels, model expects " +
                            std::to_string(d.feat_dim));
  if (feats.rows() < 1) throw DimensionMismatch("utterance has no frames");
  ForwardCache c;
  c.input = window_features(feats, d.window);
  c.hidden = ((c.input * params.w1()).rowwise() + params.b1()).array().tanh();
  c.logits = (c.hidden * params.w2()).rowwise() + params.b2();
  return c;
}

/// Per-frame log-posteriors over blank and the V tokens.
inline PosteriorMatrix forward(const ParamSet& params, const FeatureMatrix& feats) {
  return log_softmax(forward_cached(params, feats).logits);
}

/// Accumulates d loss / d params into `grad` given d loss / d logits.
inline void backward_accumulate(const ParamSet& params, const ForwardCache& cache, const Matrix& grad_logits,
                                ParamSet& grad) {
  if (grad_logits.rows() != cache.logits.rows() || grad_logits.cols() != cache.logits.cols())
    throw DimensionMismatch("grad_logits shape does not match the forward pass");
  if (!grad.same_shape(params)) throw DimensionMismatch("gradient buffer shape differs from parameters");
  grad.w2().noalias() += cache.hidden.transpose() * grad_logits;
  grad.b2() += grad_logits.colwise().sum();
  const Matrix dpre =
      ((grad_logits * params.w2().transpose()).array() * (1.0 - cache.hidden.array().square())).matrix();
  grad.w1().noalias() += cache.input.transpose() * dpre;
  grad.b1() += dpre.colwise().sum();
}

inline ParamSet backward(const ParamSet& params, const ForwardCache& cache, const Matrix& grad_logits) {
  ParamSet grad(params.dims());
  backward_accumulate(params, cache, grad_logits, grad);
  return grad;
}

inline ParamSet backward(const ParamSet& params, const FeatureMatrix& feats, const Matrix& grad_logits) {
  return backward(params, forward_cached(params, feats), grad_logits);
}

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index n, double b1 = 0.9, double b2 = 0.999, double e = 1e-8)
      : m(Vector::Zero(n)), v(Vector::Zero(n)), beta1(b1), beta2(b2), eps(e) {}
};

/// Bias-corrected Adam update in place.
inline void adam_step(ParamSet& params, AdamState& state, const ParamSet& grad, double lr) {
  if (!grad.same_shape(params) || state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionMismatch("adam_step shape mismatch");
  if (!grad.values().allFinite()) throw NonFiniteGradient("gradient contains NaN or inf");
  ++state.step;
  const auto& g = grad.values().array();
  state.m = state.beta1 * state.m.array() + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v.array() + (1.0 - state.beta2) * g.square();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.values().array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

/// Linear warmup to the peak, hold, then linear decay to floor_frac * peak.
struct LrSchedule {
  double peak_lr = 1e-3;
  std::int64_t total_iters = 1;
  double warmup_frac = 0.10;
  double decay_start_frac = 0.50;
  double floor_frac = 0.05;
};

inline double lr_at(std::int64_t iter, const LrSchedule& s) {
  const double total = static_cast<double>(s.total_iters);
  const double it = static_cast<double>(iter);
  const double warm_end = s.warmup_frac * total;
  const double decay_start = s.decay_start_frac * total;
  if (it < warm_end) return s.peak_lr * it / warm_end;
  if (it < decay_start) return s.peak_lr;
  const double frac = std::min(1.0, (it - decay_start) / (total - decay_start));
  return s.peak_lr * (1.0 - (1.0 - s.floor_frac) * frac);
}

/// zeta <- alpha * zeta + (1 - alpha) * theta
inline void ema_update(ParamSet& ema, const ParamSet& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw AlphaOutOfRange("alpha = " + std::to_string(alpha));
  if (!ema.same_shape(student)) throw DimensionMismatch("EMA and student shapes differ");
  ema.values() = alpha * ema.values() + (1.0 - alpha) * student.values();
}

/// Decay such that alpha^F == retention.
inline double ema_alpha_from_retention(std::int64_t F, double retention = 0.3) {
  if (F < 1) throw InvalidArgument("F must be >= 1");
  if (!(retention > 0.0 && retention < 1.0)) throw InvalidArgument("retention must be in (0, 1)");
  return std::pow(retention, 1.0 / static_cast<double>(F));
}

}  // namespace censer
