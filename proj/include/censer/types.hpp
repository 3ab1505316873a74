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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace censer {

/// Row-major dense matrix used for features, logits and gradients.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// T frames x D channels.
using FeatureMatrix = Matrix;

using TokenId = std::int32_t;

/// Token ids in [1, V]. Id 0 is the CTC blank and never appears here.
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kBlank = 0;

// Stands in for log(0). Finite so that sums of several sentinels stay
// finite and log-sum-exp never sees inf - inf.
inline constexpr double kLogZero = -1.0e30;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CENSER_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(#Name ": " + what) {}        \
  }

CENSER_DEFINE_ERROR(InfeasibleTarget);
CENSER_DEFINE_ERROR(NonFiniteInput);
CENSER_DEFINE_ERROR(NegativeLambda);
CENSER_DEFINE_ERROR(EmptyReference);
CENSER_DEFINE_ERROR(InvalidStageCount);
CENSER_DEFINE_ERROR(IterOutOfRange);
CENSER_DEFINE_ERROR(EmptyCorpus);
CENSER_DEFINE_ERROR(DimensionMismatch);
CENSER_DEFINE_ERROR(NonFiniteGradient);
CENSER_DEFINE_ERROR(AlphaOutOfRange);
CENSER_DEFINE_ERROR(IoError);
CENSER_DEFINE_ERROR(PrototypeRejectionExceeded);
CENSER_DEFINE_ERROR(CorruptManifest);
CENSER_DEFINE_ERROR(ChecksumMismatch);
CENSER_DEFINE_ERROR(DivergenceDetected);
CENSER_DEFINE_ERROR(ConfigValidation);
CENSER_DEFINE_ERROR(InvalidArgument);

#undef CENSER_DEFINE_ERROR

}  // namespace censer
