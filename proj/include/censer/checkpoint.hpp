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
#include <filesystem>
#include <string>

#include "censer/io.hpp"
#include "censer/model.hpp"

namespace censer {

/// Student weights, optimizer state and EMA weights at one point of a run.
///
/// On disk: "CENSERCK", u32 version, u32 window, u32 feat_dim, u32 hidden,
/// u32 vocab, u64 optimizer step, u64 training iteration, f64 beta1, f64
/// beta2, f64 eps, u64 parameter count, then the parameter vector, Adam
/// first moments, Adam second moments and EMA vector as little-endian f64.
struct Checkpoint {
  ParamSet params;
  AdamState optimizer;
  ParamSet ema;
  std::uint64_t iteration = 0;
};

inline constexpr std::string_view kCheckpointMagic = "CENSERCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const Checkpoint& ck) {
  const auto& d = ck.params.dims();
  const auto n = ck.params.size();
  if (ck.optimizer.m.size() != n || ck.optimizer.v.size() != n || !ck.ema.same_shape(ck.params))
    throw DimensionMismatch("checkpoint components disagree in size");
  io::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(d.window));
  w.u32(static_cast<std::uint32_t>(d.feat_dim));
  w.u32(static_cast<std::uint32_t>(d.hidden));
  w.u32(static_cast<std::uint32_t>(d.vocab));
  w.u64(static_cast<std::uint64_t>(ck.optimizer.step));
  w.u64(ck.iteration);
  w.f64(ck.optimizer.beta1);
  w.f64(ck.optimizer.beta2);
  w.f64(ck.optimizer.eps);
  w.u64(static_cast<std::uint64_t>(n));
  for (const Vector* v : {&ck.params.values(), &ck.optimizer.m, &ck.optimizer.v, &ck.ema.values()})
    for (Eigen::Index i = 0; i < n; ++i) w.f64((*v)[i]);
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < kCheckpointMagic.size() || r.raw(kCheckpointMagic.size()) != kCheckpointMagic)
    throw IoError("not a checkpoint (bad magic)");
  if (const auto version = r.u32(); version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  ModelDims d;
  d.window = static_cast<int>(r.u32());
  d.feat_dim = static_cast<int>(r.u32());
  d.hidden = static_cast<int>(r.u32());
  d.vocab = static_cast<int>(r.u32());
  if (!d.valid()) throw IoError("checkpoint has invalid model dimensions");
  Checkpoint ck;
  ck.params = ParamSet(d);
  ck.ema = ParamSet(d);
  const auto step = r.u64();
  ck.iteration = r.u64();
  const double b1 = r.f64(), b2 = r.f64(), eps = r.f64();
  const auto n = static_cast<Eigen::Index>(r.u64());
  if (n != d.param_count()) throw IoError("checkpoint parameter count does not match its dimensions");
  ck.optimizer = AdamState(n, b1, b2, eps);
  ck.optimizer.step = static_cast<std::int64_t>(step);
  for (Vector* v : {&ck.params.values(), &ck.optimizer.m, &ck.optimizer.v, &ck.ema.values()})
    for (Eigen::Index i = 0; i < n; ++i) (*v)[i] = r.f64();
  if (r.remaining() != 0) throw IoError("trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace censer
