// Copyright 2026 The mrhubert Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once
#pragma once

#include <bit>
#include <cstring>
#include <fstream>

#include "mrhubert/model.hpp"

namespace mrhubert {

// Little-endian binary helpers shared by the checkpoint and feature
// containers.
namespace binio {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

template <class T>
void Put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void PutString(std::ostream& os, const std::string& s) {
  Put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <RealScalar Real>
void PutArray(std::ostream& os, const Tensor<Real>& t) {
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) Put<std::uint64_t>(os, d);
  std::vector<float> buf(t.storage().begin(), t.storage().end());
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

template <class T>
T Get(std::istream& is, const std::string& ctx) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(ErrorKind::kData, ctx + ": truncated file");
  return v;
}

inline std::string GetString(std::istream& is, const std::string& ctx, std::size_t limit = std::size_t{1} << 24) {
  const auto n = Get<std::uint64_t>(is, ctx);
  if (n > limit) throw Error(ErrorKind::kData, ctx + ": implausible string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw Error(ErrorKind::kData, ctx + ": truncated file");
  return s;
}

inline Tensor<float> GetArray(std::istream& is, const std::string& ctx) {
  const auto rank = Get<std::uint32_t>(is, ctx);
  if (rank > 8) throw Error(ErrorKind::kData, ctx + ": implausible rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = Get<std::uint64_t>(is, ctx);
    if (d > (std::size_t{1} << 32)) throw Error(ErrorKind::kData, ctx + ": implausible dimension");
    n *= d;
  }
  std::vector<float> values(n);
  if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float))))
    throw Error(ErrorKind::kData, ctx + ": truncated array");
  return Tensor<float>(shape, std::move(values));
}

}  // namespace binio

constexpr char kCheckpointMagic[8] = {'M', 'R', 'H', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  std::uint64_t cursor = 0;  // utterances consumed
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<Tensor<float>> first_moment;
  std::vector<Tensor<float>> second_moment;
};

inline void WriteCheckpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  binio::Put(os, kCheckpointVersion);
  binio::PutString(os, ck.config_text);
  binio::Put(os, ck.step);
  binio::Put(os, ck.cursor);
  binio::Put(os, ck.seed);
  binio::Put<std::uint64_t>(os, ck.params.size());
  for (const auto& [name, value] : ck.params) {
    binio::PutString(os, name);
    binio::PutArray(os, value);
  }
  binio::Put<std::uint8_t>(os, ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    binio::Put(os, ck.optimizer_step);
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      binio::PutArray(os, ck.first_moment.at(i));
      binio::PutArray(os, ck.second_moment.at(i));
    }
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing checkpoint " + path);
}

inline Checkpoint ReadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot read checkpoint " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error(ErrorKind::kData, path + ": not a checkpoint");
  const auto version = binio::Get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kData, path + ": checkpoint version " + std::to_string(version) + ", expected " +
                                      std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.config_text = binio::GetString(is, path);
  ck.step = binio::Get<std::uint64_t>(is, path);
  ck.cursor = binio::Get<std::uint64_t>(is, path);
  ck.seed = binio::Get<std::uint64_t>(is, path);
  const auto n = binio::Get<std::uint64_t>(is, path);
  if (n > 100000) throw Error(ErrorKind::kData, path + ": implausible parameter count");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = binio::GetString(is, path);
    ck.params.emplace_back(std::move(name), binio::GetArray(is, path));
  }
  ck.has_optimizer = binio::Get<std::uint8_t>(is, path) != 0;
  if (ck.has_optimizer) {
    ck.optimizer_step = binio::Get<std::uint64_t>(is, path);
    for (std::uint64_t i = 0; i < n; ++i) {
      ck.first_moment.push_back(binio::GetArray(is, path));
      ck.second_moment.push_back(binio::GetArray(is, path));
    }
  }
  return ck;
}

template <RealScalar Real>
std::vector<std::pair<std::string, Tensor<float>>> SnapshotParameters(MRModel<Real>& model) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (auto* p : model.Parameters()) out.emplace_back(p->name, p->value.template Cast<float>());
  return out;
}

/// Copies checkpoint values into a model built from the same config; names
/// and shapes must match exactly.
template <RealScalar Real>
void LoadParameters(MRModel<Real>& model, const Checkpoint& ck) {
  auto params = model.Parameters();
  if (params.size() != ck.params.size())
    throw Error(ErrorKind::kData, "checkpoint has " + std::to_string(ck.params.size()) + " arrays, model has " +
                                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ck.params[i];
    if (name != params[i]->name || value.shape() != params[i]->value.shape())
      throw Error(ErrorKind::kData, "checkpoint array '" + name + "' " + ShapeString(value.shape()) +
                                        " does not match model array '" + params[i]->name + "' " +
                                        ShapeString(params[i]->value.shape()));
    params[i]->value = value.template Cast<Real>();
  }
}

/// Rebuilds a model from a checkpoint's embedded config and parameters.
template <RealScalar Real>
MRModel<Real> ModelFromCheckpoint(const Checkpoint& ck) {
  MRModel<Real> model = MRModel<Real>::Init(ParseConfig(ck.config_text));
  LoadParameters(model, ck);
  return model;
}

}  // namespace mrhubert
