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

#include <iostream>
#include <random>

#include "mrhubert/config.hpp"
#include "mrhubert/tensor.hpp"

namespace mrhubert {

inline bool& WarningsEnabled() {
  static bool enabled = true;
  return enabled;
}

inline void Warn(const std::string& message) {
  if (WarningsEnabled()) std::cerr << "warning: " << message << '\n';
}

/// Sorted, duplicate-free set of masked frame indices.
struct MaskSet {
  std::vector<std::size_t> indices;
  std::size_t sequence_length = 0;
  int resolution_ms = 20;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  bool contains(std::size_t i) const { return std::binary_search(indices.begin(), indices.end(), i); }

  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Number of span starts drawn for a sequence of length L.
inline std::size_t NumMaskStarts(std::size_t L, double mask_prob, std::size_t span) {
  if (span == 0 || L < span) return 0;
  const auto n = static_cast<std::size_t>(std::floor(mask_prob * double(L) / double(span)));
  return std::min(n, L - span + 1);
}

/// Draws floor(p*L/l) span starts uniformly without replacement from
/// [0, L-l]; the mask is the union of [s, s+l).
inline MaskSet SampleMask(std::size_t L, double mask_prob, std::size_t span, std::mt19937_64& rng,
                          int resolution_ms = 20) {
  if (L == 0) throw Error(ErrorKind::kEmptySequence, "cannot mask an empty sequence");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw Error(ErrorKind::kInvalidConfig, "mask_prob outside [0, 1]");
  if (span == 0) throw Error(ErrorKind::kInvalidConfig, "mask span must be positive");
  MaskSet mask{{}, L, resolution_ms};
  if (mask_prob > 0.0 && L < span) {
    Warn("sequence of " + std::to_string(L) + " frames is shorter than the mask span " + std::to_string(span) +
         "; no frames masked");
    return mask;
  }
  const std::size_t starts = NumMaskStarts(L, mask_prob, span);
  if (starts == 0) return mask;
  std::vector<std::size_t> candidates(L - span + 1);
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < starts; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  std::vector<char> hit(L, 0);
  for (std::size_t i = 0; i < starts; ++i)
    for (std::size_t t = 0; t < span; ++t) hit[candidates[i] + t] = 1;
  for (std::size_t i = 0; i < L; ++i)
    if (hit[i]) mask.indices.push_back(i);
  return mask;
}

/// Masked rows become exactly zero; other rows are copied unchanged.
template <RealScalar Real>
Tensor<Real> ApplyMask(const Tensor<Real>& features, const MaskSet& mask) {
  RequireMatrix(features, "apply_mask");
  if (mask.sequence_length != features.rows())
    throw Error(ErrorKind::kShape, "mask over " + std::to_string(mask.sequence_length) + " frames applied to " +
                                       ShapeString(features.shape()));
  Tensor<Real> out = features;
  for (std::size_t i : mask.indices) std::fill(out.row(i).begin(), out.row(i).end(), Real(0));
  return out;
}

/// Mask at a coarser resolution. High-res frame i lands in low-res frame
/// floor(i*up/down). Under the any-overlap rule a low frame is masked if it
/// covers at least one masked high frame; under all-overlap, only if every
/// high frame it covers is masked.
inline MaskSet ProjectMask(const MaskSet& mask, RateFactors factors, std::size_t low_length,
                           LowMaskRule rule = LowMaskRule::kAnyOverlap, int low_resolution_ms = 0) {
  MaskSet out{{}, low_length, low_resolution_ms};
  if (low_length == 0) return out;
  auto target = [&](std::size_t i) { return std::min(i * factors.up / factors.down, low_length - 1); };
  std::vector<char> hit(low_length, 0);
  if (rule == LowMaskRule::kAnyOverlap) {
    for (std::size_t i : mask.indices) hit[target(i)] = 1;
  } else {
    std::vector<std::size_t> covered(low_length, 0), masked(low_length, 0);
    for (std::size_t i = 0; i < mask.sequence_length; ++i) ++covered[target(i)];
    for (std::size_t i : mask.indices) ++masked[target(i)];
    for (std::size_t j = 0; j < low_length; ++j) hit[j] = covered[j] > 0 && masked[j] == covered[j];
  }
  for (std::size_t j = 0; j < low_length; ++j)
    if (hit[j]) out.indices.push_back(j);
  return out;
}

}  // namespace mrhubert
