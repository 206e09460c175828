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

#include "mrhubert/model.hpp"
#include "mrhubert/quantizer.hpp"

namespace mrhubert {

struct ResolutionLoss {
  int resolution_ms = 20;
  double loss = 0.0;
  std::size_t masked_frames = 0;
  double masked_accuracy = 1.0;
  bool vacuous = false;  // empty mask: loss 0, accuracy 1 by convention
};

struct LossBreakdown {
  std::vector<ResolutionLoss> per_resolution;  // level order, highest resolution first
  std::vector<double> weights;
  double total = 0.0;
};

/// Cross-entropy over masked frames only.
template <RealScalar Real>
Var<Real> MaskedCE(Var<Real> logits, const std::vector<int>& targets, const MaskSet& mask, LossReduction reduction,
                   ResolutionLoss* report = nullptr) {
  if (mask.sequence_length != logits.rows())
    throw Error(ErrorKind::kShape, "mask over " + std::to_string(mask.sequence_length) + " frames for " +
                                       std::to_string(logits.rows()) + " logit rows");
  ad::CrossEntropyStats stats;
  Var<Real> loss = ad::MaskedCrossEntropy(
      logits, targets, mask.indices, reduction == LossReduction::kMean ? ad::Reduction::kMean : ad::Reduction::kSum,
      &stats);
  if (report) {
    report->resolution_ms = mask.resolution_ms;
    report->loss = stats.loss;
    report->masked_frames = stats.count;
    report->masked_accuracy = stats.accuracy();
    report->vacuous = stats.count == 0;
  }
  return loss;
}

/// Weighted sum of per-resolution losses.
inline double Combine(const std::vector<double>& losses, const std::vector<double>& weights) {
  if (losses.size() != weights.size())
    throw Error(ErrorKind::kShape, std::to_string(losses.size()) + " losses vs " + std::to_string(weights.size()) +
                                       " weights");
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0.0) throw Error(ErrorKind::kInvalidConfig, "negative loss weight");
    total += weights[i] * losses[i];
  }
  return total;
}

/// Full multi-resolution objective for one forward pass. `units` are the
/// highest-resolution targets, already aligned to the frontend length.
template <RealScalar Real>
Var<Real> PretrainLoss(const PretrainOutput<Real>& out, const std::vector<int>& units, const ModelConfig& cfg,
                       LossBreakdown* breakdown = nullptr) {
  const std::size_t N = cfg.num_resolutions();
  if (units.size() != out.lengths.at(0))
    throw Error(ErrorKind::kShape, std::to_string(units.size()) + " units for " + std::to_string(out.lengths[0]) +
                                       " frames");
  std::vector<Var<Real>> losses;
  LossBreakdown b;
  b.weights = cfg.loss_weights;
  for (std::size_t k = 0; k < N; ++k) {
    const std::vector<int> targets =
        k == 0 ? units : LevelTargets(units, cfg.resolutions_ms[0], cfg.resolutions_ms[k], out.lengths[k]);
    ResolutionLoss r;
    losses.push_back(MaskedCE(out.LevelLogits(k), targets, out.masks[k], cfg.loss_reduction, &r));
    r.resolution_ms = cfg.resolutions_ms[k];
    b.per_resolution.push_back(r);
  }
  Var<Real> total = ad::WeightedSum(losses, cfg.loss_weights);
  std::vector<double> values;
  for (const auto& r : b.per_resolution) values.push_back(r.loss);
  b.total = Combine(values, cfg.loss_weights);
  if (breakdown) *breakdown = b;
  return total;
}

}  // namespace mrhubert
