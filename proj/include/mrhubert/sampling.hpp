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

#include <optional>

#include "mrhubert/autodiff.hpp"
#include "mrhubert/config.hpp"

namespace mrhubert {

enum class SamplingDirection { kDown, kUp };

/// Rows 0, factor, 2*factor, ... of x.
template <RealScalar Real>
Tensor<Real> SkipResample(const Tensor<Real>& x, std::size_t factor) {
  Tape<Real> tape(false);
  return ad::SkipRows(tape.ConstantRef(x), factor).value();
}

/// Each row of x repeated `factor` consecutive times.
template <RealScalar Real>
Tensor<Real> RepeatUpsample(const Tensor<Real>& x, std::size_t factor) {
  Tape<Real> tape(false);
  return ad::RepeatRows(tape.ConstantRef(x), factor).value();
}

/// (up, down) actually applied for a direction: the high->low factors for
/// down, swapped for up.
inline RateFactors EffectiveFactors(RateFactors high_to_low, SamplingDirection dir) {
  return dir == SamplingDirection::kDown ? high_to_low : high_to_low.Swapped();
}

/// Output length before any target-length adjustment: ceil(L*u/d).
inline std::size_t ResampledLength(std::size_t L, RateFactors high_to_low, SamplingDirection dir) {
  const RateFactors f = EffectiveFactors(high_to_low, dir);
  return CeilDiv(L * f.up, f.down);
}

template <RealScalar Real>
struct SamplerParams {
  RateFactors factors;  // high -> low, regardless of direction
  SamplingDirection direction = SamplingDirection::kDown;
  SamplingVariant variant = SamplingVariant::kFlexible;
  double phi = 0.5;
  bool has_conv = false;
  bool has_deconv = false;
  Parameter<Real> conv_weight;    // (D x D x 1)
  Parameter<Real> conv_bias;
  Parameter<Real> deconv_weight;  // (D x D x 1)
  Parameter<Real> deconv_bias;

  static SamplerParams Init(const std::string& name, std::size_t dim, RateFactors factors, SamplingDirection dir,
                            SamplingVariant variant, double phi, std::mt19937_64& rng) {
    SamplerParams p;
    p.factors = factors;
    p.direction = dir;
    p.variant = variant;
    p.phi = phi;
    const RateFactors f = EffectiveFactors(factors, dir);
    if (variant == SamplingVariant::kSimple && f.up > 1 && f.down > 1)
      throw Error(ErrorKind::kUnsupportedRatio, "simple sampling cannot realize " + std::to_string(factors.up) + "/" +
                                                    std::to_string(factors.down));
    if (variant == SamplingVariant::kFlexible) {
      p.has_conv = p.has_deconv = true;
    } else {
      p.has_conv = dir == SamplingDirection::kDown;
      p.has_deconv = dir == SamplingDirection::kUp;
    }
    auto make = [&](const std::string& part) {
      Tensor<Real> w({dim, dim, 1});
      FillTruncatedNormal(w, 0.02, rng);
      return std::pair{Parameter<Real>(name + "." + part + ".weight", std::move(w)),
                       Parameter<Real>(name + "." + part + ".bias", Tensor<Real>::Vector(dim))};
    };
    if (p.has_conv) std::tie(p.conv_weight, p.conv_bias) = make("conv");
    if (p.has_deconv) std::tie(p.deconv_weight, p.deconv_bias) = make("deconv");
    return p;
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    if (has_conv) {
      out.push_back(&conv_weight);
      out.push_back(&conv_bias);
    }
    if (has_deconv) {
      out.push_back(&deconv_weight);
      out.push_back(&deconv_bias);
    }
  }
};

/// Residual resampler.
///   flexible: phi * [Skip_d(Repeat_u(x)) + phi * (Conv_d(x_up) + Skip_d(x_up))],
///             x_up = DeConv_u(x) zero-padded to L*u rows
///   simple:   down phi * (Conv_d(x) + Skip_d(x)); up phi * (DeConv_u(x) + Repeat_u(x))
/// The result is truncated or zero-padded to target_len when given.
template <RealScalar Real>
Var<Real> ResampleForward(Tape<Real>& tape, SamplerParams<Real>& p, Var<Real> x,
                          std::optional<std::size_t> target_len = std::nullopt) {
  RequireMatrix(x.value(), "resample input");
  const std::size_t L = x.rows();
  if (L == 0) throw Error(ErrorKind::kEmptySequence, "resampling an empty sequence");
  const RateFactors f = EffectiveFactors(p.factors, p.direction);
  const Real phi = static_cast<Real>(p.phi);

  auto deconv = [&](Var<Real> in) {
    Var<Real> b = tape.Param(p.deconv_bias);
    return ad::ResizeRows(ad::TransposedConv1d(in, tape.Param(p.deconv_weight), &b, f.up), in.rows() * f.up);
  };
  auto conv = [&](Var<Real> in) {
    Var<Real> b = tape.Param(p.conv_bias);
    return ad::Conv1d(in, tape.Param(p.conv_weight), &b, f.down);
  };

  Var<Real> out;
  if (p.variant == SamplingVariant::kFlexible) {
    Var<Real> outer = ad::SkipRows(ad::RepeatRows(x, f.up), f.down);
    Var<Real> x_up = deconv(x);
    Var<Real> inner = ad::Add(conv(x_up), ad::SkipRows(x_up, f.down));
    out = ad::Scale(ad::Add(outer, ad::Scale(inner, phi)), phi);
  } else {
    if (f.up > 1 && f.down > 1)
      throw Error(ErrorKind::kUnsupportedRatio, "simple sampling with up " + std::to_string(f.up) + " and down " +
                                                    std::to_string(f.down));
    if (p.direction == SamplingDirection::kDown)
      out = ad::Scale(ad::Add(conv(x), ad::SkipRows(x, f.down)), phi);
    else
      out = ad::Scale(ad::Add(deconv(x), ad::RepeatRows(x, f.up)), phi);
  }
  if (target_len) out = ad::ResizeRows(out, *target_len);
  return out;
}

}  // namespace mrhubert
