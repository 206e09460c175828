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

#include "mrhubert/autodiff.hpp"
#include "mrhubert/config.hpp"

namespace mrhubert {

constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
};

/// Output length of one unpadded conv layer; nullopt when the input is shorter
/// than the kernel.
inline std::optional<std::size_t> ConvOutputLength(std::size_t n, std::size_t kernel, std::size_t stride) {
  if (n < kernel) return std::nullopt;
  return (n - kernel) / stride + 1;
}

/// Smallest sample count that yields one output frame.
inline std::size_t MinimumSamples(const ConvExtractorSpec& spec) {
  std::size_t need = 1;
  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) need = (need - 1) * it->stride + it->kernel;
  return need;
}

/// Closed-form frame count of the extractor.
inline std::size_t OutputLength(std::size_t n_samples, const ConvExtractorSpec& spec) {
  std::size_t n = n_samples;
  for (const auto& layer : spec.layers) {
    const auto next = ConvOutputLength(n, layer.kernel, layer.stride);
    if (!next)
      throw Error(ErrorKind::kSequenceTooShort, std::to_string(n_samples) + " samples; the extractor needs at least " +
                                                    std::to_string(MinimumSamples(spec)));
    n = *next;
  }
  return n;
}

/// Per-utterance standardization to zero mean and unit variance. Constant
/// signals are only centred.
inline std::vector<double> Standardize(const std::vector<float>& samples) {
  std::vector<double> out(samples.begin(), samples.end());
  if (out.empty()) return out;
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= double(out.size());
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  var /= double(out.size());
  const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : out) v = (v - mean) * scale;
  return out;
}

template <RealScalar Real>
struct FrontendParams {
  std::vector<Parameter<Real>> conv_weight;
  std::vector<Parameter<Real>> conv_bias;
  Parameter<Real> norm_gain;
  Parameter<Real> norm_bias;

  static FrontendParams Init(const ConvExtractorSpec& spec, std::mt19937_64& rng) {
    FrontendParams p;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      Tensor<Real> w({l.channels, cin, l.kernel});
      FillNormal(w, std::sqrt(2.0 / double(cin * l.kernel)), rng);
      p.conv_weight.emplace_back("frontend.conv" + std::to_string(i) + ".weight", std::move(w));
      if (spec.conv_bias)
        p.conv_bias.emplace_back("frontend.conv" + std::to_string(i) + ".bias", Tensor<Real>::Vector(l.channels));
      cin = l.channels;
    }
    const std::size_t c0 = spec.layers.front().channels;
    p.norm_gain = Parameter<Real>("frontend.norm.gain", Tensor<Real>::Vector(c0, Real(1)));
    p.norm_bias = Parameter<Real>("frontend.norm.bias", Tensor<Real>::Vector(c0));
    return p;
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    for (std::size_t i = 0; i < conv_weight.size(); ++i) {
      out.push_back(&conv_weight[i]);
      if (i < conv_bias.size()) out.push_back(&conv_bias[i]);
    }
    out.push_back(&norm_gain);
    out.push_back(&norm_bias);
  }
};

/// Conv stack with per-channel normalization after the first layer and GELU
/// after every layer. Returns (frames x channels).
template <RealScalar Real>
Var<Real> FrontendForward(Tape<Real>& tape, FrontendParams<Real>& p, const std::vector<double>& samples,
                          const ConvExtractorSpec& spec, bool trainable = true) {
  const std::size_t minimum = MinimumSamples(spec);
  if (samples.size() < minimum)
    throw Error(ErrorKind::kSequenceTooShort, std::to_string(samples.size()) +
                                                  " samples; the extractor needs at least " + std::to_string(minimum));
  Tensor<Real> wave = Tensor<Real>::Matrix(samples.size(), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) wave[i] = static_cast<Real>(samples[i]);
  auto leaf = [&](Parameter<Real>& param) { return trainable ? tape.Param(param) : tape.ConstantRef(param.value); };
  Var<Real> x = tape.Constant(std::move(wave));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Var<Real> w = leaf(p.conv_weight[i]);
    if (i < p.conv_bias.size()) {
      Var<Real> b = leaf(p.conv_bias[i]);
      x = ad::Conv1d(x, w, &b, spec.layers[i].stride);
    } else {
      x = ad::Conv1d<Real>(x, w, nullptr, spec.layers[i].stride);
    }
    if (i == 0) x = ad::ChannelNorm(x, leaf(p.norm_gain), leaf(p.norm_bias));
    x = ad::Gelu(x);
  }
  return x;
}

/// Convenience: waveform -> features (no gradient), with optional
/// standardization.
template <RealScalar Real>
Tensor<Real> Extract(FrontendParams<Real>& p, const Waveform& wave, const ConvExtractorSpec& spec, bool normalize) {
  if (wave.sample_rate != kSampleRate)
    throw Error(ErrorKind::kData, "sample rate " + std::to_string(wave.sample_rate) + " Hz; expected 16000");
  std::vector<double> samples = normalize ? Standardize(wave.samples)
                                          : std::vector<double>(wave.samples.begin(), wave.samples.end());
  Tape<Real> tape(false);
  return FrontendForward(tape, p, samples, spec).value();
}

}  // namespace mrhubert
