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

#include <map>

#include "mrhubert/encoder.hpp"
#include "mrhubert/frontend.hpp"
#include "mrhubert/masking.hpp"
#include "mrhubert/sampling.hpp"

namespace mrhubert {

/// Affine prediction head, optionally factored through head_dim.
template <RealScalar Real>
struct HeadParams {
  bool factored = false;
  LinearParams<Real> hidden;  // D -> head_dim
  LinearParams<Real> out;     // head_dim (or D) -> K

  static HeadParams Init(const std::string& name, std::size_t dim, std::size_t head_dim, std::size_t K,
                         std::mt19937_64& rng) {
    HeadParams h;
    h.factored = head_dim > 0;
    if (h.factored) {
      h.hidden = LinearParams<Real>::Init(name + ".proj", dim, head_dim, rng);
      h.out = LinearParams<Real>::Init(name + ".out", head_dim, K, rng);
    } else {
      h.out = LinearParams<Real>::Init(name + ".out", dim, K, rng);
    }
    return h;
  }

  Var<Real> operator()(Tape<Real>& tape, Var<Real> x) { return out(tape, factored ? hidden(tape, x) : x); }

  void Collect(std::vector<Parameter<Real>*>& v) {
    if (factored) hidden.Collect(v);
    out.Collect(v);
  }
};

template <RealScalar Real>
struct HiddenState {
  std::string name;
  int resolution_ms = 20;
  Var<Real> value;
};

template <RealScalar Real>
struct PretrainOutput {
  std::vector<Var<Real>> logits;  // low -> high resolution, as emitted
  std::vector<int> logits_resolution_ms;
  std::vector<HiddenState<Real>> hidden_states;
  std::vector<MaskSet> masks;  // indexed by level, 0 = highest resolution
  std::vector<std::size_t> lengths;  // frames per level

  /// Logits of level k (0 = highest resolution).
  Var<Real> LevelLogits(std::size_t k) const { return logits.at(logits.size() - 1 - k); }
};

template <RealScalar Real>
struct NamedArray {
  std::string name;
  int resolution_ms = 20;
  Tensor<Real> value;
};

template <RealScalar Real>
class MRModel {
 public:
  ModelConfig config;
  FrontendParams<Real> frontend;
  Parameter<Real> mask_embedding;  // only with MaskFill::kLearned
  NormParams<Real> feature_norm;
  LinearParams<Real> feature_proj;
  std::vector<EncoderParams<Real>> encoders;  // 2N-1, descent then bottleneck then ascent
  std::vector<SamplerParams<Real>> down;      // N-1
  std::vector<SamplerParams<Real>> up;        // N-1, indexed by the level they return to
  std::vector<HeadParams<Real>> heads;        // N, indexed by level

  static MRModel Init(const ModelConfig& cfg) {
    const auto problems = Validate(cfg);
    if (!problems.empty()) throw Error(ErrorKind::kInvalidConfig, JoinList(problems, "; "));
    MRModel m;
    m.config = cfg;
    std::mt19937_64 rng(cfg.seed);
    const std::size_t N = cfg.num_resolutions(), D = cfg.attention_dim, C = cfg.frontend.OutputChannels();
    m.frontend = FrontendParams<Real>::Init(cfg.frontend, rng);
    if (cfg.mask_fill == MaskFill::kLearned) {
      Tensor<Real> e = Tensor<Real>::Vector(C);
      FillUniform(e, 0.0, 1.0, rng);
      m.mask_embedding = Parameter<Real>("mask_embedding", std::move(e));
    }
    m.feature_norm = NormParams<Real>::Init("feature_norm", C);
    m.feature_proj = LinearParams<Real>::Init("feature_proj", C, D, rng);
    for (std::size_t e = 0; e < cfg.num_encoders(); ++e) {
      EncoderConfig ec;
      ec.num_layers = static_cast<std::size_t>(cfg.layers_per_encoder[e]);
      ec.dim = D;
      ec.ffn_dim = cfg.ffn_dim;
      ec.heads = cfg.num_heads;
      ec.has_pre_conv = e == 0 && cfg.pre_conv_kernel > 0;
      ec.pre_conv_kernel = cfg.pre_conv_kernel;
      ec.pre_conv_groups = cfg.pre_conv_groups;
      m.encoders.push_back(EncoderParams<Real>::Init("encoder" + std::to_string(e), ec, rng));
    }
    for (std::size_t i = 0; i + 1 < N; ++i)
      m.down.push_back(SamplerParams<Real>::Init("down" + std::to_string(i), D, cfg.StepFactors(i),
                                                 SamplingDirection::kDown, cfg.sampling_variant, cfg.phi, rng));
    for (std::size_t i = 0; i + 1 < N; ++i)
      m.up.push_back(SamplerParams<Real>::Init("up" + std::to_string(i), D, cfg.StepFactors(i),
                                               SamplingDirection::kUp, cfg.sampling_variant, cfg.phi, rng));
    for (std::size_t k = 0; k < N; ++k)
      m.heads.push_back(
          HeadParams<Real>::Init("head" + std::to_string(k), D, cfg.head_dim, cfg.codebook_size, rng));
    return m;
  }

  /// Every learnable array in a fixed order (the checkpoint order).
  std::vector<Parameter<Real>*> Parameters() {
    std::vector<Parameter<Real>*> v;
    frontend.Collect(v);
    if (config.mask_fill == MaskFill::kLearned) v.push_back(&mask_embedding);
    feature_norm.Collect(v);
    feature_proj.Collect(v);
    for (auto& e : encoders) e.Collect(v);
    for (auto& s : down) s.Collect(v);
    for (auto& s : up) s.Collect(v);
    for (auto& h : heads) h.Collect(v);
    return v;
  }

  /// Parameters updated by the optimizer (excludes a frozen frontend).
  std::vector<Parameter<Real>*> TrainableParameters() {
    auto all = Parameters();
    if (!config.freeze_frontend) return all;
    std::vector<Parameter<Real>*> frozen;
    frontend.Collect(frozen);
    std::erase_if(all, [&](Parameter<Real>* p) { return std::find(frozen.begin(), frozen.end(), p) != frozen.end(); });
    return all;
  }

  std::size_t NumParameters() {
    std::size_t n = 0;
    for (auto* p : Parameters()) n += p->value.size();
    return n;
  }

  /// Frame counts per level for a given number of samples.
  std::vector<std::size_t> LevelLengths(std::size_t n_samples) const {
    std::vector<std::size_t> lengths{OutputLength(n_samples, config.frontend)};
    for (std::size_t i = 0; i + 1 < config.num_resolutions(); ++i)
      lengths.push_back(ResampledLength(lengths.back(), config.StepFactors(i), SamplingDirection::kDown));
    return lengths;
  }

  struct ForwardOptions {
    bool apply_mask = true;
    const MaskSet* mask = nullptr;  // overrides sampling when set
    bool include_frontend_state = false;
  };

  /// Frontend, mask, hourglass encoder stack and heads.
  PretrainOutput<Real> Forward(const ForwardContext<Real>& ctx, const Waveform& wave, std::mt19937_64& rng,
                               const ForwardOptions& opt) {
    Tape<Real>& tape = *ctx.tape;
    if (wave.sample_rate != kSampleRate)
      throw Error(ErrorKind::kData, "sample rate " + std::to_string(wave.sample_rate) + " Hz; expected 16000");
    const std::size_t N = config.num_resolutions();
    const auto& res = config.resolutions_ms;
    std::vector<double> samples = config.audio_norm ? Standardize(wave.samples)
                                                    : std::vector<double>(wave.samples.begin(), wave.samples.end());
    PretrainOutput<Real> out;
    Var<Real> feats = FrontendForward(tape, frontend, samples, config.frontend, !config.freeze_frontend);
    const std::size_t L = feats.rows();
    if (opt.include_frontend_state) out.hidden_states.push_back({"frontend", res[0], feats});

    MaskSet mask{{}, L, res[0]};
    if (opt.mask) {
      if (opt.mask->sequence_length != L)
        throw Error(ErrorKind::kShape, "mask over " + std::to_string(opt.mask->sequence_length) + " frames for " +
                                           std::to_string(L) + " frames");
      mask = *opt.mask;
    } else if (opt.apply_mask) {
      mask = SampleMask(L, config.mask_prob, config.mask_span, rng, res[0]);
    }
    Var<Real> masked = feats;
    if (!mask.empty()) {
      if (config.mask_fill == MaskFill::kLearned) {
        Var<Real> fill = tape.Param(mask_embedding);
        masked = ad::ReplaceRows(feats, mask.indices, &fill);
      } else {
        masked = ad::ReplaceRows<Real>(feats, mask.indices);
      }
    }
    Var<Real> x = feature_proj(tape, feature_norm(tape, masked));

    out.lengths.push_back(L);
    out.masks.push_back(mask);
    std::vector<Var<Real>> skips;
    auto run_encoder = [&](std::size_t e, Var<Real> in, int r) {
      EncoderOutput<Real> eo = EncoderForward(ctx, encoders[e], in);
      for (std::size_t l = 0; l < eo.per_layer.size(); ++l)
        out.hidden_states.push_back({"encoder" + std::to_string(e) + ".layer" + std::to_string(l), r, eo.per_layer[l]});
      return eo.final;
    };

    for (std::size_t i = 0; i + 1 < N; ++i) {
      Var<Real> h = run_encoder(i, x, res[i]);
      skips.push_back(h);
      x = ResampleForward(tape, down[i], h);
      out.hidden_states.push_back({"down" + std::to_string(i), res[i + 1], x});
      out.lengths.push_back(x.rows());
      const RateFactors cum = ReducedFraction(res[0], res[i + 1]);
      out.masks.push_back(ProjectMask(mask, cum, x.rows(), config.low_mask_rule, res[i + 1]));
    }
    x = run_encoder(N - 1, x, res[N - 1]);
    out.logits.push_back(heads[N - 1](tape, x));
    out.logits_resolution_ms.push_back(res[N - 1]);
    for (std::size_t step = 0; step + 1 < N; ++step) {
      const std::size_t level = N - 2 - step;
      Var<Real> u = ResampleForward(tape, up[level], x, skips[level].rows());
      out.hidden_states.push_back({"up" + std::to_string(level), res[level], u});
      x = run_encoder(N + step, ad::Add(u, skips[level]), res[level]);
      out.logits.push_back(heads[level](tape, x));
      out.logits_resolution_ms.push_back(res[level]);
    }
    return out;
  }

  /// Unmasked, dropout-free pass returning every state as a plain array.
  std::vector<NamedArray<Real>> ExtractFeatures(const Waveform& wave, bool include_frontend = false) {
    if (wave.samples.empty()) throw Error(ErrorKind::kEmptySequence, "empty waveform");
    Tape<Real> tape(false);
    ForwardContext<Real> ctx{&tape, 0.0, nullptr};
    std::mt19937_64 unused(0);
    ForwardOptions opt;
    opt.apply_mask = false;
    opt.include_frontend_state = include_frontend;
    PretrainOutput<Real> o = Forward(ctx, wave, unused, opt);
    std::vector<NamedArray<Real>> states;
    for (const auto& s : o.hidden_states) states.push_back({s.name, s.resolution_ms, s.value.value()});
    return states;
  }
};

/// Closed-form learnable-scalar inventory by submodule.
inline std::map<std::string, std::size_t> ParamCount(const ModelConfig& c) {
  const auto problems = Validate(c);
  if (!problems.empty()) throw Error(ErrorKind::kInvalidConfig, JoinList(problems, "; "));
  std::map<std::string, std::size_t> n;
  const std::size_t D = c.attention_dim, F = c.ffn_dim, K = c.codebook_size, C = c.frontend.OutputChannels();
  std::size_t fe = 0, cin = 1;
  for (const auto& l : c.frontend.layers) {
    fe += l.channels * cin * l.kernel + (c.frontend.conv_bias ? l.channels : 0);
    cin = l.channels;
  }
  fe += 2 * c.frontend.layers.front().channels;
  n["frontend"] = fe;
  n["feature_projection"] = 2 * C + C * D + D + (c.mask_fill == MaskFill::kLearned ? C : 0);
  const std::size_t layer = 2 * D + 4 * (D * D + D) + 2 * D + (D * F + F) + (F * D + D);
  std::size_t enc = 0;
  for (std::size_t e = 0; e < c.num_encoders(); ++e) enc += layer * std::size_t(c.layers_per_encoder[e]) + 2 * D;
  n["encoders"] = enc;
  if (c.pre_conv_kernel > 0) n["pre_conv"] = D * (D / c.pre_conv_groups) * c.pre_conv_kernel + D + 2 * D;
  const std::size_t per_sampler_conv = D * D + D;
  const std::size_t pairs = c.num_resolutions() - 1;
  n["samplers"] = pairs * per_sampler_conv * (c.sampling_variant == SamplingVariant::kFlexible ? 4 : 2);
  const std::size_t head = c.head_dim > 0 ? (D * c.head_dim + c.head_dim + c.head_dim * K + K) : (D * K + K);
  n["heads"] = c.num_resolutions() * head;
  std::size_t total = 0;
  for (const auto& [k, v] : n) total += v;
  n["total"] = total;
  return n;
}

}  // namespace mrhubert
