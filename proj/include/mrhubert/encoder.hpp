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

/// Per-forward settings shared by every module.
template <RealScalar Real>
struct ForwardContext {
  Tape<Real>* tape = nullptr;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when dropout > 0

  bool dropout_active() const { return dropout > 0.0 && rng != nullptr && tape->recording(); }
};

template <RealScalar Real>
Var<Real> Dropout(const ForwardContext<Real>& ctx, Var<Real> x) {
  if (!ctx.dropout_active()) return x;
  Tensor<Real> keep(x.value().shape());
  std::bernoulli_distribution bern(1.0 - ctx.dropout);
  const Real scale = static_cast<Real>(1.0 / (1.0 - ctx.dropout));
  for (auto& v : keep.storage()) v = bern(*ctx.rng) ? scale : Real(0);
  return ad::MulConstant(x, keep);
}

template <RealScalar Real>
struct LinearParams {
  Parameter<Real> weight;  // (in x out)
  Parameter<Real> bias;    // (out)

  static LinearParams Init(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                           double stddev = 0.02) {
    LinearParams p;
    Tensor<Real> w = Tensor<Real>::Matrix(in, out);
    FillTruncatedNormal(w, stddev, rng);
    p.weight = Parameter<Real>(name + ".weight", std::move(w));
    p.bias = Parameter<Real>(name + ".bias", Tensor<Real>::Vector(out));
    return p;
  }

  Var<Real> operator()(Tape<Real>& tape, Var<Real> x) {
    return ad::Affine(x, tape.Param(weight), tape.Param(bias));
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <RealScalar Real>
struct NormParams {
  Parameter<Real> gain;
  Parameter<Real> bias;

  static NormParams Init(const std::string& name, std::size_t dim) {
    return {Parameter<Real>(name + ".gain", Tensor<Real>::Vector(dim, Real(1))),
            Parameter<Real>(name + ".bias", Tensor<Real>::Vector(dim))};
  }

  Var<Real> operator()(Tape<Real>& tape, Var<Real> x) {
    return ad::LayerNorm(x, tape.Param(gain), tape.Param(bias));
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

template <RealScalar Real>
struct AttentionParams {
  LinearParams<Real> q, k, v, o;

  static AttentionParams Init(const std::string& name, std::size_t dim, std::mt19937_64& rng) {
    return {LinearParams<Real>::Init(name + ".q", dim, dim, rng), LinearParams<Real>::Init(name + ".k", dim, dim, rng),
            LinearParams<Real>::Init(name + ".v", dim, dim, rng), LinearParams<Real>::Init(name + ".o", dim, dim, rng)};
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    q.Collect(out);
    k.Collect(out);
    v.Collect(out);
    o.Collect(out);
  }
};

/// Bidirectional multi-head scaled dot-product attention followed by the
/// output projection.
template <RealScalar Real>
Var<Real> AttentionForward(Tape<Real>& tape, AttentionParams<Real>& p, Var<Real> x, std::size_t heads) {
  const auto& xv = x.value();
  RequireMatrix(xv, "attention input");
  if (xv.rows() == 0) throw Error(ErrorKind::kEmptySequence, "attention over an empty sequence");
  const std::size_t D = xv.cols();
  if (heads == 0 || D % heads != 0)
    throw Error(ErrorKind::kShape, "attention: width " + std::to_string(D) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  const std::size_t hd = D / heads;
  const Real scale = static_cast<Real>(1.0 / std::sqrt(double(hd)));
  Var<Real> q = p.q(tape, x);
  Var<Real> k = p.k(tape, x);
  Var<Real> v = p.v(tape, x);
  std::vector<Var<Real>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var<Real> qh = ad::SliceCols(q, h * hd, hd);
    Var<Real> kh = ad::SliceCols(k, h * hd, hd);
    Var<Real> vh = ad::SliceCols(v, h * hd, hd);
    Var<Real> scores = ad::Scale(ad::MatMulNT(qh, kh), scale);
    outs.push_back(ad::MatMul(ad::SoftmaxRows(scores), vh));
  }
  Var<Real> merged = heads == 1 ? outs.front() : ad::ConcatCols(outs);
  return p.o(tape, merged);
}

template <RealScalar Real>
struct TransformerLayerParams {
  NormParams<Real> attn_norm;
  AttentionParams<Real> attn;
  NormParams<Real> ffn_norm;
  LinearParams<Real> fc1;
  LinearParams<Real> fc2;

  static TransformerLayerParams Init(const std::string& name, std::size_t dim, std::size_t ffn, std::mt19937_64& rng) {
    TransformerLayerParams p;
    p.attn_norm = NormParams<Real>::Init(name + ".attn_norm", dim);
    p.attn = AttentionParams<Real>::Init(name + ".attn", dim, rng);
    p.ffn_norm = NormParams<Real>::Init(name + ".ffn_norm", dim);
    p.fc1 = LinearParams<Real>::Init(name + ".fc1", dim, ffn, rng);
    p.fc2 = LinearParams<Real>::Init(name + ".fc2", ffn, dim, rng);
    return p;
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    attn_norm.Collect(out);
    attn.Collect(out);
    ffn_norm.Collect(out);
    fc1.Collect(out);
    fc2.Collect(out);
  }
};

/// Pre-norm block: x + Attn(LN(x)), then + FFN(LN(.)).
template <RealScalar Real>
Var<Real> TransformerLayerForward(const ForwardContext<Real>& ctx, TransformerLayerParams<Real>& p, Var<Real> x,
                                  std::size_t heads) {
  Tape<Real>& tape = *ctx.tape;
  Var<Real> a = AttentionForward(tape, p.attn, p.attn_norm(tape, x), heads);
  Var<Real> h = ad::Add(x, Dropout(ctx, a));
  Var<Real> f = Dropout(ctx, ad::Gelu(p.fc1(tape, p.ffn_norm(tape, h))));
  return ad::Add(h, Dropout(ctx, p.fc2(tape, f)));
}

struct EncoderConfig {
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::size_t ffn_dim = 0;
  std::size_t heads = 1;
  bool has_pre_conv = false;
  std::size_t pre_conv_kernel = 128;
  std::size_t pre_conv_groups = 16;
};

template <RealScalar Real>
struct EncoderOutput {
  Var<Real> final;
  std::vector<Var<Real>> per_layer;
};

template <RealScalar Real>
struct EncoderParams {
  EncoderConfig config;
  Parameter<Real> pre_conv_weight;  // (D x D/groups x kernel)
  Parameter<Real> pre_conv_bias;
  NormParams<Real> pre_norm;
  std::vector<TransformerLayerParams<Real>> layers;
  NormParams<Real> final_norm;

  static EncoderParams Init(const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng) {
    EncoderParams p;
    p.config = cfg;
    if (cfg.has_pre_conv) {
      if (cfg.pre_conv_groups == 0 || cfg.dim % cfg.pre_conv_groups != 0)
        throw Error(ErrorKind::kInvalidConfig, "pre-conv groups must divide the width");
      Tensor<Real> w({cfg.dim, cfg.dim / cfg.pre_conv_groups, cfg.pre_conv_kernel});
      FillNormal(w, std::sqrt(4.0 / double(cfg.pre_conv_kernel * cfg.dim)), rng);
      p.pre_conv_weight = Parameter<Real>(name + ".pre_conv.weight", std::move(w));
      p.pre_conv_bias = Parameter<Real>(name + ".pre_conv.bias", Tensor<Real>::Vector(cfg.dim));
      p.pre_norm = NormParams<Real>::Init(name + ".pre_norm", cfg.dim);
    }
    for (std::size_t i = 0; i < cfg.num_layers; ++i)
      p.layers.push_back(
          TransformerLayerParams<Real>::Init(name + ".layer" + std::to_string(i), cfg.dim, cfg.ffn_dim, rng));
    if (cfg.num_layers > 0) p.final_norm = NormParams<Real>::Init(name + ".final_norm", cfg.dim);
    return p;
  }

  void Collect(std::vector<Parameter<Real>*>& out) {
    if (config.has_pre_conv) {
      out.push_back(&pre_conv_weight);
      out.push_back(&pre_conv_bias);
      pre_norm.Collect(out);
    }
    for (auto& l : layers) l.Collect(out);
    if (config.num_layers > 0) final_norm.Collect(out);
  }
};

/// Optional same-length grouped pre-conv (GELU output added to the input,
/// then layer norm), the transformer stack, and a final layer norm. The last
/// per-layer entry is the normalized final output.
template <RealScalar Real>
EncoderOutput<Real> EncoderForward(const ForwardContext<Real>& ctx, EncoderParams<Real>& p, Var<Real> x) {
  Tape<Real>& tape = *ctx.tape;
  const auto& cfg = p.config;
  if (x.value().rank() != 2 || x.rows() == 0) throw Error(ErrorKind::kEmptySequence, "encoder input is empty");
  if (x.cols() != cfg.dim)
    throw Error(ErrorKind::kShape, "encoder width " + std::to_string(cfg.dim) + " vs input " +
                                       ShapeString(x.value().shape()));
  if (cfg.has_pre_conv) {
    const std::size_t k = cfg.pre_conv_kernel;
    Var<Real> padded = ad::PadRows(x, k / 2, k - 1 - k / 2);
    Var<Real> bias = tape.Param(p.pre_conv_bias);
    Var<Real> conv = ad::Conv1d(padded, tape.Param(p.pre_conv_weight), &bias, 1, cfg.pre_conv_groups);
    x = p.pre_norm(tape, ad::Add(x, ad::Gelu(conv)));
  }
  EncoderOutput<Real> out;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    x = TransformerLayerForward(ctx, p.layers[i], x, cfg.heads);
    if (i + 1 == p.layers.size()) x = p.final_norm(tape, x);
    out.per_layer.push_back(x);
  }
  out.final = x;
  return out;
}

}  // namespace mrhubert
