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


#include <gtest/gtest.h>

#include <cmath>

#include "mrhubert/encoder.hpp"
#include "test_util.hpp"

namespace mrhubert {
namespace {

using testing::RandomMatrix;

void Randomize(std::vector<Parameter<double>*> params, std::mt19937_64& rng, double scale = 0.4) {
  for (auto* p : params) {
    Tensor<double> n(p->value.shape());
    FillNormal(n, scale, rng);
    for (std::size_t i = 0; i < n.size(); ++i) p->value[i] += n[i];
  }
}

// ---- straight-line oracle ------------------------------------------------

using Mat = std::vector<std::vector<double>>;

Mat ToMat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Mat Lin(const Mat& x, const LinearParams<double>& p) {
  const std::size_t out = p.weight.value.cols();
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < out; ++j) {
      double s = p.bias.value[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * p.weight.value(k, j);
      y[i][j] = s;
    }
  return y;
}

Mat Norm(const Mat& x, const NormParams<double>& p) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = double(x[i].size());
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v / n;
    for (double v : x[i]) var += (v - mean) * (v - mean) / n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      y[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * p.gain.value[j] + p.bias.value[j];
  }
  return y;
}

Mat Plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat OracleLayer(const Mat& x, const TransformerLayerParams<double>& p, std::size_t heads) {
  const std::size_t L = x.size(), D = x[0].size(), hd = D / heads;
  const Mat n = Norm(x, p.attn_norm);
  const Mat q = Lin(n, p.attn.q), k = Lin(n, p.attn.k), v = Lin(n, p.attn.v);
  Mat ctx(L, std::vector<double>(D, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> w(L);
      double z = 0;
      for (std::size_t j = 0; j < L; ++j) {
        double s = 0;
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) s += q[i][c] * k[j][c];
        w[j] = std::exp(s / std::sqrt(double(hd)));
        z += w[j];
      }
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) ctx[i][c] += w[j] / z * v[j][c];
    }
  const Mat h1 = Plus(x, Lin(ctx, p.attn.o));
  Mat f = Lin(Norm(h1, p.ffn_norm), p.fc1);
  for (auto& row : f)
    for (double& e : row) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
  return Plus(h1, Lin(f, p.fc2));
}

// --------------------------------------------------------------------------

TEST(TransformerLayer, MatchesStraightLineOracle) {
  std::mt19937_64 rng(1);
  auto layer = TransformerLayerParams<double>::Init("l", 8, 16, rng);
  std::vector<Parameter<double>*> params;
  layer.Collect(params);
  Randomize(params, rng);
  const Tensor<double> x = RandomMatrix(4, 8, rng);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  const auto y = TransformerLayerForward(ctx, layer, tape.Constant(x), 2).value();
  const Mat oracle = OracleLayer(ToMat(x), layer, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(y(i, j), oracle[i][j], 1e-12);
}

TEST(TransformerLayer, ZeroOutputProjectionsGiveIdentity) {
  std::mt19937_64 rng(2);
  auto layer = TransformerLayerParams<double>::Init("l", 8, 16, rng);
  for (auto* p : {&layer.attn.o.weight, &layer.attn.o.bias, &layer.fc2.weight, &layer.fc2.bias}) p->value.Fill(0.0);
  const Tensor<double> x = RandomMatrix(5, 8, rng);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  EXPECT_EQ(TransformerLayerForward(ctx, layer, tape.Constant(x), 4).value(), x);
}

TEST(TransformerLayer, PermutationEquivariant) {
  std::mt19937_64 rng(3);
  auto layer = TransformerLayerParams<double>::Init("l", 8, 16, rng);
  std::vector<Parameter<double>*> params;
  layer.Collect(params);
  Randomize(params, rng);
  const Tensor<double> x = RandomMatrix(6, 8, rng);
  const std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  Tensor<double> xp = x;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 8; ++c) xp(i, c) = x(perm[i], c);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  const auto y = TransformerLayerForward(ctx, layer, tape.Constant(x), 2).value();
  const auto yp = TransformerLayerForward(ctx, layer, tape.Constant(xp), 2).value();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp(i, c), y(perm[i], c), 1e-12);
}

TEST(Encoder, EmptyStackIsIdentity) {
  std::mt19937_64 rng(4);
  auto enc = EncoderParams<double>::Init("e", EncoderConfig{0, 8, 16, 2, false, 0, 1}, rng);
  const Tensor<double> x = RandomMatrix(3, 8, rng);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  const auto out = EncoderForward(ctx, enc, tape.Constant(x));
  EXPECT_EQ(out.final.value(), x);
  EXPECT_TRUE(out.per_layer.empty());
}

TEST(Encoder, ShapesPerLayerAndLastEqualsFinal) {
  std::mt19937_64 rng(5);
  for (std::size_t k : {1u, 4u, 7u, 128u}) {
    auto enc = EncoderParams<double>::Init("e", EncoderConfig{3, 16, 32, 4, true, k, 4}, rng);
    for (std::size_t L : {1u, 2u, 9u}) {
      const Tensor<double> x = RandomMatrix(L, 16, rng);
      Tape<double> tape(false);
      ForwardContext<double> ctx{&tape, 0.0, nullptr};
      const auto out = EncoderForward(ctx, enc, tape.Constant(x));
      ASSERT_EQ(out.per_layer.size(), 3u);
      for (const auto& h : out.per_layer) EXPECT_EQ(h.value().shape(), x.shape());
      EXPECT_EQ(out.per_layer.back().value(), out.final.value());
    }
  }
}

TEST(Encoder, ZeroPreConvReducesToStackOnNormalizedInput) {
  std::mt19937_64 rng(6);
  auto with = EncoderParams<double>::Init("e", EncoderConfig{2, 8, 16, 2, true, 6, 2}, rng);
  with.pre_conv_weight.value.Fill(0.0);
  with.pre_conv_bias.value.Fill(0.0);
  EncoderParams<double> without = with;
  without.config.has_pre_conv = false;
  const Tensor<double> x = RandomMatrix(7, 8, rng);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  const auto a = EncoderForward(ctx, with, tape.Constant(x)).final.value();
  const auto normalized = with.pre_norm(tape, tape.Constant(x));
  const auto b = EncoderForward(ctx, without, normalized).final.value();
  EXPECT_LT(MaxAbsDiff(a, b), 1e-14);
}

TEST(Encoder, ErrorsAndDeterminism) {
  std::mt19937_64 rng(7);
  auto enc = EncoderParams<double>::Init("e", EncoderConfig{1, 8, 16, 2, false, 0, 1}, rng);
  Tape<double> tape(false);
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  try {
    EncoderForward(ctx, enc, tape.Constant(Tensor<double>::Matrix(0, 8)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptySequence);
  }
  EXPECT_THROW(EncoderForward(ctx, enc, tape.Constant(Tensor<double>::Matrix(3, 4))), Error);
  const Tensor<double> x = RandomMatrix(4, 8, rng);
  EXPECT_EQ(EncoderForward(ctx, enc, tape.Constant(x)).final.value(),
            EncoderForward(ctx, enc, tape.Constant(x)).final.value());
}

TEST(Dropout, InactiveWithoutRngOrWhenNotRecording) {
  std::mt19937_64 rng(8);
  const Tensor<double> x = RandomMatrix(50, 8, rng);
  Tape<double> off(false);
  ForwardContext<double> eval{&off, 0.5, &rng};
  EXPECT_EQ(Dropout(eval, off.Constant(x)).value(), x);
  Tape<double> on;
  ForwardContext<double> train{&on, 0.5, &rng};
  const auto y = Dropout(train, on.Constant(x)).value();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
  }
  EXPECT_GT(zeros, 120u);
  EXPECT_LT(zeros, 280u);
}

}  // namespace
}  // namespace mrhubert
