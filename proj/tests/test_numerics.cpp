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

TEST(Tensor, ShapeAndIndexing) {
  Tensor<double> t = Tensor<double>::FromRows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(3)), Error);
}

TEST(Primitives, GeluFixedPointAndValues) {
  Tape<double> tape;
  auto y = ad::Gelu(tape.Constant(Tensor<double>::FromRows({{0.0, 1.0, -1.0}})));
  EXPECT_EQ(y.value()[0], 0.0);
  // x * Phi(x) with Phi(1) = 0.841344746068543
  EXPECT_NEAR(y.value()[1], 0.841344746068543, 1e-12);
  EXPECT_NEAR(y.value()[2], -1.0 + 0.841344746068543, 1e-12);
}

TEST(Primitives, LayerNormOfConstantIsZero) {
  Tape<double> tape;
  auto g = tape.Constant(Tensor<double>::Vector(4, 1.0));
  auto b = tape.Constant(Tensor<double>::Vector(4, 0.0));
  auto y = ad::LayerNorm(tape.Constant(Tensor<double>::Matrix(2, 4, 3.5)), g, b);
  for (double v : y.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Primitives, LayerNormMatchesDirectFormula) {
  std::mt19937_64 rng(4);
  Tensor<double> x = RandomMatrix(3, 5, rng);
  Tensor<double> gain = Tensor<double>::Vector(5), bias = Tensor<double>::Vector(5);
  FillNormal(gain, 1.0, rng);
  FillNormal(bias, 1.0, rng);
  Tape<double> tape;
  auto y = ad::LayerNorm(tape.Constant(x), tape.Constant(gain), tape.Constant(bias)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 5; ++j) mean += x(i, j) / 5;
    for (std::size_t j = 0; j < 5; ++j) var += (x(i, j) - mean) * (x(i, j) - mean) / 5;
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR(y(i, j), (x(i, j) - mean) / std::sqrt(var + 1e-5) * gain[j] + bias[j], 1e-12);
  }
}

TEST(Primitives, SoftmaxUniformAndRowSums) {
  Tape<double> tape;
  auto u = ad::SoftmaxRows(tape.Constant(Tensor<double>::Matrix(2, 8, 0.3))).value();
  for (double v : u.storage()) EXPECT_NEAR(v, 1.0 / 8, 1e-15);
  std::mt19937_64 rng(1);
  auto s = ad::SoftmaxRows(tape.Constant(RandomMatrix(6, 7, rng, 30.0))).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 7; ++j) sum += s(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Primitives, AffineShapeErrorNamesShapes) {
  Tape<double> tape;
  try {
    ad::Affine(tape.Constant(Tensor<double>::Matrix(2, 3)), tape.Constant(Tensor<double>::Matrix(4, 5)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4x5"), std::string::npos);
  }
}

TEST(Conv1d, LengthFormulaExample) {
  Tape<double> tape;
  Tensor<double> w({1, 1, 10}, 0.1);
  auto y = ad::Conv1d<double>(tape.Constant(Tensor<double>::Matrix(16000, 1)), tape.Constant(w), nullptr, 5);
  EXPECT_EQ(y.rows(), 3199u);
}

TEST(Conv1d, WindowSums) {
  Tape<double> tape;
  auto x = tape.Constant(Tensor<double>::FromRows({{1}, {2}, {3}, {4}, {5}}));
  auto y = ad::Conv1d<double>(x, tape.Constant(Tensor<double>({1, 1, 3}, 1.0)), nullptr, 2).value();
  ASSERT_EQ(y.rows(), 2u);
  EXPECT_EQ(y[0], 1 + 2 + 3);
  EXPECT_EQ(y[1], 3 + 4 + 5);
}

TEST(Conv1d, IdentityKernel) {
  std::mt19937_64 rng(2);
  Tensor<double> x = RandomMatrix(7, 3, rng);
  Tensor<double> w({3, 3, 1});
  for (std::size_t c = 0; c < 3; ++c) w(c, c, 0) = 1.0;
  Tape<double> tape;
  EXPECT_EQ(ad::Conv1d<double>(tape.Constant(x), tape.Constant(w), nullptr, 1).value(), x);
}

TEST(Conv1d, TooShortAndGroups) {
  Tape<double> tape;
  EXPECT_THROW(ad::Conv1d<double>(tape.Constant(Tensor<double>::Matrix(2, 1)),
                                  tape.Constant(Tensor<double>({1, 1, 3})), nullptr, 1),
               Error);
  // Two groups of one channel: each output sees only its own input channel.
  Tensor<double> w({2, 1, 1});
  w[0] = 2.0;
  w[1] = 3.0;
  auto y = ad::Conv1d<double>(tape.Constant(Tensor<double>::FromRows({{1, 10}})), tape.Constant(w), nullptr, 1, 2);
  EXPECT_EQ(y.value()[0], 2.0);
  EXPECT_EQ(y.value()[1], 30.0);
}

TEST(TransposedConv1d, StrideTwoLeavesZeros) {
  Tensor<double> w({2, 2, 1});
  w(0, 0, 0) = w(1, 1, 0) = 1.0;
  Tape<double> tape;
  auto x = Tensor<double>::FromRows({{1, 2}, {3, 4}, {5, 6}});
  auto y = ad::TransposedConv1d<double>(tape.Constant(x), tape.Constant(w), nullptr, 2).value();
  ASSERT_EQ(y.rows(), 5u);
  EXPECT_EQ(y(0, 1), 2.0);
  EXPECT_EQ(y(2, 0), 3.0);
  EXPECT_EQ(y(4, 1), 6.0);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(3, 1), 0.0);
  auto one = ad::TransposedConv1d<double>(tape.Constant(Tensor<double>::Matrix(1, 2)), tape.Constant(w), nullptr, 3);
  EXPECT_EQ(one.rows(), 1u);
  EXPECT_THROW(ad::TransposedConv1d<double>(tape.Constant(Tensor<double>::Matrix(0, 2)), tape.Constant(w), nullptr, 1),
               Error);
}

// <conv(x), y> == <x, convT(y)> with shared kernels.
TEST(TransposedConv1d, AdjointOfConv) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3, k = 1 + rng() % 4, s = 1 + rng() % 3;
    const std::size_t lout = 1 + rng() % 6;
    const std::size_t L = (lout - 1) * s + k;
    Tensor<double> w({cout, cin, k});
    FillNormal(w, 1.0, rng);
    // Transposed layout is (Cin' x Cout' x k) with Cin' = cout.
    Tensor<double> wt = w;
    Tensor<double> x = RandomMatrix(L, cin, rng), y = RandomMatrix(lout, cout, rng);
    Tape<double> tape;
    auto cx = ad::Conv1d<double>(tape.Constant(x), tape.Constant(w), nullptr, s).value();
    auto ty = ad::TransposedConv1d<double>(tape.Constant(y), tape.Constant(wt), nullptr, s).value();
    ASSERT_EQ(ty.rows(), L);
    EXPECT_NEAR(Dot(cx, y), Dot(x, ty), 1e-10);
  }
}

// Straight-line dense attention for the oracle comparison.
Tensor<double> DenseAttention(const Tensor<double>& x, const AttentionParams<double>& p, std::size_t heads) {
  const std::size_t L = x.rows(), D = x.cols(), hd = D / heads;
  auto affine = [](const Tensor<double>& in, const Parameter<double>& w, const Parameter<double>& b) {
    Tensor<double> out = Tensor<double>::Matrix(in.rows(), w.value.cols());
    for (std::size_t i = 0; i < in.rows(); ++i)
      for (std::size_t j = 0; j < w.value.cols(); ++j) {
        double s = b.value[j];
        for (std::size_t k = 0; k < in.cols(); ++k) s += in(i, k) * w.value(k, j);
        out(i, j) = s;
      }
    return out;
  };
  Tensor<double> q = affine(x, p.q.weight, p.q.bias), k = affine(x, p.k.weight, p.k.bias),
                 v = affine(x, p.v.weight, p.v.bias);
  Tensor<double> merged = Tensor<double>::Matrix(L, D);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> s(L);
      double mx = -1e300;
      for (std::size_t j = 0; j < L; ++j) {
        double d = 0;
        for (std::size_t c = 0; c < hd; ++c) d += q(i, h * hd + c) * k(j, h * hd + c);
        s[j] = d / std::sqrt(double(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < L; ++j) acc += s[j] / z * v(j, h * hd + c);
        merged(i, h * hd + c) = acc;
      }
    }
  return affine(merged, p.o.weight, p.o.bias);
}

TEST(Attention, MatchesDenseOracle) {
  std::mt19937_64 rng(11);
  auto p = AttentionParams<double>::Init("a", 4, rng);
  for (auto* lin : {&p.q, &p.k, &p.v, &p.o}) {
    FillNormal(lin->weight.value, 0.5, rng);
    FillNormal(lin->bias.value, 0.5, rng);
  }
  Tensor<double> x = RandomMatrix(4, 4, rng);
  Tape<double> tape;
  auto y = AttentionForward(tape, p, tape.Constant(x), 2).value();
  EXPECT_LT(MaxAbsDiff(y, DenseAttention(x, p, 2)), 1e-12);
}

TEST(Attention, SingleTokenIsValueThenOutput) {
  std::mt19937_64 rng(12);
  auto p = AttentionParams<double>::Init("a", 6, rng);
  Tensor<double> x = RandomMatrix(1, 6, rng);
  Tape<double> tape;
  auto y = AttentionForward(tape, p, tape.Constant(x), 3).value();
  auto v = p.v(tape, tape.Constant(x));
  auto expect = p.o(tape, v).value();
  EXPECT_LT(MaxAbsDiff(y, expect), 1e-14);
}

TEST(Attention, PermutationEquivariantAndEmptyRejected) {
  std::mt19937_64 rng(13);
  auto p = AttentionParams<double>::Init("a", 8, rng);
  for (auto* lin : {&p.q, &p.k, &p.v, &p.o}) FillNormal(lin->weight.value, 0.4, rng);
  Tensor<double> x = RandomMatrix(5, 8, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor<double> xp = x;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) xp(i, c) = x(perm[i], c);
  Tape<double> tape;
  auto y = AttentionForward(tape, p, tape.Constant(x), 2).value();
  auto yp = AttentionForward(tape, p, tape.Constant(xp), 2).value();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp(i, c), y(perm[i], c), 1e-12);
  EXPECT_THROW(AttentionForward(tape, p, tape.Constant(Tensor<double>::Matrix(0, 8)), 2), Error);
}

TEST(CrossEntropy, OneHotLimitTendsToZero) {
  Tape<double> tape;
  Tensor<double> logits = Tensor<double>::Matrix(1, 4);
  logits[2] = 60.0;
  ad::CrossEntropyStats stats;
  auto l = ad::MaskedCrossEntropy(tape.Constant(logits), {2}, {0}, ad::Reduction::kMean, &stats);
  EXPECT_LT(l.value()[0], 1e-20);
  EXPECT_EQ(stats.correct, 1u);
}

TEST(GradCheck, SquareAtThree) {
  Parameter<double> x("x", Tensor<double>::Matrix(1, 1, 3.0));
  auto r = GradCheck([&](Tape<double>& t) {
    auto v = t.Param(x);
    return ad::MatMul(v, v);
  }, {&x});
  EXPECT_NEAR(x.grad[0], 6.0, 1e-12);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_THROW(GradCheck([&](Tape<double>& t) { return ad::Sum(t.Param(x)); }, {&x}, 1e-2), Error);
}

TEST(GradCheck, NonFiniteValueIsReported) {
  Parameter<double> x("x", Tensor<double>::Vector(1, 1.0));
  EXPECT_THROW(GradCheck([&](Tape<double>& t) {
    return ad::Scale(ad::Sum(t.Param(x)), std::numeric_limits<double>::infinity());
  }, {&x}),
               Error);
}

TEST(Tape, ParamGradientsAccumulateAndNonRecordingRejectsBackward) {
  Parameter<double> w("w", Tensor<double>::FromRows({{2.0}}));
  Tape<double> tape;
  auto y = ad::Add(tape.Param(w), tape.Param(w));
  tape.Backward(ad::Sum(y));
  EXPECT_EQ(w.grad[0], 2.0);
  Tape<double> off(false);
  auto z = ad::Sum(off.Param(w));
  EXPECT_THROW(off.Backward(z), Error);
}

}  // namespace
}  // namespace mrhubert
