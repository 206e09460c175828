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

#include "mrhubert/objective.hpp"
#include "test_util.hpp"

namespace mrhubert {
namespace {

MaskSet Mask(std::vector<std::size_t> idx, std::size_t L) { return MaskSet{std::move(idx), L, 20}; }

TEST(MaskedCE, UniformLogitsGiveLogK) {
  Tape<double> tape;
  ResolutionLoss r;
  const auto l = MaskedCE(tape.Constant(Tensor<double>::Matrix(6, 7, 0.25)), {0, 1, 2, 3, 4, 5}, Mask({1, 4}, 6),
                          LossReduction::kMean, &r);
  EXPECT_NEAR(l.value()[0], std::log(7.0), 1e-12);
  EXPECT_EQ(r.masked_frames, 2u);
  EXPECT_FALSE(r.vacuous);
}

TEST(MaskedCE, HandEvaluatedTwoClass) {
  Tape<double> tape;
  ResolutionLoss r;
  const auto l = MaskedCE(tape.Constant(Tensor<double>::FromRows({{0.0, std::log(3.0)}})), {1}, Mask({0}, 1),
                          LossReduction::kMean, &r);
  EXPECT_NEAR(l.value()[0], -std::log(3.0 / 4.0), 1e-14);
  EXPECT_EQ(r.masked_accuracy, 1.0);
}

TEST(MaskedCE, PeakedCorrectLogitsTendToZero) {
  Tape<double> tape;
  Tensor<double> logits = Tensor<double>::Matrix(3, 4);
  const std::vector<int> targets{3, 0, 2};
  for (std::size_t i = 0; i < 3; ++i) logits(i, std::size_t(targets[i])) = 50.0;
  ResolutionLoss r;
  const auto l = MaskedCE(tape.Constant(logits), targets, Mask({0, 1, 2}, 3), LossReduction::kMean, &r);
  EXPECT_LT(l.value()[0], 1e-20);
  EXPECT_EQ(r.masked_accuracy, 1.0);
}

TEST(MaskedCE, EmptyMaskIsVacuous) {
  Tape<double> tape;
  ResolutionLoss r;
  const auto l = MaskedCE(tape.Constant(Tensor<double>::Matrix(4, 3, 1.0)), {0, 1, 2, 0}, Mask({}, 4),
                          LossReduction::kMean, &r);
  EXPECT_EQ(l.value()[0], 0.0);
  EXPECT_TRUE(r.vacuous);
  EXPECT_EQ(r.masked_accuracy, 1.0);
}

TEST(MaskedCE, ErrorsOnBadUnitsAndLengths) {
  Tape<double> tape;
  try {
    MaskedCE(tape.Constant(Tensor<double>::Matrix(2, 3)), {0, 3}, Mask({1}, 2), LossReduction::kMean);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidUnit);
  }
  EXPECT_THROW(MaskedCE(tape.Constant(Tensor<double>::Matrix(2, 3)), {0, 1}, Mask({1}, 3), LossReduction::kMean),
               Error);
  EXPECT_THROW(MaskedCE(tape.Constant(Tensor<double>::Matrix(2, 3)), {0}, Mask({1}, 2), LossReduction::kMean), Error);
}

TEST(MaskedCE, UnmaskedRowsGetExactlyZeroGradient) {
  std::mt19937_64 rng(1);
  Parameter<double> logits("logits", testing::RandomMatrix(8, 5, rng));
  Tape<double> tape;
  const MaskSet m = Mask({1, 2, 6}, 8);
  tape.Backward(MaskedCE(tape.Param(logits), {0, 1, 2, 3, 4, 0, 1, 2}, m, LossReduction::kMean));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (!m.contains(i)) EXPECT_EQ(logits.grad(i, j), 0.0);
      else EXPECT_NE(logits.grad(i, j), 0.0);
}

TEST(MaskedCE, SumReductionScalesByMaskSize) {
  std::mt19937_64 rng(2);
  const auto x = testing::RandomMatrix(5, 3, rng);
  Tape<double> tape;
  const MaskSet m = Mask({0, 2, 3}, 5);
  const std::vector<int> t{0, 1, 2, 0, 1};
  const double mean = MaskedCE(tape.Constant(x), t, m, LossReduction::kMean).value()[0];
  const double sum = MaskedCE(tape.Constant(x), t, m, LossReduction::kSum).value()[0];
  EXPECT_NEAR(sum, 3.0 * mean, 1e-12);
}

TEST(Combine, Examples) {
  EXPECT_EQ(Combine({2.0, 3.0}, {1.0, 1.0}), 5.0);
  EXPECT_EQ(Combine({2.0, 3.0}, {1.0, 0.0}), 2.0);
  EXPECT_EQ(Combine({2.0, 3.0}, {0.0, 0.0}), 0.0);
  EXPECT_NEAR(Combine({2.0, 3.0}, {2.5, 5.0}), 2.5 * Combine({2.0, 3.0}, {1.0, 2.0}), 1e-12);
  try {
    Combine({1.0}, {1.0, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
  EXPECT_THROW(Combine({1.0}, {-1.0}), Error);
}

TEST(PretrainLoss, TotalIsWeightedSumAndInitialLossNearLogK) {
  ModelConfig c = Preset("tiny");
  c.loss_weights = {1.0, 0.5};
  auto m = MRModel<double>::Init(c);
  std::mt19937_64 rng(3);
  Waveform w;
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (int i = 0; i < 16000; ++i) w.samples.push_back(n(rng));
  std::vector<int> units(49);
  for (auto& u : units) u = int(rng() % c.codebook_size);
  Tape<double> tape;
  ForwardContext<double> ctx{&tape, 0.0, nullptr};
  typename MRModel<double>::ForwardOptions opt;
  const auto out = m.Forward(ctx, w, rng, opt);
  LossBreakdown b;
  const auto total = PretrainLoss(out, units, c, &b);
  ASSERT_EQ(b.per_resolution.size(), 2u);
  EXPECT_EQ(b.per_resolution[0].resolution_ms, 20);
  EXPECT_EQ(b.per_resolution[1].resolution_ms, 40);
  EXPECT_NEAR(b.total, b.per_resolution[0].loss + 0.5 * b.per_resolution[1].loss, 1e-12);
  EXPECT_NEAR(total.value()[0], b.total, 1e-12);
  for (const auto& r : b.per_resolution) {
    EXPECT_NEAR(r.loss, std::log(double(c.codebook_size)), 0.2);
    EXPECT_GE(r.masked_accuracy, 0.0);
    EXPECT_LE(r.masked_accuracy, 1.0);
  }
  units.pop_back();
  EXPECT_THROW(PretrainLoss(out, units, c), Error);
}

}  // namespace
}  // namespace mrhubert
