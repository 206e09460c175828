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

#include "mrhubert/quantizer.hpp"
#include "mrhubert/sampling.hpp"
#include "test_util.hpp"

namespace mrhubert {
namespace {

using testing::RandomMatrix;

TEST(KMeans, SingleClusterIsMean) {
  std::mt19937_64 rng(1);
  const auto x = RandomMatrix(40, 3, rng);
  const Codebook cb = FitKMeans(x, 1, 50, 1e-9, 7);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < 40; ++i) mean += x(i, j) / 40;
    EXPECT_NEAR(cb.centroids(0, j), mean, 1e-12);
  }
}

// Optimal 2-clustering by enumerating every bipartition.
double BestTwoClusterInertia(const Tensor<double>& x) {
  const std::size_t M = x.rows(), d = x.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask + 1 < (1u << M); ++mask) {
    double total = 0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> mean(d, 0.0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < M; ++i)
        if (((mask >> i) & 1u) == std::uint32_t(side)) {
          ++n;
          for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
        }
      for (auto& m : mean) m /= double(n);
      for (std::size_t i = 0; i < M; ++i)
        if (((mask >> i) & 1u) == std::uint32_t(side))
          for (std::size_t j = 0; j < d; ++j) total += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    }
    best = std::min(best, total);
  }
  return best;
}

TEST(KMeans, TwoSeparatedCloudsRecoverMeans) {
  std::mt19937_64 rng(2);
  Tensor<double> x = Tensor<double>::Matrix(16, 2);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> mean_a(2, 0), mean_b(2, 0);
  for (std::size_t i = 0; i < 16; ++i) {
    const double off = i < 8 ? -10.0 : 10.0;
    for (std::size_t j = 0; j < 2; ++j) {
      x(i, j) = off + n(rng);
      (i < 8 ? mean_a : mean_b)[j] += x(i, j) / 8;
    }
  }
  const Codebook cb = FitKMeans(x, 2, 100, 1e-12, 3);
  const std::size_t a = cb.centroids(0, 0) < 0 ? 0 : 1;
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(cb.centroids(a, j), mean_a[j], 1e-6);
    EXPECT_NEAR(cb.centroids(1 - a, j), mean_b[j], 1e-6);
  }
  EXPECT_NEAR(cb.inertia, BestTwoClusterInertia(x), 1e-9);
}

TEST(KMeans, InertiaNonIncreasingOverRandomDatasets) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t M = 20 + rng() % 60, K = 1 + rng() % 6;
    const auto x = RandomMatrix(M, 1 + rng() % 4, rng);
    const Codebook cb = FitKMeans(x, K, 30, 0.0, seed);
    ASSERT_FALSE(cb.inertia_history.empty());
    for (std::size_t t = 1; t < cb.inertia_history.size(); ++t)
      EXPECT_LE(cb.inertia_history[t], cb.inertia_history[t - 1] + 1e-12) << "seed " << seed << " iter " << t;
    EXPECT_DOUBLE_EQ(cb.inertia, cb.inertia_history.back());
  }
}

TEST(KMeans, DeterministicErrorsAndDegenerate) {
  std::mt19937_64 rng(4);
  const auto x = RandomMatrix(30, 3, rng);
  EXPECT_EQ(FitKMeans(x, 4, 20, 1e-8, 9).centroids, FitKMeans(x, 4, 20, 1e-8, 9).centroids);
  try {
    FitKMeans(x, 31, 20, 1e-8, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInsufficientData);
  }
  WarningsEnabled() = false;
  const Codebook same = FitKMeans(Tensor<double>::Matrix(10, 2, 1.5), 3, 10, 1e-8, 1);
  WarningsEnabled() = true;
  EXPECT_EQ(same.K(), 3u);
  EXPECT_TRUE(AllFinite(same.centroids));
  EXPECT_EQ(same.inertia, 0.0);
}

TEST(Assign, ExamplesAndTieRule) {
  Codebook cb;
  cb.centroids = Tensor<double>::Matrix(8, 2);
  for (std::size_t k = 0; k < 8; ++k) cb.centroids(k, 0) = double(k) * 3.0;
  const auto hit = Assign(Tensor<double>::FromRows({{21.0, 0.0}}), cb);
  EXPECT_EQ(hit.units, (std::vector<int>{7}));
  Codebook tie;
  tie.centroids = Tensor<double>::Matrix(6, 1, 100.0);
  tie.centroids(2, 0) = -1.0;
  tie.centroids(5, 0) = 1.0;
  EXPECT_EQ(Assign(Tensor<double>::FromRows({{0.0}}), tie).units, (std::vector<int>{2}));
  try {
    Assign(Tensor<double>::Matrix(2, 3), cb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Assign, MatchesExhaustiveScan) {
  std::mt19937_64 rng(5);
  Codebook cb;
  cb.centroids = RandomMatrix(9, 4, rng);
  const auto x = RandomMatrix(50, 4, rng);
  const auto units = Assign(x, cb).units;
  for (std::size_t i = 0; i < 50; ++i) {
    double best = 1e300;
    int arg = -1;
    for (std::size_t k = 0; k < 9; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += (x(i, j) - cb.centroids(k, j)) * (x(i, j) - cb.centroids(k, j));
      if (s < best) {
        best = s;
        arg = int(k);
      }
    }
    EXPECT_EQ(units[i], arg);
  }
}

TEST(Assign, ReproducesFitInertia) {
  std::mt19937_64 rng(6);
  const auto x = RandomMatrix(200, 3, rng);
  const Codebook cb = FitKMeans(x, 5, 100, 1e-10, 2);
  const auto units = Assign(x, cb).units;
  double inertia = 0;
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double t = x(i, j) - cb.centroids(std::size_t(units[i]), j);
      inertia += t * t;
    }
  EXPECT_NEAR(inertia, cb.inertia, 1e-6 * cb.inertia);
}

TEST(SubsampleUnits, Examples) {
  const UnitSequence u{{10, 11, 12, 13, 14, 15}, 20, "a"};
  const auto s = SubsampleUnits(u, 2);
  EXPECT_EQ(s.units, (std::vector<int>{10, 12, 14}));
  EXPECT_EQ(s.resolution_ms, 40);
  EXPECT_EQ(SubsampleUnits(u, 1).units, u.units);
  EXPECT_EQ(SubsampleUnits(UnitSequence{{1, 2, 3, 4, 5, 6, 7}, 20, ""}, 2).size(), 4u);
  EXPECT_TRUE(SubsampleUnits(UnitSequence{}, 3).units.empty());
}

TEST(SubsampleUnits, CommutesWithAssign) {
  std::mt19937_64 rng(7);
  Codebook cb;
  cb.centroids = RandomMatrix(6, 3, rng);
  for (std::size_t L : {8u, 9u, 31u}) {
    const auto x = RandomMatrix(L, 3, rng);
    EXPECT_EQ(SubsampleUnits(Assign(x, cb), 2).units, Assign(SkipResample(x, 2), cb).units);
  }
}

TEST(LevelTargets, LengthMatchesSamplerAndAgreesWithSubsample) {
  std::mt19937_64 rng(8);
  for (std::size_t L = 1; L <= 150; ++L) {
    std::vector<int> high(L);
    for (auto& u : high) u = int(rng() % 50);
    const std::size_t len2 = ResampledLength(L, {1, 2}, SamplingDirection::kDown);
    EXPECT_EQ(LevelTargets(high, 20, 40, len2), SubsampleUnits(UnitSequence{high, 20, ""}, 2).units);
    const std::size_t len5 = ResampledLength(L, {2, 5}, SamplingDirection::kDown);
    const auto t = LevelTargets(high, 40, 100, len5);
    ASSERT_EQ(t.size(), len5);
    for (std::size_t j = 0; j < len5; ++j) EXPECT_EQ(t[j], high[std::min(j * 5 / 2, L - 1)]);
  }
}

TEST(Files, CodebookAndUnitRoundTrip) {
  const std::string dir = testing::ScratchDir("quantizer_files");
  std::mt19937_64 rng(9);
  const auto x = RandomMatrix(40, 3, rng);
  const Codebook cb = FitKMeans(x, 4, 30, 1e-9, 5);
  WriteCodebook(dir + "/cb.txt", cb);
  const Codebook back = ReadCodebook(dir + "/cb.txt");
  EXPECT_EQ(back.centroids, cb.centroids);
  EXPECT_EQ(back.seed, cb.seed);
  const std::vector<std::vector<int>> lines{{1, 2, 3}, {}, {0}};
  WriteUnitFile(dir + "/u.txt", lines);
  EXPECT_EQ(ReadUnitFile(dir + "/u.txt"), lines);
  EXPECT_THROW(ReadCodebook(dir + "/missing.txt"), Error);
  {
    std::ofstream bad(dir + "/bad.txt");
    bad << "1 2 x\n";
  }
  EXPECT_THROW(ReadUnitFile(dir + "/bad.txt"), Error);
}

}  // namespace
}  // namespace mrhubert
