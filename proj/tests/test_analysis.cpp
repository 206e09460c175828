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

#include <numeric>

#include "mrhubert/analysis.hpp"
#include "mrhubert/config.hpp"

namespace mrhubert {
namespace {

const std::string kData = std::string(MRHUBERT_SOURCE_DIR) + "/data/";

double G(const std::string& preset) { return Giga(Macs(Preset(preset)).total_macs); }

TEST(Macs, ReproducesReportedTotals) {
  const std::vector<std::pair<std::string, double>> cases{
      {"hubert-base-equiv", 431}, {"mono-base", 394},  {"hubert-large-equiv", 1116}, {"mono-large", 971},
      {"B.1-b", 416},             {"B.2-b", 331},      {"B.2-c", 316},               {"B.5-a", 439},
      {"B.6-a", 339},             {"B.6-b", 373}};
  for (const auto& [name, target] : cases) EXPECT_NEAR(G(name), target, 0.02 * target) << name;
  for (const char* name : {"B.8-a", "B.8-b", "B.8-g", "B.8-i"}) {
    EXPECT_GE(G(name), 965 * 0.98) << name;
    EXPECT_LE(G(name), 1049 * 1.02) << name;
  }
}

TEST(Macs, ReductionRatios) {
  const double base = 1.0 - G("mono-base") / G("hubert-base-equiv");
  const double large = 1.0 - G("mono-large") / G("hubert-large-equiv");
  EXPECT_GE(base, 0.08);
  EXPECT_LE(base, 0.10);
  EXPECT_GE(large, 0.12);
  EXPECT_LE(large, 0.14);
}

TEST(Macs, ReportIsInternallyConsistent) {
  for (const char* name : {"mono-base", "B.2-a", "B.3-a", "tiny"}) {
    const auto r = Macs(Preset(name));
    std::uint64_t by_module = 0;
    for (const auto& m : r.modules) by_module += r.module_macs.at(m);
    EXPECT_EQ(by_module, r.total_macs) << name;
    EXPECT_EQ(std::accumulate(r.duration_macs.begin(), r.duration_macs.end(), std::uint64_t{0}), r.total_macs);
    EXPECT_EQ(r.duration_macs.size(), DefaultDurations().size());
    EXPECT_EQ(r.modules.size(), r.module_macs.size());
    for (std::size_t i = 1; i < r.duration_macs.size(); ++i) EXPECT_GT(r.duration_macs[i], r.duration_macs[i - 1]);
  }
}

TEST(Macs, HandCountForSingleLayer) {
  // one frame of 400 samples -> one frontend output; everything is per-frame.
  ModelConfig c = Preset("hubert-base-equiv");
  const auto r = Macs(c, {0.025});
  ASSERT_EQ(r.duration_macs.size(), 1u);
  const std::uint64_t D = c.attention_dim, F = c.ffn_dim, L = 1;
  EXPECT_EQ(r.module_macs.at("encoder0"), L * (4 * D * D + 2 * D * F) * 12);
  EXPECT_EQ(r.module_macs.at("feature_projection"), L * c.frontend.OutputChannels() * D);
}

TEST(Macs, AddingALayerNeverDecreases) {
  ModelConfig c = Preset("mono-base");
  const auto before = Macs(c).total_macs;
  for (std::size_t e = 0; e < c.layers_per_encoder.size(); ++e) {
    ModelConfig d = c;
    d.layers_per_encoder[e] += 1;
    EXPECT_GT(Macs(d).total_macs, before) << e;
  }
}

TEST(Macs, CoarserResolutionsCostLess) {
  ModelConfig c = Preset("mono-base");
  ModelConfig coarser = c;
  coarser.frontend.layers.back().stride *= 2;
  // same layer allocation, every encoder sees about half as many frames
  EXPECT_LT(Macs(coarser).total_macs, Macs(c).total_macs);
}

TEST(Macs, EqualRatesCostExactlyTheSamplers) {
  ModelConfig flat = Preset("B.5-a");
  const auto r = Macs(flat);
  const auto base = Macs(Preset("hubert-base-equiv"));
  std::uint64_t samplers = 0, heads_extra = 0;
  for (const auto& [m, v] : r.module_macs) {
    if (m.rfind("down", 0) == 0 || m.rfind("up", 0) == 0) samplers += v;
  }
  // the 20/20 model carries one prediction head per level
  heads_extra = r.module_macs.at("head0") + r.module_macs.at("head1") - base.module_macs.at("head0");
  EXPECT_EQ(r.total_macs, base.total_macs + samplers + heads_extra);
  EXPECT_GT(r.total_macs, base.total_macs);
}

TEST(Macs, AttentionProductsOnlyAdd) {
  const auto plain = Macs(Preset("mono-base"));
  const auto full = Macs(Preset("mono-base"), DefaultDurations(), CostOptions{true});
  EXPECT_GT(full.total_macs, plain.total_macs);
  EXPECT_EQ(full.module_macs.at("frontend"), plain.module_macs.at("frontend"));
}

TEST(Macs, RejectsBadDurations) {
  const auto c = Preset("mono-base");
  EXPECT_THROW(Macs(c, {}), Error);
  EXPECT_THROW(Macs(c, {-1.0}), Error);
  EXPECT_THROW(Macs(c, {std::nan("")}), Error);
  EXPECT_THROW(Macs(c, {0.001}), Error);  // shorter than one frontend window
}

TEST(Superb, EndpointsMapToZeroAndThousand) {
  const auto anchors = LoadAnchors(kData + "superb_anchors.csv");
  std::map<std::string, double> fbank, sota;
  for (const auto& [m, a] : anchors) {
    fbank[m] = a.fbank;
    sota[m] = a.sota;
  }
  for (const char* g : {"understanding", "enhancement", "general"}) {
    EXPECT_NEAR(SuperbScore(fbank, anchors, TaskGroupingByName(g)), 0.0, 1e-9) << g;
    EXPECT_NEAR(SuperbScore(sota, anchors, TaskGroupingByName(g)), 1000.0, 1e-9) << g;
  }
}

TEST(Superb, ReproducesUnderstandingScores) {
  const auto anchors = LoadAnchors(kData + "superb_anchors.csv");
  const auto tasks = TaskGroupingByName("understanding");
  const std::vector<std::pair<std::string, double>> cases{
      {"hubert_base", 861.2},        {"hubert_base_plus", 876.9},   {"hubert_large", 932.6},
      {"hubert_large_star", 936.2}, {"mrhubert_mono_base", 885.8}, {"mrhubert_mono_large", 949.7}};
  for (const auto& [file, target] : cases) {
    const auto m = LoadMetrics(kData + "metrics/" + file + ".csv");
    EXPECT_NEAR(SuperbScore(m, anchors, tasks), target, 1.0) << file;
  }
}

TEST(Superb, AffineInvariance) {
  const ScoreAnchors a{{"x", {10, 2, false}}, {"y", {1, 5, true}}};
  const TaskGrouping t{{"X", {"x"}}, {"Y", {"y"}}};
  const std::map<std::string, double> m{{"x", 4}, {"y", 3}};
  const double s = SuperbScore(m, a, t);
  ScoreAnchors a2;
  std::map<std::string, double> m2;
  for (const auto& [k, v] : a) a2[k] = {3 * v.fbank - 7, 3 * v.sota - 7, v.higher_is_better};
  for (const auto& [k, v] : m) m2[k] = 3 * v - 7;
  EXPECT_NEAR(SuperbScore(m2, a2, t), s, 1e-9);
  // hand value: x -> 0.75, y -> 0.5
  EXPECT_NEAR(s, 625.0, 1e-9);
}

TEST(Superb, MissingAnchorNamesTheMetric) {
  const ScoreAnchors a{{"x", {0, 1, true}}};
  try {
    SuperbScore({{"x", 0.5}, {"zz", 1}}, a, {{"T", {"x", "zz"}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFound);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
  EXPECT_THROW(SuperbScore({{"x", 0.5}}, a, {{"T", {"x", "q"}}}), Error);
  EXPECT_THROW(TaskGroupingByName("bogus"), Error);
}

TEST(Superb, LoadersRejectMalformedFiles) {
  const std::string dir = ::testing::TempDir();
  const std::string bad = dir + "/bad_anchors.csv";
  std::ofstream(bad) << "metric,fbank,sota,higher_is_better\nPR,1,2\n";
  EXPECT_THROW(LoadAnchors(bad), Error);
  std::ofstream(bad) << "metric,fbank,sota,higher_is_better\nPR,1,1,true\n";
  EXPECT_THROW(LoadAnchors(bad), Error);
  std::ofstream(bad) << "metric,value\nPR,abc\n";
  EXPECT_THROW(LoadMetrics(bad), Error);
  EXPECT_THROW(LoadMetrics(dir + "/does_not_exist.csv"), Error);
}

}  // namespace
}  // namespace mrhubert
