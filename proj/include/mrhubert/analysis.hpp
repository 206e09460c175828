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

#include <fstream>
#include <map>

#include "mrhubert/frontend.hpp"
#include "mrhubert/model.hpp"
#include "mrhubert/sampling.hpp"

namespace mrhubert {

// ---------------------------------------------------------------------------
// MACs

struct CostOptions {
  bool include_attention = false;  // add the L^2 score and value products
};

struct CostReport {
  std::vector<double> durations_s;
  std::vector<std::string> modules;                  // fixed display order
  std::map<std::string, std::uint64_t> module_macs;  // summed over durations
  std::vector<std::uint64_t> duration_macs;          // per duration
  std::uint64_t total_macs = 0;
  std::map<std::string, std::size_t> params;
};

inline const std::vector<double>& DefaultDurations() {
  static const std::vector<double> d{2, 4, 8, 16, 32};
  return d;
}

/// Closed-form multiply-accumulate count over conv, transposed conv and affine
/// maps. Conv: Lout*Cout*Cin/g*k; transposed conv: Lin*Cin*Cout*k; affine:
/// L*Din*Dout. Norms, activations and (by default) attention products are not
/// counted.
inline CostReport Macs(const ModelConfig& c, const std::vector<double>& durations = DefaultDurations(),
                       CostOptions opt = {}) {
  const auto problems = Validate(c);
  if (!problems.empty()) throw Error(ErrorKind::kInvalidConfig, JoinList(problems, "; "));
  if (durations.empty()) throw Error(ErrorKind::kUsage, "no durations");
  using u64 = std::uint64_t;
  CostReport rep;
  rep.durations_s = durations;
  const u64 D = c.attention_dim, F = c.ffn_dim, K = c.codebook_size, C = c.frontend.OutputChannels();
  const std::size_t N = c.num_resolutions();
  auto add = [&](const std::string& name, u64 v, u64& dur_total) {
    if (!rep.module_macs.count(name)) rep.modules.push_back(name);
    rep.module_macs[name] += v;
    dur_total += v;
  };
  for (double s : durations) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::kUsage, "invalid duration " + std::to_string(s));
    const auto n_samples = static_cast<std::size_t>(std::llround(s * kSampleRate));
    u64 t = 0;
    // frontend
    u64 fe = 0;
    std::size_t n = n_samples, cin = 1;
    for (const auto& l : c.frontend.layers) {
      const auto out = ConvOutputLength(n, l.kernel, l.stride);
      if (!out) throw Error(ErrorKind::kSequenceTooShort, std::to_string(s) + " s is too short for the frontend");
      fe += u64(*out) * l.channels * cin * l.kernel;
      n = *out;
      cin = l.channels;
    }
    add("frontend", fe, t);
    std::vector<u64> len{n};
    for (std::size_t i = 0; i + 1 < N; ++i)
      len.push_back(ResampledLength(len.back(), c.StepFactors(i), SamplingDirection::kDown));
    add("feature_projection", len[0] * C * D, t);
    if (c.pre_conv_kernel > 0) add("pre_conv", len[0] * D * (D / c.pre_conv_groups) * c.pre_conv_kernel, t);
    auto encoder = [&](std::size_t e, u64 L) {
      u64 per_layer = L * (4 * D * D + 2 * D * F);
      if (opt.include_attention) per_layer += 2 * L * L * D;
      add("encoder" + std::to_string(e), per_layer * u64(c.layers_per_encoder[e]), t);
    };
    auto sampler = [&](const std::string& name, std::size_t level, SamplingDirection dir) {
      const RateFactors f = EffectiveFactors(c.StepFactors(level), dir);
      const u64 lin = dir == SamplingDirection::kDown ? len[level] : len[level + 1];
      const u64 lout = CeilDiv(lin * f.up, f.down);
      u64 v = 0;
      if (c.sampling_variant == SamplingVariant::kFlexible) v = lin * D * D + lout * D * D;
      else v = dir == SamplingDirection::kDown ? lout * D * D : lin * D * D;
      add(name, v, t);
    };
    const u64 head_per_frame = c.head_dim > 0 ? D * c.head_dim + c.head_dim * K : D * K;
    for (std::size_t i = 0; i + 1 < N; ++i) {
      encoder(i, len[i]);
      sampler("down" + std::to_string(i), i, SamplingDirection::kDown);
    }
    encoder(N - 1, len[N - 1]);
    add("head" + std::to_string(N - 1), len[N - 1] * head_per_frame, t);
    for (std::size_t step = 0; step + 1 < N; ++step) {
      const std::size_t level = N - 2 - step;
      sampler("up" + std::to_string(level), level, SamplingDirection::kUp);
      encoder(N + step, len[level]);
      add("head" + std::to_string(level), len[level] * head_per_frame, t);
    }
    rep.duration_macs.push_back(t);
    rep.total_macs += t;
  }
  rep.params = ParamCount(c);
  return rep;
}

inline double Giga(std::uint64_t v) { return double(v) / 1e9; }

// ---------------------------------------------------------------------------
// SUPERB score

struct Anchor {
  double fbank = 0.0;
  double sota = 0.0;
  bool higher_is_better = true;
};

using ScoreAnchors = std::map<std::string, Anchor>;
using TaskGrouping = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Linear interpolation between the FBank (0) and SOTA (1000) anchors,
/// averaged within each task and then across tasks.
inline double SuperbScore(const std::map<std::string, double>& metrics, const ScoreAnchors& anchors,
                          const TaskGrouping& tasks) {
  if (tasks.empty()) throw Error(ErrorKind::kUsage, "no tasks to score");
  double across = 0.0;
  for (const auto& [task, names] : tasks) {
    if (names.empty()) throw Error(ErrorKind::kUsage, "task '" + task + "' has no metrics");
    double within = 0.0;
    for (const auto& m : names) {
      const auto a = anchors.find(m);
      if (a == anchors.end()) throw Error(ErrorKind::kNotFound, "no anchor for metric '" + m + "'");
      const auto v = metrics.find(m);
      if (v == metrics.end()) throw Error(ErrorKind::kNotFound, "no value for metric '" + m + "'");
      if (a->second.sota == a->second.fbank)
        throw Error(ErrorKind::kInvalidConfig, "metric '" + m + "' has identical anchors");
      within += (v->second - a->second.fbank) / (a->second.sota - a->second.fbank);
    }
    across += within / double(names.size());
  }
  return 1000.0 * across / double(tasks.size());
}

inline TaskGrouping TaskGroupingByName(const std::string& name) {
  const TaskGrouping understanding{{"PR", {"PR"}}, {"ASR", {"ASR"}}, {"IC", {"IC"}},
                                   {"KS", {"KS"}}, {"SF", {"SF-F1", "SF-CER"}}, {"ST", {"ST"}}};
  const TaskGrouping enhancement{{"SE", {"SE-STOI", "SE-PESQ"}}, {"SS", {"SS"}}};
  if (name == "understanding") return understanding;
  if (name == "enhancement") return enhancement;
  if (name == "general") {
    TaskGrouping all = understanding;
    all.insert(all.end(), enhancement.begin(), enhancement.end());
    return all;
  }
  throw Error(ErrorKind::kUsage, "unknown task grouping '" + name + "' (understanding, enhancement, general)");
}

namespace csv_detail {

inline std::vector<std::vector<std::string>> ReadRows(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = config_detail::Trim(line);
    if (t.empty() || t[0] == '#') continue;
    rows.push_back(config_detail::Split(t, ','));
  }
  if (rows.empty()) throw Error(ErrorKind::kData, path + ": empty file");
  return rows;
}

}  // namespace csv_detail

/// CSV with header `metric,fbank,sota,higher_is_better`.
inline ScoreAnchors LoadAnchors(const std::string& path) {
  const auto rows = csv_detail::ReadRows(path);
  ScoreAnchors out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw Error(ErrorKind::kData, path + ": expected 4 columns in row " + std::to_string(i + 1));
    Anchor a{config_detail::ParseNumber<double>(r[0], r[1]), config_detail::ParseNumber<double>(r[0], r[2]),
             config_detail::ParseBool(r[0], r[3])};
    if (a.fbank == a.sota) throw Error(ErrorKind::kData, path + ": identical anchors for '" + r[0] + "'");
    out[r[0]] = a;
  }
  return out;
}

/// CSV with header `metric,value`.
inline std::map<std::string, double> LoadMetrics(const std::string& path) {
  const auto rows = csv_detail::ReadRows(path);
  std::map<std::string, double> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 2) throw Error(ErrorKind::kData, path + ": expected 2 columns in row " + std::to_string(i + 1));
    out[r[0]] = config_detail::ParseNumber<double>(r[0], r[1]);
  }
  return out;
}

}  // namespace mrhubert
