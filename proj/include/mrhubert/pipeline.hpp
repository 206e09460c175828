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

#include "mrhubert/io.hpp"
#include "mrhubert/quantizer.hpp"
#include "mrhubert/trainer.hpp"

namespace mrhubert {

struct UnitPreparation {
  Codebook codebook;
  std::vector<int> resolutions_ms;
  std::vector<std::vector<std::vector<int>>> units;  // [level][utterance][frame]
};

inline std::string UnitFileName(int resolution_ms) { return "units_" + std::to_string(resolution_ms) + "ms.txt"; }

/// Frontend features of every utterance (seed-initialized frontend unless one
/// is supplied), K-means on all frames, high-resolution assignment, and
/// per-level targets. Writes codebook.txt, units_<R>ms.txt and units.tsv
/// (line number -> audio path) into out_dir when non-empty.
inline UnitPreparation PrepareUnits(const Manifest& manifest, const ModelConfig& cfg, std::size_t K,
                                    std::uint64_t seed, const std::string& out_dir,
                                    const FrontendParams<float>* frontend = nullptr, std::size_t max_iters = 100,
                                    double tol = 1e-6) {
  if (manifest.entries.empty()) throw Error(ErrorKind::kData, "empty manifest");
  FrontendParams<float> seeded;
  if (!frontend) {
    seeded = MRModel<float>::Init(cfg).frontend;
    frontend = &seeded;
  }
  auto& fe = const_cast<FrontendParams<float>&>(*frontend);
  std::vector<Tensor<float>> feats;
  std::size_t total = 0;
  for (const auto& e : manifest.entries) {
    feats.push_back(Extract(fe, ReadWav(manifest.Resolve(e)), cfg.frontend, cfg.audio_norm));
    total += feats.back().rows();
  }
  const std::size_t C = feats.front().cols();
  if (total < K)
    throw Error(ErrorKind::kInsufficientData, std::to_string(total) + " frames for K = " + std::to_string(K));
  Tensor<double> all = Tensor<double>::Matrix(total, C);
  std::size_t row = 0;
  for (const auto& f : feats)
    for (std::size_t i = 0; i < f.rows(); ++i, ++row)
      for (std::size_t c = 0; c < C; ++c) all(row, c) = f(i, c);

  UnitPreparation prep;
  prep.codebook = FitKMeans(all, K, max_iters, tol, seed);
  prep.resolutions_ms = cfg.resolutions_ms;
  prep.units.resize(cfg.num_resolutions());
  for (std::size_t u = 0; u < feats.size(); ++u) {
    const std::vector<int> high = Assign(feats[u], prep.codebook, cfg.resolutions_ms[0]).units;
    std::size_t len = high.size();
    prep.units[0].push_back(high);
    for (std::size_t k = 1; k < cfg.num_resolutions(); ++k) {
      len = ResampledLength(len, cfg.StepFactors(k - 1), SamplingDirection::kDown);
      prep.units[k].push_back(LevelTargets(high, cfg.resolutions_ms[0], cfg.resolutions_ms[k], len));
    }
  }
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir + ": " + ec.message());
    WriteCodebook((fs::path(out_dir) / "codebook.txt").string(), prep.codebook);
    for (std::size_t k = 0; k < cfg.num_resolutions(); ++k)
      WriteUnitFile((fs::path(out_dir) / UnitFileName(cfg.resolutions_ms[k])).string(), prep.units[k]);
    std::ofstream side(fs::path(out_dir) / "units.tsv");
    side << "line\tid\tpath\n";
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      side << i + 1 << '\t' << manifest.entries[i].id << '\t' << manifest.Resolve(manifest.entries[i]) << '\n';
    if (!side) throw Error(ErrorKind::kIo, "failed writing units.tsv");
  }
  return prep;
}

/// Pairs manifest audio with the lines of a highest-resolution unit file.
inline std::vector<Utterance> LoadUtterances(const Manifest& manifest, const std::vector<std::vector<int>>& units) {
  if (units.size() != manifest.entries.size())
    throw Error(ErrorKind::kData, std::to_string(units.size()) + " unit lines for " +
                                      std::to_string(manifest.entries.size()) + " manifest entries");
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < units.size(); ++i)
    out.push_back({manifest.entries[i].id, ReadWav(manifest.Resolve(manifest.entries[i])), units[i]});
  return out;
}

}  // namespace mrhubert
