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
#include <limits>
#include <sstream>

#include "mrhubert/masking.hpp"
#include "mrhubert/tensor.hpp"

namespace mrhubert {

struct Codebook {
  Tensor<double> centroids;  // (K x d)
  std::size_t iterations = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;  // one entry per assignment pass

  std::size_t K() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.cols(); }
};

struct UnitSequence {
  std::vector<int> units;
  int resolution_ms = 20;
  std::string source;

  std::size_t size() const { return units.size(); }
};

namespace kmeans_detail {

inline double SquaredDistance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

/// Nearest centroid (lowest index on ties) and its squared distance.
inline std::pair<std::size_t, double> Nearest(const double* x, const Tensor<double>& c) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.rows(); ++k) {
    const double dist = SquaredDistance(x, c.data() + k * c.cols(), c.cols());
    if (dist < best_d) {
      best_d = dist;
      best = k;
    }
  }
  return {best, best_d};
}

inline double AssignAll(const Tensor<double>& x, const Tensor<double>& c, std::vector<std::size_t>& labels) {
  labels.resize(x.rows());
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto [k, dist] = Nearest(x.data() + i * x.cols(), c);
    labels[i] = k;
    inertia += dist;
  }
  return inertia;
}

}  // namespace kmeans_detail

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below `tol` or `max_iters` updates have run. Empty clusters keep
/// their previous centroid, so inertia never increases.
inline Codebook FitKMeans(const Tensor<double>& features, std::size_t K, std::size_t max_iters, double tol,
                          std::uint64_t seed) {
  using namespace kmeans_detail;
  RequireMatrix(features, "k-means features");
  const std::size_t M = features.rows(), d = features.cols();
  if (K == 0) throw Error(ErrorKind::kInvalidConfig, "K must be positive");
  if (M < K)
    throw Error(ErrorKind::kInsufficientData, std::to_string(M) + " points for " + std::to_string(K) + " clusters");
  if (!AllFinite(features)) throw Error(ErrorKind::kNumeric, "k-means features contain non-finite values");

  std::mt19937_64 rng(seed);
  Codebook cb;
  cb.seed = seed;
  cb.centroids = Tensor<double>::Matrix(K, d);
  auto set_centroid = [&](std::size_t k, std::size_t i) {
    std::copy_n(features.data() + i * d, d, cb.centroids.data() + k * d);
  };

  set_centroid(0, std::uniform_int_distribution<std::size_t>(0, M - 1)(rng));
  std::vector<double> closest(M);
  for (std::size_t i = 0; i < M; ++i) closest[i] = SquaredDistance(features.data() + i * d, cb.centroids.data(), d);
  bool degenerate = false;
  for (std::size_t k = 1; k < K; ++k) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    std::size_t pick = 0;
    if (total <= 0.0) {
      degenerate = true;
      pick = std::uniform_int_distribution<std::size_t>(0, M - 1)(rng);
    } else {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = M - 1;
      for (std::size_t i = 0; i < M; ++i) {
        r -= closest[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    set_centroid(k, pick);
    const double* c = cb.centroids.data() + k * d;
    for (std::size_t i = 0; i < M; ++i)
      closest[i] = std::min(closest[i], SquaredDistance(features.data() + i * d, c, d));
  }
  if (degenerate) Warn("k-means: fewer distinct points than clusters; some centroids are duplicates");

  std::vector<std::size_t> labels;
  std::vector<double> sums(K * d);
  std::vector<std::size_t> counts(K);
  for (std::size_t it = 0; it < max_iters; ++it) {
    cb.inertia_history.push_back(AssignAll(features, cb.centroids, labels));
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < M; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < d; ++j) sums[labels[i] * d + j] += features(i, j);
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k] == 0) continue;
      double moved = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double next = sums[k * d + j] / double(counts[k]);
        const double delta = next - cb.centroids(k, j);
        moved += delta * delta;
        cb.centroids(k, j) = next;
      }
      shift = std::max(shift, std::sqrt(moved));
    }
    cb.iterations = it + 1;
    if (shift < tol) break;
  }
  cb.inertia = AssignAll(features, cb.centroids, labels);
  cb.inertia_history.push_back(cb.inertia);
  return cb;
}

/// Nearest centroid per frame by squared Euclidean distance; lowest index
/// wins ties.
template <RealScalar Real>
UnitSequence Assign(const Tensor<Real>& features, const Codebook& cb, int resolution_ms = 20,
                    std::string source = {}) {
  RequireMatrix(features, "assign features");
  if (features.cols() != cb.dim())
    throw Error(ErrorKind::kShape, "features " + ShapeString(features.shape()) + " vs codebook dim " +
                                       std::to_string(cb.dim()));
  UnitSequence out{{}, resolution_ms, std::move(source)};
  out.units.reserve(features.rows());
  std::vector<double> row(features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::copy(features.row(i).begin(), features.row(i).end(), row.begin());
    out.units.push_back(static_cast<int>(kmeans_detail::Nearest(row.data(), cb.centroids).first));
  }
  return out;
}

/// Every factor-th unit starting at 0.
inline UnitSequence SubsampleUnits(const UnitSequence& units, std::size_t factor) {
  if (factor == 0) throw Error(ErrorKind::kInvalidConfig, "subsample factor must be positive");
  UnitSequence out{{}, units.resolution_ms * static_cast<int>(factor), units.source};
  for (std::size_t j = 0; j < units.units.size(); j += factor) out.units.push_back(units.units[j]);
  return out;
}

/// Targets at a coarser level: frame j takes the high-resolution unit at
/// min(floor(j * r_low / r_high), L - 1). Coincides with SubsampleUnits when
/// r_low / r_high is an integer and `length` is the ceil length.
inline std::vector<int> LevelTargets(const std::vector<int>& high, int r_high_ms, int r_low_ms, std::size_t length) {
  if (high.empty()) {
    if (length == 0) return {};
    throw Error(ErrorKind::kEmptySequence, "no high-resolution units to resample");
  }
  const RateFactors f = ReducedFraction(r_high_ms, r_low_ms);
  std::vector<int> out(length);
  for (std::size_t j = 0; j < length; ++j) out[j] = high[std::min(j * f.down / f.up, high.size() - 1)];
  return out;
}

// ---- files ----

inline void WriteCodebook(const std::string& path, const Codebook& cb) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot write codebook " + path);
  f << "mrhubert-codebook 1\n" << cb.K() << ' ' << cb.dim() << '\n';
  f << "iterations " << cb.iterations << " inertia " << config_detail::FormatDouble(cb.inertia) << " seed " << cb.seed
    << '\n';
  for (std::size_t k = 0; k < cb.K(); ++k) {
    for (std::size_t j = 0; j < cb.dim(); ++j) f << (j ? " " : "") << config_detail::FormatDouble(cb.centroids(k, j));
    f << '\n';
  }
  if (!f) throw Error(ErrorKind::kIo, "failed writing codebook " + path);
}

inline Codebook ReadCodebook(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot read codebook " + path);
  std::string magic, word;
  int version = 0;
  std::size_t K = 0, d = 0;
  f >> magic >> version >> K >> d;
  if (magic != "mrhubert-codebook") throw Error(ErrorKind::kData, path + ": not a codebook file");
  if (version != 1) throw Error(ErrorKind::kData, path + ": unsupported codebook version " + std::to_string(version));
  Codebook cb;
  f >> word >> cb.iterations >> word >> cb.inertia >> word >> cb.seed;
  cb.centroids = Tensor<double>::Matrix(K, d);
  for (auto& v : cb.centroids.storage())
    if (!(f >> v)) throw Error(ErrorKind::kData, path + ": truncated centroid data");
  return cb;
}

/// One utterance per line, space-separated decimal units.
inline void WriteUnitFile(const std::string& path, const std::vector<std::vector<int>>& lines) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot write unit file " + path);
  for (const auto& line : lines) {
    for (std::size_t i = 0; i < line.size(); ++i) f << (i ? " " : "") << line[i];
    f << '\n';
  }
  if (!f) throw Error(ErrorKind::kIo, "failed writing unit file " + path);
}

inline std::vector<std::vector<int>> ReadUnitFile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot read unit file " + path);
  std::vector<std::vector<int>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    std::istringstream ss(line);
    std::vector<int> units;
    std::string tok;
    while (ss >> tok) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0)
        throw Error(ErrorKind::kData, path + ":" + std::to_string(n) + ": bad unit '" + tok + "'");
      units.push_back(v);
    }
    out.push_back(std::move(units));
  }
  return out;
}

}  // namespace mrhubert
