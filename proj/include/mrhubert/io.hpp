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

#include <filesystem>
#include <set>

#include "mrhubert/checkpoint.hpp"
#include "mrhubert/frontend.hpp"

namespace mrhubert {

namespace fs = std::filesystem;

// ---- WAV (16-bit PCM, mono) ----

inline void WriteWav(const std::string& path, const Waveform& wave) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  os.write("RIFF", 4);
  binio::Put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  binio::Put<std::uint32_t>(os, 16);
  binio::Put<std::uint16_t>(os, 1);  // PCM
  binio::Put<std::uint16_t>(os, 1);  // mono
  binio::Put<std::uint32_t>(os, static_cast<std::uint32_t>(wave.sample_rate));
  binio::Put<std::uint32_t>(os, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  binio::Put<std::uint16_t>(os, 2);
  binio::Put<std::uint16_t>(os, 16);
  os.write("data", 4);
  binio::Put<std::uint32_t>(os, data_bytes);
  for (float s : wave.samples) {
    const double scaled = std::round(std::clamp(double(s), -1.0, 1.0) * 32767.0);
    binio::Put<std::int16_t>(os, static_cast<std::int16_t>(scaled));
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing " + path);
}

inline Waveform ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot read " + path);
  char tag[4];
  auto read_tag = [&] {
    if (!is.read(tag, 4)) throw Error(ErrorKind::kData, path + ": truncated WAV header");
    return std::string(tag, 4);
  };
  if (read_tag() != "RIFF") throw Error(ErrorKind::kData, path + ": not a RIFF file");
  binio::Get<std::uint32_t>(is, path);
  if (read_tag() != "WAVE") throw Error(ErrorKind::kData, path + ": not a WAVE file");
  Waveform wave;
  bool have_fmt = false;
  while (true) {
    const std::string id = read_tag();
    const auto size = binio::Get<std::uint32_t>(is, path);
    if (id == "fmt ") {
      const auto format = binio::Get<std::uint16_t>(is, path);
      const auto channels = binio::Get<std::uint16_t>(is, path);
      wave.sample_rate = static_cast<int>(binio::Get<std::uint32_t>(is, path));
      binio::Get<std::uint32_t>(is, path);
      binio::Get<std::uint16_t>(is, path);
      const auto bits = binio::Get<std::uint16_t>(is, path);
      if (format != 1 || channels != 1 || bits != 16)
        throw Error(ErrorKind::kData, path + ": only 16-bit PCM mono WAV is supported");
      is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorKind::kData, path + ": data chunk before fmt chunk");
      wave.samples.resize(size / 2);
      for (auto& s : wave.samples) s = static_cast<float>(binio::Get<std::int16_t>(is, path)) / 32767.0f;
      return wave;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
}

// ---- manifest ----

struct ManifestEntry {
  std::string id;
  std::string path;  // as written; resolved against the manifest directory
  std::size_t num_samples = 0;
};

struct Manifest {
  std::string directory;
  std::vector<ManifestEntry> entries;

  std::string Resolve(const ManifestEntry& e) const {
    const fs::path p(e.path);
    return p.is_absolute() || directory.empty() ? p.string() : (fs::path(directory) / p).string();
  }
};

inline void WriteManifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write manifest " + path);
  os << "id\tpath\tnum_samples\n";
  for (const auto& e : m.entries) os << e.id << '\t' << e.path << '\t' << e.num_samples << '\n';
  if (!os) throw Error(ErrorKind::kIo, "failed writing manifest " + path);
}

/// Reads a manifest; with `verify`, every audio file is opened and its sample
/// count checked.
inline Manifest ReadManifest(const std::string& path, bool verify = true) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot read manifest " + path);
  Manifest m;
  m.directory = fs::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("id\t", 0) == 0) continue;
    if (config_detail::Trim(line).empty()) continue;
    const auto parts = config_detail::Split(line, '\t');
    if (parts.size() != 3) throw Error(ErrorKind::kData, path + ":" + std::to_string(lineno) + ": expected 3 columns");
    ManifestEntry e{parts[0], parts[1], config_detail::ParseNumber<std::size_t>("num_samples", parts[2])};
    if (!seen.insert(e.id).second)
      throw Error(ErrorKind::kData, path + ":" + std::to_string(lineno) + ": duplicate id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  if (verify)
    for (const auto& e : m.entries) {
      const Waveform w = ReadWav(m.Resolve(e));
      if (w.samples.size() != e.num_samples)
        throw Error(ErrorKind::kData, "manifest says " + std::to_string(e.num_samples) + " samples for '" + e.id +
                                          "', file has " + std::to_string(w.samples.size()));
    }
  return m;
}

// ---- synthetic corpus ----

/// Deterministic utterance: low-passed noise whose cutoff random-walks, plus
/// two linear chirps with random endpoints.
inline Waveform SynthesizeUtterance(std::size_t n_samples, std::mt19937_64& rng) {
  Waveform w;
  w.samples.resize(n_samples);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double alpha = 0.2 + 0.6 * uni(rng), state = 0.0;
  const double noise_gain = 0.2 + 0.3 * uni(rng);
  struct Chirp {
    double f0, f1, amp, phase;
  };
  Chirp chirps[2];
  for (auto& c : chirps) c = {100.0 + 2900.0 * uni(rng), 100.0 + 2900.0 * uni(rng), 0.2 + 0.5 * uni(rng), 0.0};
  const double dur = double(n_samples) / kSampleRate;
  constexpr double kTwoPi = 6.283185307179586;
  double peak = 1e-9;
  std::vector<double> y(n_samples);
  for (std::size_t t = 0; t < n_samples; ++t) {
    alpha = std::clamp(alpha + 0.002 * gauss(rng), 0.05, 0.95);
    state = alpha * state + (1.0 - alpha) * gauss(rng);
    double v = noise_gain * state;
    const double frac = dur > 0 ? double(t) / kSampleRate / dur : 0.0;
    for (auto& c : chirps) {
      c.phase += kTwoPi * (c.f0 + (c.f1 - c.f0) * frac) / kSampleRate;
      v += c.amp * std::sin(c.phase);
    }
    y[t] = v;
    peak = std::max(peak, std::abs(v));
  }
  for (std::size_t t = 0; t < n_samples; ++t) w.samples[t] = static_cast<float>(0.8 * y[t] / peak);
  return w;
}

/// Writes n WAV files under out_dir/wav and out_dir/manifest.tsv.
inline Manifest SynthData(std::size_t n_utts, double min_seconds, double max_seconds, std::uint64_t seed,
                          const std::string& out_dir) {
  if (n_utts == 0) throw Error(ErrorKind::kUsage, "need at least one utterance");
  if (!(min_seconds > 0.0) || max_seconds < min_seconds)
    throw Error(ErrorKind::kUsage, "invalid duration range [" + std::to_string(min_seconds) + ", " +
                                       std::to_string(max_seconds) + "]");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir + ": " + ec.message());
  Manifest m;
  m.directory = out_dir;
  const auto lo = static_cast<std::size_t>(std::llround(min_seconds * kSampleRate));
  const auto hi = static_cast<std::size_t>(std::llround(max_seconds * kSampleRate));
  for (std::size_t i = 0; i < n_utts; ++i) {
    std::seed_seq ss{std::uint64_t(seed), std::uint64_t(i), std::uint64_t(0x5eed)};
    std::mt19937_64 rng(ss);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05zu", i);
    const std::string rel = std::string("wav/") + id + ".wav";
    Waveform w = SynthesizeUtterance(n, rng);
    WriteWav((fs::path(out_dir) / rel).string(), w);
    m.entries.push_back({id, rel, n});
  }
  WriteManifest((fs::path(out_dir) / "manifest.tsv").string(), m);
  return m;
}

// ---- feature container ----

constexpr char kFeatureMagic[8] = {'M', 'R', 'H', 'F', 'E', 'A', 'T', '\0'};
constexpr std::uint32_t kFeatureVersion = 1;

template <RealScalar Real>
void WriteFeatures(const std::string& path, const std::vector<NamedArray<Real>>& states) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path);
  os.write(kFeatureMagic, 8);
  binio::Put(os, kFeatureVersion);
  binio::Put<std::uint64_t>(os, states.size());
  for (const auto& s : states) {
    binio::PutString(os, s.name);
    binio::Put<std::int32_t>(os, s.resolution_ms);
    binio::PutArray(os, s.value);
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing " + path);
}

inline std::vector<NamedArray<float>> ReadFeatures(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot read " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw Error(ErrorKind::kData, path + ": not a feature container");
  const auto version = binio::Get<std::uint32_t>(is, path);
  if (version != kFeatureVersion)
    throw Error(ErrorKind::kData, path + ": feature container version " + std::to_string(version));
  const auto n = binio::Get<std::uint64_t>(is, path);
  std::vector<NamedArray<float>> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedArray<float> s;
    s.name = binio::GetString(is, path);
    s.resolution_ms = binio::Get<std::int32_t>(is, path);
    s.value = binio::GetArray(is, path);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mrhubert
