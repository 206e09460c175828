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

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>

#include "mrhubert/common.hpp"

namespace mrhubert {

/// Coprime (up, down) pair realizing the rate change high -> low as
/// upsample-by-up followed by downsample-by-down.
struct RateFactors {
  std::size_t up = 1;
  std::size_t down = 1;

  RateFactors Swapped() const { return {down, up}; }
  friend bool operator==(const RateFactors&, const RateFactors&) = default;
};

inline RateFactors ReducedFraction(long long r_high_ms, long long r_low_ms) {
  if (r_high_ms <= 0 || r_low_ms <= 0)
    throw Error(ErrorKind::kInvalidResolution, "resolutions must be positive, got " + std::to_string(r_high_ms) +
                                                   " and " + std::to_string(r_low_ms));
  const long long g = std::gcd(r_high_ms, r_low_ms);
  return {static_cast<std::size_t>(r_high_ms / g), static_cast<std::size_t>(r_low_ms / g)};
}

struct ConvLayerSpec {
  std::size_t channels = 512;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Waveform feature extractor layout: (channels, kernel, stride) per layer.
struct ConvExtractorSpec {
  std::vector<ConvLayerSpec> layers;
  bool conv_bias = false;

  static ConvExtractorSpec Default(std::size_t channels = 512) {
    ConvExtractorSpec spec;
    spec.layers.push_back({channels, 10, 5});
    for (int i = 0; i < 4; ++i) spec.layers.push_back({channels, 3, 2});
    for (int i = 0; i < 2; ++i) spec.layers.push_back({channels, 2, 2});
    return spec;
  }

  std::size_t TotalStride() const {
    std::size_t s = 1;
    for (const auto& l : layers) s *= l.stride;
    return s;
  }

  std::size_t OutputChannels() const { return layers.empty() ? 1 : layers.back().channels; }

  friend bool operator==(const ConvExtractorSpec&, const ConvExtractorSpec&) = default;
};

enum class SamplingVariant { kFlexible, kSimple };
enum class MaskFill { kZero, kLearned };
enum class LowMaskRule { kAnyOverlap, kAllOverlap };
enum class LossReduction { kMean, kSum };

struct ModelConfig {
  std::vector<int> resolutions_ms{20, 40};
  std::vector<int> layers_per_encoder{4, 4, 4};
  std::size_t attention_dim = 768;
  std::size_t ffn_dim = 3072;
  std::size_t num_heads = 12;
  ConvExtractorSpec frontend = ConvExtractorSpec::Default();
  SamplingVariant sampling_variant = SamplingVariant::kFlexible;
  double phi = 0.5;
  double mask_prob = 0.8;
  std::size_t mask_span = 10;
  std::size_t codebook_size = 1000;
  std::vector<double> loss_weights{1.0, 1.0};
  bool audio_norm = true;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::size_t pre_conv_kernel = 128;
  std::size_t pre_conv_groups = 16;
  // 0 selects a direct D->K head; otherwise D->head_dim->K.
  std::size_t head_dim = 256;
  MaskFill mask_fill = MaskFill::kZero;
  LowMaskRule low_mask_rule = LowMaskRule::kAnyOverlap;
  LossReduction loss_reduction = LossReduction::kMean;
  bool freeze_frontend = false;

  std::size_t num_resolutions() const { return resolutions_ms.size(); }
  std::size_t num_encoders() const { return layers_per_encoder.size(); }
  std::size_t total_layers() const {
    return std::accumulate(layers_per_encoder.begin(), layers_per_encoder.end(), std::size_t{0});
  }

  /// Factors for the transition from resolution level i to level i+1.
  RateFactors StepFactors(std::size_t level) const {
    return ReducedFraction(resolutions_ms.at(level), resolutions_ms.at(level + 1));
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every violated invariant; empty when the configuration is usable.
inline std::vector<std::string> Validate(const ModelConfig& c) {
  std::vector<std::string> v;
  const std::size_t n = c.resolutions_ms.size();
  if (n == 0) v.push_back("resolutions_ms is empty");
  for (int r : c.resolutions_ms)
    if (r <= 0) v.push_back("resolution " + std::to_string(r) + " ms is not positive");
  if (n > 0 && c.layers_per_encoder.size() != 2 * n - 1)
    v.push_back("layer allocation length " + std::to_string(c.layers_per_encoder.size()) + " != 2N-1 = " +
                std::to_string(2 * n - 1));
  for (int l : c.layers_per_encoder)
    if (l < 1) v.push_back("encoder layer count " + std::to_string(l) + " < 1");
  if (c.attention_dim == 0) v.push_back("attention_dim must be positive");
  if (c.ffn_dim == 0) v.push_back("ffn_dim must be positive");
  if (c.num_heads == 0) v.push_back("num_heads must be positive");
  else if (c.attention_dim % c.num_heads != 0)
    v.push_back("D not divisible by heads: " + std::to_string(c.attention_dim) + " % " +
                std::to_string(c.num_heads) + " != 0");
  if (c.loss_weights.size() != n)
    v.push_back("loss_weights has " + std::to_string(c.loss_weights.size()) + " entries for " + std::to_string(n) +
                " resolutions");
  for (double w : c.loss_weights)
    if (!(w >= 0.0)) v.push_back("loss weight " + std::to_string(w) + " is negative");
  if (!(c.mask_prob >= 0.0 && c.mask_prob <= 1.0)) v.push_back("mask_prob outside [0, 1]");
  if (c.mask_span == 0) v.push_back("mask_span must be positive");
  if (c.codebook_size == 0) v.push_back("codebook_size must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) v.push_back("dropout outside [0, 1)");
  if (c.frontend.layers.empty()) v.push_back("frontend has no layers");
  for (const auto& l : c.frontend.layers)
    if (l.channels == 0 || l.kernel == 0 || l.stride == 0) v.push_back("frontend layer has a zero field");
  if (c.pre_conv_kernel > 0) {
    if (c.pre_conv_groups == 0 || c.attention_dim % c.pre_conv_groups != 0)
      v.push_back("pre_conv_groups must divide attention_dim");
  }
  if (c.sampling_variant == SamplingVariant::kSimple) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (c.resolutions_ms[i] <= 0 || c.resolutions_ms[i + 1] <= 0) continue;
      const RateFactors f = ReducedFraction(c.resolutions_ms[i], c.resolutions_ms[i + 1]);
      if (f.up > 1 && f.down > 1)
        v.push_back("simple sampling cannot realize the ratio " + std::to_string(c.resolutions_ms[i]) + ":" +
                    std::to_string(c.resolutions_ms[i + 1]));
    }
  }
  return v;
}

namespace config_detail {

inline std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> Split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(Trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    value = static_cast<T>(std::strtod(text.c_str(), &end));
    if (text.empty() || end != text.c_str() + text.size())
      throw Error(ErrorKind::kInvalidConfig, "key '" + key + "': '" + text + "' is not a number");
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw Error(ErrorKind::kInvalidConfig, "key '" + key + "': '" + text + "' is not an integer");
  }
  return value;
}

template <class T>
std::vector<T> ParseList(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (Trim(text).empty()) return out;
  for (const auto& item : Split(text, ',')) out.push_back(ParseNumber<T>(key, item));
  return out;
}

inline bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(ErrorKind::kInvalidConfig, "key '" + key + "': '" + text + "' is not a boolean");
}

inline std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace config_detail

/// Sets one key from its text form. Unknown keys are rejected.
inline void SetConfigValue(ModelConfig& c, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const std::string value = Trim(raw);
  if (key == "resolutions_ms") c.resolutions_ms = ParseList<int>(key, value);
  else if (key == "layers_per_encoder") c.layers_per_encoder = ParseList<int>(key, value);
  else if (key == "attention_dim") c.attention_dim = ParseNumber<std::size_t>(key, value);
  else if (key == "ffn_dim") c.ffn_dim = ParseNumber<std::size_t>(key, value);
  else if (key == "num_heads") c.num_heads = ParseNumber<std::size_t>(key, value);
  else if (key == "frontend_layers") {
    c.frontend.layers.clear();
    for (const auto& item : Split(value, ',')) {
      const auto parts = Split(item, ':');
      if (parts.size() != 3)
        throw Error(ErrorKind::kInvalidConfig, "frontend layer '" + item + "' is not channels:kernel:stride");
      c.frontend.layers.push_back({ParseNumber<std::size_t>(key, parts[0]), ParseNumber<std::size_t>(key, parts[1]),
                                   ParseNumber<std::size_t>(key, parts[2])});
    }
  } else if (key == "frontend_conv_bias") c.frontend.conv_bias = ParseBool(key, value);
  else if (key == "sampling_variant") {
    if (value == "flexible") c.sampling_variant = SamplingVariant::kFlexible;
    else if (value == "simple") c.sampling_variant = SamplingVariant::kSimple;
    else throw Error(ErrorKind::kInvalidConfig, "sampling_variant must be flexible or simple");
  } else if (key == "phi") c.phi = ParseNumber<double>(key, value);
  else if (key == "mask_prob") c.mask_prob = ParseNumber<double>(key, value);
  else if (key == "mask_span") c.mask_span = ParseNumber<std::size_t>(key, value);
  else if (key == "codebook_size") c.codebook_size = ParseNumber<std::size_t>(key, value);
  else if (key == "loss_weights") c.loss_weights = ParseList<double>(key, value);
  else if (key == "audio_norm") c.audio_norm = ParseBool(key, value);
  else if (key == "dropout") c.dropout = ParseNumber<double>(key, value);
  else if (key == "seed") c.seed = ParseNumber<std::uint64_t>(key, value);
  else if (key == "pre_conv_kernel") c.pre_conv_kernel = ParseNumber<std::size_t>(key, value);
  else if (key == "pre_conv_groups") c.pre_conv_groups = ParseNumber<std::size_t>(key, value);
  else if (key == "head_dim") c.head_dim = ParseNumber<std::size_t>(key, value);
  else if (key == "mask_fill") {
    if (value == "zero") c.mask_fill = MaskFill::kZero;
    else if (value == "learned") c.mask_fill = MaskFill::kLearned;
    else throw Error(ErrorKind::kInvalidConfig, "mask_fill must be zero or learned");
  } else if (key == "low_mask_rule") {
    if (value == "any") c.low_mask_rule = LowMaskRule::kAnyOverlap;
    else if (value == "all") c.low_mask_rule = LowMaskRule::kAllOverlap;
    else throw Error(ErrorKind::kInvalidConfig, "low_mask_rule must be any or all");
  } else if (key == "loss_reduction") {
    if (value == "mean") c.loss_reduction = LossReduction::kMean;
    else if (value == "sum") c.loss_reduction = LossReduction::kSum;
    else throw Error(ErrorKind::kInvalidConfig, "loss_reduction must be mean or sum");
  } else if (key == "freeze_frontend") c.freeze_frontend = ParseBool(key, value);
  else throw Error(ErrorKind::kInvalidConfig, "unknown key '" + key + "'");
}

/// `key=value` form used by `--set`.
inline void ApplyOverride(ModelConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error(ErrorKind::kUsage, "override '" + assignment + "' is not key=value");
  SetConfigValue(c, config_detail::Trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline std::string Serialize(const ModelConfig& c) {
  using config_detail::FormatDouble;
  std::ostringstream os;
  os << "# mrhubert model config v1\n";
  os << "resolutions_ms = " << JoinList(c.resolutions_ms) << '\n';
  os << "layers_per_encoder = " << JoinList(c.layers_per_encoder) << '\n';
  os << "attention_dim = " << c.attention_dim << '\n';
  os << "ffn_dim = " << c.ffn_dim << '\n';
  os << "num_heads = " << c.num_heads << '\n';
  os << "frontend_layers = ";
  for (std::size_t i = 0; i < c.frontend.layers.size(); ++i) {
    const auto& l = c.frontend.layers[i];
    os << (i ? "," : "") << l.channels << ':' << l.kernel << ':' << l.stride;
  }
  os << '\n';
  os << "frontend_conv_bias = " << (c.frontend.conv_bias ? "true" : "false") << '\n';
  os << "sampling_variant = " << (c.sampling_variant == SamplingVariant::kFlexible ? "flexible" : "simple") << '\n';
  os << "phi = " << FormatDouble(c.phi) << '\n';
  os << "mask_prob = " << FormatDouble(c.mask_prob) << '\n';
  os << "mask_span = " << c.mask_span << '\n';
  os << "codebook_size = " << c.codebook_size << '\n';
  os << "loss_weights = ";
  for (std::size_t i = 0; i < c.loss_weights.size(); ++i) os << (i ? "," : "") << FormatDouble(c.loss_weights[i]);
  os << '\n';
  os << "audio_norm = " << (c.audio_norm ? "true" : "false") << '\n';
  os << "dropout = " << FormatDouble(c.dropout) << '\n';
  os << "seed = " << c.seed << '\n';
  os << "pre_conv_kernel = " << c.pre_conv_kernel << '\n';
  os << "pre_conv_groups = " << c.pre_conv_groups << '\n';
  os << "head_dim = " << c.head_dim << '\n';
  os << "mask_fill = " << (c.mask_fill == MaskFill::kZero ? "zero" : "learned") << '\n';
  os << "low_mask_rule = " << (c.low_mask_rule == LowMaskRule::kAnyOverlap ? "any" : "all") << '\n';
  os << "loss_reduction = " << (c.loss_reduction == LossReduction::kMean ? "mean" : "sum") << '\n';
  os << "freeze_frontend = " << (c.freeze_frontend ? "true" : "false") << '\n';
  return os.str();
}

/// Parses the text form. Keys not present keep their defaults.
inline ModelConfig ParseConfig(std::string_view text, ModelConfig base = {}) {
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = config_detail::Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kInvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    SetConfigValue(base, config_detail::Trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return base;
}

inline ModelConfig LoadConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

// ---------------------------------------------------------------------------
// Presets

namespace presets_detail {

inline ModelConfig Base() { return ModelConfig{}; }

inline ModelConfig Large() {
  ModelConfig c;
  c.layers_per_encoder = {8, 8, 8};
  c.attention_dim = 1024;
  c.ffn_dim = 4096;
  c.num_heads = 16;
  c.dropout = 0.0;
  c.audio_norm = false;
  return c;
}

inline ModelConfig SingleResolution(ModelConfig c, int layers) {
  c.resolutions_ms = {20};
  c.layers_per_encoder = {layers};
  c.loss_weights = {1.0};
  return c;
}

inline ModelConfig Tiny() {
  ModelConfig c;
  c.attention_dim = 32;
  c.ffn_dim = 64;
  c.num_heads = 4;
  c.layers_per_encoder = {1, 1, 1};
  c.codebook_size = 8;
  c.frontend = ConvExtractorSpec::Default(32);
  // A pre-conv wider than the utterance gives every frame a distinct
  // positional signature, which masked-span overfitting relies on.
  c.pre_conv_kernel = 128;
  c.pre_conv_groups = 16;
  c.head_dim = 0;
  c.dropout = 0.0;
  return c;
}

inline ModelConfig TinyGrad() {
  ModelConfig c = Tiny();
  c.attention_dim = 8;
  c.ffn_dim = 16;
  c.num_heads = 2;
  c.codebook_size = 5;
  c.frontend = ConvExtractorSpec::Default(4);
  c.pre_conv_kernel = 8;
  c.pre_conv_groups = 2;
  c.mask_span = 2;
  return c;
}

}  // namespace presets_detail

inline const std::map<std::string, ModelConfig (*)()>& PresetTable() {
  using namespace presets_detail;
  static const std::map<std::string, ModelConfig (*)()> table = {
      {"mono-base", [] { return Base(); }},
      {"mono-large", [] { return Large(); }},
      {"multi-base", [] { return Base(); }},
      {"hubert-base-equiv", [] { return SingleResolution(Base(), 12); }},
      {"hubert-large-equiv", [] { return SingleResolution(Large(), 24); }},
      {"B.1-a", [] { auto c = Base(); c.layers_per_encoder = {2, 4, 6}; return c; }},
      {"B.1-b", [] { auto c = Base(); c.layers_per_encoder = {5, 2, 5}; return c; }},
      {"B.1-c", [] { auto c = Base(); c.layers_per_encoder = {6, 4, 2}; return c; }},
      {"B.2-a", [] { auto c = Base(); c.resolutions_ms = {20, 40, 80}; c.layers_per_encoder = {3, 2, 2, 2, 3};
                     c.loss_weights = {1, 1, 1}; return c; }},
      {"B.2-b", [] { auto c = Base(); c.resolutions_ms = {20, 40, 80}; c.layers_per_encoder = {2, 2, 4, 2, 2};
                     c.loss_weights = {1, 1, 1}; return c; }},
      {"B.2-c", [] { auto c = Base(); c.resolutions_ms = {20, 40, 100}; c.layers_per_encoder = {2, 2, 2, 2, 2};
                     c.loss_weights = {1, 1, 1}; return c; }},
      {"B.3-a", [] { auto c = Base(); c.sampling_variant = SamplingVariant::kSimple; return c; }},
      {"B.4-a", [] { auto c = Base(); c.loss_weights = {1, 0}; return c; }},
      {"B.4-b", [] { auto c = Base(); c.loss_weights = {1, 0}; c.sampling_variant = SamplingVariant::kSimple;
                     return c; }},
      {"B.5-a", [] { auto c = Base(); c.resolutions_ms = {20, 20}; return c; }},
      {"B.6-a", [] { auto c = Base(); c.layers_per_encoder = {3, 3, 3}; return c; }},
      {"B.6-b", [] { auto c = Base(); c.layers_per_encoder = {3, 3, 3}; c.resolutions_ms = {20, 20}; return c; }},
      {"B.8-a", [] { return Large(); }},
      {"B.8-b", [] { auto c = Large(); c.audio_norm = true; return c; }},
      {"B.8-g", [] { auto c = Large(); c.audio_norm = true; c.layers_per_encoder = {10, 4, 10}; return c; }},
      {"B.8-i", [] { auto c = Large(); c.audio_norm = true; c.sampling_variant = SamplingVariant::kSimple;
                     return c; }},
      {"tiny", [] { return Tiny(); }},
      {"tiny-grad", [] { return TinyGrad(); }},
      {"tiny-3res", [] { auto c = Tiny(); c.resolutions_ms = {20, 40, 80}; c.layers_per_encoder = {1, 1, 1, 1, 1};
                         c.loss_weights = {1, 1, 1}; return c; }},
  };
  return table;
}

inline std::vector<std::string> PresetNames() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : PresetTable()) names.push_back(name);
  return names;
}

inline ModelConfig Preset(const std::string& name) {
  const auto& table = PresetTable();
  const auto it = table.find(name);
  if (it == table.end())
    throw Error(ErrorKind::kNotFound, "unknown preset '" + name + "'; valid presets: " + JoinList(PresetNames(), " "));
  return it->second();
}

}  // namespace mrhubert
