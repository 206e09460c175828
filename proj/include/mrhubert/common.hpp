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

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mrhubert {

enum class ErrorKind {
  kInvalidResolution,
  kInvalidConfig,
  kShape,
  kSequenceTooShort,
  kEmptySequence,
  kNumeric,
  kNotFound,
  kInsufficientData,
  kInvalidUnit,
  kUnsupportedRatio,
  kData,
  kIo,
  kUsage,
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidResolution: return "invalid-resolution";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kSequenceTooShort: return "sequence-too-short";
    case ErrorKind::kEmptySequence: return "empty-sequence";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kInvalidUnit: return "invalid-unit";
    case ErrorKind::kUnsupportedRatio: return "unsupported-ratio";
    case ErrorKind::kData: return "data";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kUsage: return "usage";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can emit structured diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <class Real>
concept RealScalar = std::same_as<Real, float> || std::same_as<Real, double>;

inline std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <class T>
std::string JoinList(const std::vector<T>& values, std::string_view sep = ",") {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << sep;
    os << values[i];
  }
  return os.str();
}

inline std::size_t CeilDiv(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace mrhubert
