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

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mrhubert/common.hpp"

namespace mrhubert {

/// Dense row-major array. Sequences are stored as (frames x channels); conv
/// kernels as (out x in/groups x width).
template <RealScalar Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(Product(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<Real> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (Product(shape_) != data_.size())
      throw Error(ErrorKind::kShape, "value count " + std::to_string(data_.size()) +
                                         " does not match shape " + ShapeString(shape_));
  }

  static Tensor Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0)) {
    return Tensor({rows, cols}, fill);
  }

  static Tensor Vector(std::size_t n, Real fill = Real(0)) { return Tensor({n}, fill); }

  static Tensor FromRows(const std::vector<std::vector<Real>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Tensor t = Matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw Error(ErrorKind::kShape, "ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
    }
    return t;
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : data_.size() / std::max<std::size_t>(1, shape_[0]); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  Real& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }
  Real operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void Fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  template <RealScalar Other>
  Tensor<Other> Cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t Product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

template <RealScalar Real>
void RequireSameShape(const Tensor<Real>& a, const Tensor<Real>& b, std::string_view what) {
  if (!a.SameShape(b))
    throw Error(ErrorKind::kShape, std::string(what) + ": " + ShapeString(a.shape()) +
                                       " vs " + ShapeString(b.shape()));
}

template <RealScalar Real>
void RequireMatrix(const Tensor<Real>& a, std::string_view what) {
  if (a.rank() != 2)
    throw Error(ErrorKind::kShape, std::string(what) + ": expected a matrix, got " +
                                       ShapeString(a.shape()));
}

template <RealScalar Real>
bool AllFinite(const Tensor<Real>& t) {
  return std::all_of(t.storage().begin(), t.storage().end(),
                     [](Real v) { return std::isfinite(v); });
}

/// Truncated normal (resampled beyond two standard deviations).
template <RealScalar Real>
void FillTruncatedNormal(Tensor<Real>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Real& v : t.storage()) {
    double x = normal(rng);
    while (std::abs(x) > 2.0) x = normal(rng);
    v = static_cast<Real>(x * stddev);
  }
}

template <RealScalar Real>
void FillNormal(Tensor<Real>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Real& v : t.storage()) v = static_cast<Real>(normal(rng));
}

template <RealScalar Real>
void FillUniform(Tensor<Real>& t, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(lo, hi);
  for (Real& v : t.storage()) v = static_cast<Real>(uniform(rng));
}

template <RealScalar Real>
double Dot(const Tensor<Real>& a, const Tensor<Real>& b) {
  RequireSameShape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

template <RealScalar Real>
double MaxAbsDiff(const Tensor<Real>& a, const Tensor<Real>& b) {
  RequireSameShape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

/// Named learnable array with a gradient buffer of identical shape.
template <RealScalar Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void ZeroGrad() {
    if (!grad.SameShape(value)) grad = Tensor<Real>(value.shape());
    grad.Fill(Real(0));
  }
};

}  // namespace mrhubert
