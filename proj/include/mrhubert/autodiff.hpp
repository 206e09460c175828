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

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep over the tape is a valid topological order for backpropagation.

#pragma once

#include <deque>
#include <functional>

#include "mrhubert/tensor.hpp"

namespace mrhubert {

template <RealScalar Real>
class Tape;

/// Handle to a value recorded on a tape.
template <RealScalar Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <RealScalar Real>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<Real>& grad_out)>;

  /// A non-recording tape still evaluates values but stores no closures.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var<Real> Constant(Tensor<Real> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, {}, false});
    return {this, nodes_.size() - 1};
  }

  /// Leaf that reads an external array in place and takes no gradient.
  Var<Real> ConstantRef(const Tensor<Real>& value) {
    nodes_.push_back(Node{{}, &value, {}, nullptr, {}, false});
    return {this, nodes_.size() - 1};
  }

  /// Leaf that reads the parameter in place; backward accumulates into p.grad.
  Var<Real> Param(Parameter<Real>& p) {
    nodes_.push_back(Node{{}, &p.value, {}, record_ ? &p : nullptr, {}, record_});
    return {this, nodes_.size() - 1};
  }

  const Tensor<Real>& value(Var<Real> v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
  }

  bool needs_grad(Var<Real> v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer for an input; nullptr when the input takes no gradient.
  Tensor<Real>* GradFor(Var<Real> v) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty() && !value(v).empty()) n.grad = Tensor<Real>(value(v).shape());
    return &n.grad;
  }

  const Tensor<Real>* GradOf(Var<Real> v) const {
    const Node& n = nodes_[v.id];
    return n.grad.empty() ? nullptr : &n.grad;
  }

  /// Records an op result. `backward` is kept only if some input needs a gradient.
  Var<Real> Push(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn backward) {
    return Push(std::move(value), std::vector<Var<Real>>(inputs), std::move(backward));
  }

  Var<Real> Push(Tensor<Real> value, const std::vector<Var<Real>>& inputs, BackwardFn backward) {
    bool any = false;
    if (record_)
      for (const auto& in : inputs) any = any || nodes_[in.id].needs_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, any ? std::move(backward) : BackwardFn{}, any});
    return {this, nodes_.size() - 1};
  }

  /// Backpropagates from a 1x1 output, accumulating into parameter gradients.
  void Backward(Var<Real> output) {
    if (!record_) throw Error(ErrorKind::kUsage, "backward on a non-recording tape");
    if (value(output).size() != 1)
      throw Error(ErrorKind::kShape, "backward needs a scalar output, got " +
                                         ShapeString(value(output).shape()));
    Tensor<Real>* seed = GradFor(output);
    if (!seed) return;
    seed->Fill(Real(1));
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(n.grad);
      if (n.param) {
        if (!n.param->grad.SameShape(n.param->value)) n.param->ZeroGrad();
        auto& dst = n.param->grad.storage();
        const auto& src = n.grad.storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    const Tensor<Real>* ref;
    Tensor<Real> grad;
    Parameter<Real>* param;
    BackwardFn backward;
    bool needs_grad;
  };

  bool record_;
  std::deque<Node> nodes_;
};

namespace ad {

namespace detail {

template <RealScalar Real>
void AddInto(Tensor<Real>* dst, const Tensor<Real>& src, Real scale = Real(1)) {
  if (!dst) return;
  auto& d = dst->storage();
  const auto& s = src.storage();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// c(m x n) += a(m x k) * b(k x n)
template <RealScalar Real>
void GemmNN(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    const Real* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      if (av == Real(0)) continue;
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c(m x n) += a(m x k) * b(n x k)^T
template <RealScalar Real>
void GemmNT(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* bj = b + j * k;
      Real s = 0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c(k x n) += a(m x k)^T * b(m x n)
template <RealScalar Real>
void GemmTN(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    const Real* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      if (av == Real(0)) continue;
      Real* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

inline double GeluValue(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double GeluDerivative(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace detail

/// x(L x Din) * w(Din x Dout) + b(Dout).
template <RealScalar Real>
Var<Real> Affine(Var<Real> x, Var<Real> w, Var<Real>* b = nullptr) {
  Tape<Real>& tape = *x.tape;
  const auto& xv = x.value();
  const auto& wv = w.value();
  RequireMatrix(xv, "affine input");
  RequireMatrix(wv, "affine weight");
  if (xv.cols() != wv.rows())
    throw Error(ErrorKind::kShape, "affine: input " + ShapeString(xv.shape()) + " vs weight " +
                                       ShapeString(wv.shape()));
  const std::size_t L = xv.rows(), din = wv.rows(), dout = wv.cols();
  Tensor<Real> out = Tensor<Real>::Matrix(L, dout);
  if (b) {
    const auto& bv = b->value();
    if (bv.size() != dout)
      throw Error(ErrorKind::kShape, "affine bias " + ShapeString(bv.shape()) + " vs output width " +
                                         std::to_string(dout));
    for (std::size_t i = 0; i < L; ++i) std::copy(bv.data(), bv.data() + dout, out.data() + i * dout);
  }
  detail::GemmNN(xv.data(), wv.data(), out.data(), L, din, dout);
  std::vector<Var<Real>> inputs{x, w};
  Var<Real> bias = b ? *b : Var<Real>{};
  if (b) inputs.push_back(*b);
  const bool has_bias = b != nullptr;
  return tape.Push(std::move(out), inputs, [x, w, bias, has_bias, L, din, dout](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    if (auto* gx = t.GradFor(x)) detail::GemmNT(g.data(), w.value().data(), gx->data(), L, dout, din);
    if (auto* gw = t.GradFor(w)) detail::GemmTN(x.value().data(), g.data(), gw->data(), L, din, dout);
    if (has_bias) {
      if (auto* gb = t.GradFor(bias))
        for (std::size_t i = 0; i < L; ++i)
          for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += g(i, j);
    }
  });
}

template <RealScalar Real>
Var<Real> Affine(Var<Real> x, Var<Real> w, Var<Real> b) {
  return Affine(x, w, &b);
}

/// a(m x k) * b(k x n).
template <RealScalar Real>
Var<Real> MatMul(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw Error(ErrorKind::kShape, "matmul: " + ShapeString(av.shape()) + " vs " + ShapeString(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<Real> out = Tensor<Real>::Matrix(m, n);
  detail::GemmNN(av.data(), bv.data(), out.data(), m, k, n);
  return a.tape->Push(std::move(out), {a, b}, [a, b, m, k, n](const Tensor<Real>& g) {
    Tape<Real>& t = *a.tape;
    if (auto* ga = t.GradFor(a)) detail::GemmNT(g.data(), b.value().data(), ga->data(), m, n, k);
    if (auto* gb = t.GradFor(b)) detail::GemmTN(a.value().data(), g.data(), gb->data(), m, k, n);
  });
}

/// a(m x k) * b(n x k)^T.
template <RealScalar Real>
Var<Real> MatMulNT(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    throw Error(ErrorKind::kShape, "matmul_nt: " + ShapeString(av.shape()) + " vs " + ShapeString(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<Real> out = Tensor<Real>::Matrix(m, n);
  detail::GemmNT(av.data(), bv.data(), out.data(), m, k, n);
  return a.tape->Push(std::move(out), {a, b}, [a, b, m, k, n](const Tensor<Real>& g) {
    Tape<Real>& t = *a.tape;
    // ga = g * b ; gb = g^T * a
    if (auto* ga = t.GradFor(a)) detail::GemmNN(g.data(), b.value().data(), ga->data(), m, n, k);
    if (auto* gb = t.GradFor(b)) detail::GemmTN(g.data(), a.value().data(), gb->data(), m, n, k);
  });
}

template <RealScalar Real>
Var<Real> Add(Var<Real> a, Var<Real> b) {
  RequireSameShape(a.value(), b.value(), "add");
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->Push(std::move(out), {a, b}, [a, b](const Tensor<Real>& g) {
    detail::AddInto(a.tape->GradFor(a), g);
    detail::AddInto(a.tape->GradFor(b), g);
  });
}

template <RealScalar Real>
Var<Real> Scale(Var<Real> a, Real c) {
  Tensor<Real> out = a.value();
  for (auto& v : out.storage()) v *= c;
  return a.tape->Push(std::move(out), {a}, [a, c](const Tensor<Real>& g) {
    detail::AddInto(a.tape->GradFor(a), g, c);
  });
}

/// Elementwise product with a constant tensor (dropout masks).
template <RealScalar Real>
Var<Real> MulConstant(Var<Real> a, const Tensor<Real>& c) {
  RequireSameShape(a.value(), c, "mul_constant");
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape->Push(std::move(out), {a}, [a, c](const Tensor<Real>& g) {
    if (auto* ga = a.tape->GradFor(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c[i];
  });
}

/// Sum of all entries as a 1x1 array.
template <RealScalar Real>
Var<Real> Sum(Var<Real> a) {
  double s = 0.0;
  for (Real v : a.value().storage()) s += v;
  Tensor<Real> out = Tensor<Real>::Matrix(1, 1, static_cast<Real>(s));
  return a.tape->Push(std::move(out), {a}, [a](const Tensor<Real>& g) {
    if (auto* ga = a.tape->GradFor(a))
      for (auto& v : ga->storage()) v += g[0];
  });
}

/// Layer normalization over the channel axis with learned gain and bias.
template <RealScalar Real>
Var<Real> LayerNorm(Var<Real> x, Var<Real> gain, Var<Real> bias, double eps = 1e-5) {
  const auto& xv = x.value();
  RequireMatrix(xv, "layer_norm input");
  const std::size_t L = xv.rows(), D = xv.cols();
  if (gain.value().size() != D || bias.value().size() != D)
    throw Error(ErrorKind::kShape, "layer_norm: input " + ShapeString(xv.shape()) + " vs gain " +
                                       ShapeString(gain.value().shape()));
  Tensor<Real> out = Tensor<Real>::Matrix(L, D);
  Tensor<Real> xhat = Tensor<Real>::Matrix(L, D);
  std::vector<Real> rstd(L);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < L; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < D; ++j) mean += xv(i, j);
    mean /= double(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double d = xv(i, j) - mean;
      var += d * d;
    }
    var /= double(D);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[i] = static_cast<Real>(r);
    for (std::size_t j = 0; j < D; ++j) {
      xhat(i, j) = static_cast<Real>((xv(i, j) - mean) * r);
      out(i, j) = xhat(i, j) * gv[j] + bv[j];
    }
  }
  return x.tape->Push(std::move(out), {x, gain, bias},
                      [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), L, D](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    if (auto* gg = t.GradFor(gain))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < D; ++j) (*gg)[j] += g(i, j) * xhat(i, j);
    if (auto* gb = t.GradFor(bias))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < D; ++j) (*gb)[j] += g(i, j);
    if (auto* gx = t.GradFor(x)) {
      const auto& gv2 = gain.value();
      for (std::size_t i = 0; i < L; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
          const double gh = double(g(i, j)) * gv2[j];
          m1 += gh;
          m2 += gh * xhat(i, j);
        }
        m1 /= double(D);
        m2 /= double(D);
        for (std::size_t j = 0; j < D; ++j) {
          const double gh = double(g(i, j)) * gv2[j];
          (*gx)(i, j) += static_cast<Real>(rstd[i] * (gh - m1 - xhat(i, j) * m2));
        }
      }
    }
  });
}

/// Per-channel normalization over the time axis (group norm with one group
/// per channel), with learned per-channel gain and bias.
template <RealScalar Real>
Var<Real> ChannelNorm(Var<Real> x, Var<Real> gain, Var<Real> bias, double eps = 1e-5) {
  const auto& xv = x.value();
  RequireMatrix(xv, "channel_norm input");
  const std::size_t L = xv.rows(), C = xv.cols();
  if (gain.value().size() != C || bias.value().size() != C)
    throw Error(ErrorKind::kShape, "channel_norm: input " + ShapeString(xv.shape()) + " vs gain " +
                                       ShapeString(gain.value().shape()));
  Tensor<Real> out = Tensor<Real>::Matrix(L, C);
  Tensor<Real> xhat = Tensor<Real>::Matrix(L, C);
  std::vector<double> mean(C, 0.0), var(C, 0.0), rstd(C);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < C; ++c) mean[c] += xv(i, c);
  for (auto& m : mean) m /= double(L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      const double d = xv(i, c) - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < C; ++c) rstd[c] = 1.0 / std::sqrt(var[c] / double(L) + eps);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      xhat(i, c) = static_cast<Real>((xv(i, c) - mean[c]) * rstd[c]);
      out(i, c) = xhat(i, c) * gv[c] + bv[c];
    }
  return x.tape->Push(std::move(out), {x, gain, bias},
                      [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), L, C](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    if (auto* gg = t.GradFor(gain))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < C; ++c) (*gg)[c] += g(i, c) * xhat(i, c);
    if (auto* gb = t.GradFor(bias))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < C; ++c) (*gb)[c] += g(i, c);
    if (auto* gx = t.GradFor(x)) {
      const auto& gv2 = gain.value();
      std::vector<double> m1(C, 0.0), m2(C, 0.0);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          const double gh = double(g(i, c)) * gv2[c];
          m1[c] += gh;
          m2[c] += gh * xhat(i, c);
        }
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          const double gh = double(g(i, c)) * gv2[c];
          (*gx)(i, c) += static_cast<Real>(rstd[c] * (gh - m1[c] / double(L) - xhat(i, c) * m2[c] / double(L)));
        }
    }
  });
}

/// GELU, exact Gaussian-CDF form.
template <RealScalar Real>
Var<Real> Gelu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.storage()) v = static_cast<Real>(detail::GeluValue(v));
  return x.tape->Push(std::move(out), {x}, [x](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x)) {
      const auto& xv = x.value();
      for (std::size_t i = 0; i < g.size(); ++i)
        (*gx)[i] += static_cast<Real>(g[i] * detail::GeluDerivative(xv[i]));
    }
  });
}

/// Row-wise softmax with max subtraction.
template <RealScalar Real>
Var<Real> SoftmaxRows(Var<Real> x) {
  const auto& xv = x.value();
  RequireMatrix(xv, "softmax input");
  const std::size_t L = xv.rows(), K = xv.cols();
  Tensor<Real> out = Tensor<Real>::Matrix(L, K);
  for (std::size_t i = 0; i < L; ++i) {
    Real mx = xv(i, 0);
    for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, xv(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += std::exp(double(xv(i, j) - mx));
    for (std::size_t j = 0; j < K; ++j) out(i, j) = static_cast<Real>(std::exp(double(xv(i, j) - mx)) / s);
  }
  Tensor<Real> y = out;
  return x.tape->Push(std::move(out), {x}, [x, y = std::move(y), L, K](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x)) {
      const auto& yv = y;
      for (std::size_t i = 0; i < L; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < K; ++j) dot += double(g(i, j)) * yv(i, j);
        for (std::size_t j = 0; j < K; ++j) (*gx)(i, j) += static_cast<Real>(yv(i, j) * (g(i, j) - dot));
      }
    }
  });
}

template <RealScalar Real>
Var<Real> SliceCols(Var<Real> x, std::size_t start, std::size_t count) {
  const auto& xv = x.value();
  RequireMatrix(xv, "slice_cols input");
  if (start + count > xv.cols())
    throw Error(ErrorKind::kShape, "slice_cols: [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") of " + ShapeString(xv.shape()));
  const std::size_t L = xv.rows();
  Tensor<Real> out = Tensor<Real>::Matrix(L, count);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, start + j);
  return x.tape->Push(std::move(out), {x}, [x, start, count, L](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < count; ++j) (*gx)(i, start + j) += g(i, j);
  });
}

template <RealScalar Real>
Var<Real> ConcatCols(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw Error(ErrorKind::kShape, "concat_cols of nothing");
  const std::size_t L = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.rows() != L)
      throw Error(ErrorKind::kShape, "concat_cols: row mismatch " + ShapeString(p.value().shape()));
    total += p.cols();
  }
  Tensor<Real> out = Tensor<Real>::Matrix(L, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    off += pv.cols();
  }
  return parts.front().tape->Push(std::move(out), parts, [parts, L](const Tensor<Real>& g) {
    std::size_t o = 0;
    for (const auto& p : parts) {
      const std::size_t c = p.cols();
      if (auto* gp = p.tape->GradFor(p))
        for (std::size_t i = 0; i < L; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gp)(i, j) += g(i, o + j);
      o += c;
    }
  });
}

/// 1-D convolution over the row (time) axis. No implicit padding.
/// input (L x Cin), kernels (Cout x Cin/groups x width), optional bias (Cout).
template <RealScalar Real>
Var<Real> Conv1d(Var<Real> x, Var<Real> w, Var<Real>* b, std::size_t stride, std::size_t groups = 1) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  RequireMatrix(xv, "conv1d input");
  if (wv.rank() != 3) throw Error(ErrorKind::kShape, "conv1d kernels must be 3-D, got " + ShapeString(wv.shape()));
  if (stride == 0 || groups == 0) throw Error(ErrorKind::kShape, "conv1d stride and groups must be positive");
  const std::size_t L = xv.rows(), cin = xv.cols(), cout = wv.dim(0), cin_g = wv.dim(1), k = wv.dim(2);
  if (k == 0) throw Error(ErrorKind::kShape, "conv1d kernel width must be positive");
  if (cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g)
    throw Error(ErrorKind::kShape, "conv1d: input " + ShapeString(xv.shape()) + " vs kernels " +
                                       ShapeString(wv.shape()) + " with groups " + std::to_string(groups));
  if (L < k)
    throw Error(ErrorKind::kSequenceTooShort, "conv1d: length " + std::to_string(L) + " < kernel " +
                                                  std::to_string(k));
  const std::size_t lout = (L - k) / stride + 1;
  const std::size_t cout_g = cout / groups;
  Tensor<Real> out = Tensor<Real>::Matrix(lout, cout);
  if (b) {
    const auto& bv = b->value();
    if (bv.size() != cout) throw Error(ErrorKind::kShape, "conv1d bias " + ShapeString(bv.shape()));
    for (std::size_t j = 0; j < lout; ++j) std::copy(bv.data(), bv.data() + cout, out.data() + j * cout);
  }
  for (std::size_t j = 0; j < lout; ++j) {
    Real* oj = out.data() + j * cout;
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t g0 = (co / cout_g) * cin_g;
      const Real* wk = wv.data() + co * cin_g * k;
      Real acc = 0;
      for (std::size_t t = 0; t < k; ++t) {
        const Real* xr = xv.data() + (j * stride + t) * cin + g0;
        for (std::size_t ci = 0; ci < cin_g; ++ci) acc += xr[ci] * wk[ci * k + t];
      }
      oj[co] += acc;
    }
  }
  std::vector<Var<Real>> inputs{x, w};
  const bool has_bias = b != nullptr;
  Var<Real> bias = b ? *b : Var<Real>{};
  if (b) inputs.push_back(*b);
  return x.tape->Push(std::move(out), inputs,
                      [x, w, bias, has_bias, stride, lout, cin, cout, cin_g, cout_g, k](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    auto* gx = t.GradFor(x);
    auto* gw = t.GradFor(w);
    const auto& xv2 = x.value();
    const auto& wv2 = w.value();
    for (std::size_t j = 0; j < lout; ++j) {
      for (std::size_t co = 0; co < cout; ++co) {
        const Real gj = g(j, co);
        if (gj == Real(0)) continue;
        const std::size_t g0 = (co / cout_g) * cin_g;
        const std::size_t wbase = co * cin_g * k;
        for (std::size_t tt = 0; tt < k; ++tt) {
          const std::size_t row = (j * stride + tt) * cin + g0;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            if (gx) gx->data()[row + ci] += gj * wv2.data()[wbase + ci * k + tt];
            if (gw) gw->data()[wbase + ci * k + tt] += gj * xv2.data()[row + ci];
          }
        }
      }
    }
    if (has_bias)
      if (auto* gb = t.GradFor(bias))
        for (std::size_t j = 0; j < lout; ++j)
          for (std::size_t co = 0; co < cout; ++co) (*gb)[co] += g(j, co);
  });
}

/// Transposed 1-D convolution. input (L x Cin), kernels (Cin x Cout x width),
/// output length (L-1)*stride + width. Shares the kernel layout of the conv1d
/// it is the adjoint of.
template <RealScalar Real>
Var<Real> TransposedConv1d(Var<Real> x, Var<Real> w, Var<Real>* b, std::size_t stride) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  RequireMatrix(xv, "transposed_conv1d input");
  if (wv.rank() != 3)
    throw Error(ErrorKind::kShape, "transposed_conv1d kernels must be 3-D, got " + ShapeString(wv.shape()));
  if (xv.rows() == 0) throw Error(ErrorKind::kEmptySequence, "transposed_conv1d on an empty sequence");
  if (stride == 0) throw Error(ErrorKind::kShape, "transposed_conv1d stride must be positive");
  const std::size_t L = xv.rows(), cin = xv.cols(), cout = wv.dim(1), k = wv.dim(2);
  if (wv.dim(0) != cin || k == 0)
    throw Error(ErrorKind::kShape, "transposed_conv1d: input " + ShapeString(xv.shape()) + " vs kernels " +
                                       ShapeString(wv.shape()));
  const std::size_t lout = (L - 1) * stride + k;
  Tensor<Real> out = Tensor<Real>::Matrix(lout, cout);
  if (b) {
    const auto& bv = b->value();
    if (bv.size() != cout) throw Error(ErrorKind::kShape, "transposed_conv1d bias " + ShapeString(bv.shape()));
    for (std::size_t j = 0; j < lout; ++j) std::copy(bv.data(), bv.data() + cout, out.data() + j * cout);
  }
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const Real xi = xv(i, ci);
      if (xi == Real(0)) continue;
      const Real* wc = wv.data() + ci * cout * k;
      for (std::size_t t = 0; t < k; ++t) {
        Real* orow = out.data() + (i * stride + t) * cout;
        for (std::size_t co = 0; co < cout; ++co) orow[co] += xi * wc[co * k + t];
      }
    }
  std::vector<Var<Real>> inputs{x, w};
  const bool has_bias = b != nullptr;
  Var<Real> bias = b ? *b : Var<Real>{};
  if (b) inputs.push_back(*b);
  return x.tape->Push(std::move(out), inputs,
                      [x, w, bias, has_bias, stride, L, lout, cin, cout, k](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    auto* gx = t.GradFor(x);
    auto* gw = t.GradFor(w);
    const auto& xv2 = x.value();
    const auto& wv2 = w.value();
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const std::size_t wbase = ci * cout * k;
        double acc = 0.0;
        for (std::size_t tt = 0; tt < k; ++tt) {
          const Real* grow = g.data() + (i * stride + tt) * cout;
          for (std::size_t co = 0; co < cout; ++co) {
            acc += double(grow[co]) * wv2.data()[wbase + co * k + tt];
            if (gw) gw->data()[wbase + co * k + tt] += xv2(i, ci) * grow[co];
          }
        }
        if (gx) (*gx)(i, ci) += static_cast<Real>(acc);
      }
    if (has_bias)
      if (auto* gb = t.GradFor(bias))
        for (std::size_t j = 0; j < lout; ++j)
          for (std::size_t co = 0; co < cout; ++co) (*gb)[co] += g(j, co);
  });
}

/// Zero rows before and after.
template <RealScalar Real>
Var<Real> PadRows(Var<Real> x, std::size_t before, std::size_t after) {
  const auto& xv = x.value();
  RequireMatrix(xv, "pad_rows input");
  const std::size_t L = xv.rows(), C = xv.cols();
  Tensor<Real> out = Tensor<Real>::Matrix(L + before + after, C);
  std::copy(xv.data(), xv.data() + L * C, out.data() + before * C);
  return x.tape->Push(std::move(out), {x}, [x, before, L, C](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x))
      for (std::size_t i = 0; i < L * C; ++i) (*gx)[i] += g[before * C + i];
  });
}

/// Truncates or zero-pads the tail to exactly `n` rows.
template <RealScalar Real>
Var<Real> ResizeRows(Var<Real> x, std::size_t n) {
  const auto& xv = x.value();
  RequireMatrix(xv, "resize_rows input");
  if (xv.rows() == n) return x;
  const std::size_t C = xv.cols();
  const std::size_t keep = std::min(n, xv.rows());
  Tensor<Real> out = Tensor<Real>::Matrix(n, C);
  std::copy(xv.data(), xv.data() + keep * C, out.data());
  return x.tape->Push(std::move(out), {x}, [x, keep, C](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x))
      for (std::size_t i = 0; i < keep * C; ++i) (*gx)[i] += g[i];
  });
}

/// Rows 0, f, 2f, ...; length ceil(L/f).
template <RealScalar Real>
Var<Real> SkipRows(Var<Real> x, std::size_t factor) {
  const auto& xv = x.value();
  RequireMatrix(xv, "skip input");
  if (xv.rows() == 0) throw Error(ErrorKind::kEmptySequence, "skip-resample of an empty sequence");
  if (factor == 0) throw Error(ErrorKind::kShape, "skip factor must be positive");
  if (factor == 1) return x;
  const std::size_t C = xv.cols(), lout = CeilDiv(xv.rows(), factor);
  Tensor<Real> out = Tensor<Real>::Matrix(lout, C);
  for (std::size_t j = 0; j < lout; ++j) std::copy_n(xv.data() + j * factor * C, C, out.data() + j * C);
  return x.tape->Push(std::move(out), {x}, [x, factor, lout, C](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x))
      for (std::size_t j = 0; j < lout; ++j)
        for (std::size_t c = 0; c < C; ++c) (*gx)(j * factor, c) += g(j, c);
  });
}

/// Each row repeated `factor` consecutive times.
template <RealScalar Real>
Var<Real> RepeatRows(Var<Real> x, std::size_t factor) {
  const auto& xv = x.value();
  RequireMatrix(xv, "repeat input");
  if (xv.rows() == 0) throw Error(ErrorKind::kEmptySequence, "repeat-upsample of an empty sequence");
  if (factor == 0) throw Error(ErrorKind::kShape, "repeat factor must be positive");
  if (factor == 1) return x;
  const std::size_t L = xv.rows(), C = xv.cols();
  Tensor<Real> out = Tensor<Real>::Matrix(L * factor, C);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t r = 0; r < factor; ++r) std::copy_n(xv.data() + i * C, C, out.data() + (i * factor + r) * C);
  return x.tape->Push(std::move(out), {x}, [x, factor, L, C](const Tensor<Real>& g) {
    if (auto* gx = x.tape->GradFor(x))
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t r = 0; r < factor; ++r)
          for (std::size_t c = 0; c < C; ++c) (*gx)(i, c) += g(i * factor + r, c);
  });
}

/// Replaces the listed rows by zero vectors, or by `fill` (a length-C vector)
/// when given.
template <RealScalar Real>
Var<Real> ReplaceRows(Var<Real> x, const std::vector<std::size_t>& rows, Var<Real>* fill = nullptr) {
  const auto& xv = x.value();
  RequireMatrix(xv, "replace_rows input");
  const std::size_t L = xv.rows(), C = xv.cols();
  for (std::size_t r : rows)
    if (r >= L) throw Error(ErrorKind::kShape, "masked row " + std::to_string(r) + " outside length " + std::to_string(L));
  if (rows.empty()) return x;
  Tensor<Real> out = xv;
  std::vector<char> hit(L, 0);
  for (std::size_t r : rows) hit[r] = 1;
  if (fill && fill->value().size() != C)
    throw Error(ErrorKind::kShape, "mask embedding " + ShapeString(fill->value().shape()) + " vs width " +
                                       std::to_string(C));
  for (std::size_t i = 0; i < L; ++i)
    if (hit[i])
      for (std::size_t c = 0; c < C; ++c) out(i, c) = fill ? fill->value()[c] : Real(0);
  std::vector<Var<Real>> inputs{x};
  const bool has_fill = fill != nullptr;
  Var<Real> f = fill ? *fill : Var<Real>{};
  if (fill) inputs.push_back(*fill);
  return x.tape->Push(std::move(out), inputs, [x, f, has_fill, hit = std::move(hit), L, C](const Tensor<Real>& g) {
    Tape<Real>& t = *x.tape;
    if (auto* gx = t.GradFor(x))
      for (std::size_t i = 0; i < L; ++i)
        if (!hit[i])
          for (std::size_t c = 0; c < C; ++c) (*gx)(i, c) += g(i, c);
    if (has_fill)
      if (auto* gf = t.GradFor(f))
        for (std::size_t i = 0; i < L; ++i)
          if (hit[i])
            for (std::size_t c = 0; c < C; ++c) (*gf)[c] += g(i, c);
  });
}

enum class Reduction { kMean, kSum };

struct CrossEntropyStats {
  double loss = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count == 0 ? 1.0 : double(correct) / double(count); }
};

/// Negative log-softmax of the target class over the selected rows only.
/// Mean reduction divides by the number of selected rows; an empty selection
/// yields zero loss.
template <RealScalar Real>
Var<Real> MaskedCrossEntropy(Var<Real> logits, const std::vector<int>& targets,
                             const std::vector<std::size_t>& rows, Reduction reduction,
                             CrossEntropyStats* stats = nullptr) {
  const auto& lv = logits.value();
  RequireMatrix(lv, "cross_entropy logits");
  const std::size_t L = lv.rows(), K = lv.cols();
  if (targets.size() != L)
    throw Error(ErrorKind::kShape, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                       std::to_string(L) + " logit rows");
  Tensor<Real> probs = Tensor<Real>::Matrix(rows.size(), K);
  double total = 0.0;
  std::size_t correct = 0;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const std::size_t i = rows[n];
    if (i >= L) throw Error(ErrorKind::kShape, "cross_entropy row " + std::to_string(i) + " out of range");
    const int y = targets[i];
    if (y < 0 || std::size_t(y) >= K)
      throw Error(ErrorKind::kInvalidUnit, "unit " + std::to_string(y) + " not in [0, " + std::to_string(K) + ")");
    double mx = lv(i, 0);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < K; ++j)
      if (lv(i, j) > mx) {
        mx = lv(i, j);
        arg = j;
      }
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += std::exp(double(lv(i, j)) - mx);
    const double lse = mx + std::log(s);
    total += lse - double(lv(i, std::size_t(y)));
    for (std::size_t j = 0; j < K; ++j) probs(n, j) = static_cast<Real>(std::exp(double(lv(i, j)) - lse));
    if (arg == std::size_t(y)) ++correct;
  }
  const double denom = (reduction == Reduction::kMean && !rows.empty()) ? double(rows.size()) : 1.0;
  if (stats) *stats = CrossEntropyStats{total / denom, rows.size(), correct};
  Tensor<Real> out = Tensor<Real>::Matrix(1, 1, static_cast<Real>(total / denom));
  return logits.tape->Push(std::move(out), {logits},
                           [logits, targets, rows, probs = std::move(probs), denom, K](const Tensor<Real>& g) {
    if (auto* gl = logits.tape->GradFor(logits)) {
      const double scale = double(g[0]) / denom;
      for (std::size_t n = 0; n < rows.size(); ++n) {
        const std::size_t i = rows[n];
        for (std::size_t j = 0; j < K; ++j) {
          double d = probs(n, j);
          if (j == std::size_t(targets[i])) d -= 1.0;
          (*gl)(i, j) += static_cast<Real>(scale * d);
        }
      }
    }
  });
}

/// Weighted sum of 1x1 values.
template <RealScalar Real>
Var<Real> WeightedSum(const std::vector<Var<Real>>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size())
    throw Error(ErrorKind::kShape, std::to_string(scalars.size()) + " losses vs " + std::to_string(weights.size()) +
                                       " weights");
  if (scalars.empty()) throw Error(ErrorKind::kShape, "weighted sum of nothing");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) throw Error(ErrorKind::kShape, "weighted sum expects scalars");
    total += weights[i] * double(scalars[i].value()[0]);
  }
  Tensor<Real> out = Tensor<Real>::Matrix(1, 1, static_cast<Real>(total));
  return scalars.front().tape->Push(std::move(out), scalars, [scalars, weights](const Tensor<Real>& g) {
    for (std::size_t i = 0; i < scalars.size(); ++i)
      if (auto* gs = scalars[i].tape->GradFor(scalars[i])) (*gs)[0] += static_cast<Real>(weights[i] * g[0]);
  });
}

}  // namespace ad
}  // namespace mrhubert
