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

#include "mrhubert/autodiff.hpp"

namespace mrhubert {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Scalar function of the given parameters, built on the supplied tape.
using ScalarFn = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central differences at every
/// coordinate of every parameter. Relative error per coordinate is
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
inline GradCheckResult GradCheck(const ScalarFn& fn, const std::vector<Parameter<double>*>& params,
                                 double eps = 1e-6) {
  if (eps < 1e-7 || eps > 1e-3) throw Error(ErrorKind::kUsage, "grad_check eps must lie in [1e-7, 1e-3]");
  for (auto* p : params) p->ZeroGrad();
  {
    Tape<double> tape;
    Var<double> out = fn(tape);
    if (!std::isfinite(out.value()[0])) throw Error(ErrorKind::kNumeric, "function value is not finite");
    tape.Backward(out);
  }
  auto evaluate = [&fn]() {
    Tape<double> tape(false);
    return fn(tape).value()[0];
  };
  GradCheckResult result;
  for (auto* p : params) {
    auto& values = p->value.storage();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw Error(ErrorKind::kNumeric, "non-finite value perturbing " + p->name + "[" + std::to_string(i) + "]");
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mrhubert
