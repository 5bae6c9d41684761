// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "softcot/tensor.hpp"

namespace softcot {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Ordered registry; iteration order is the update / reporting order.
using ParamList = std::vector<NamedParam>;

struct GradCheckParamReport {
  std::string name;
  double rel_error = 0.0;       // |analytic - numeric| / (|numeric| + eps)
  double max_abs_diff = 0.0;    // worst single coordinate
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::vector<GradCheckParamReport> per_param;
};

// Central finite-difference oracle for a scalar loss. loss_fn must rebuild
// the loss graph from the registered parameter tensors and be deterministic
// (fix every RNG seed it consumes). Perturbs parameter storage in place and
// restores it. |.| in the error formula is the Frobenius norm over each
// parameter tensor; eps = 1e-12 guards all-zero gradients.
//
// Throws on non-finite analytic or numeric values, naming the parameter.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamList& params, double step = 1e-5);

}  // namespace softcot
