// SPDX-License-Identifier: Apache-2.0
#include "softcot/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace softcot {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamList& params, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
  constexpr double eps = 1e-12;

  for (auto& p : params) {
    p.tensor.ensure_grad();
    p.tensor.zero_grad();
  }
  Tensor loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.tensor.grad_values());
    for (double g : analytic.back())
      if (!std::isfinite(g))
        throw std::runtime_error("grad_check: non-finite analytic gradient in " +
                                 p.name);
  }

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    GradCheckParamReport pr;
    pr.name = p.name;
    double diff_sq = 0.0, numeric_sq = 0.0, analytic_sq = 0.0;
    double* data = p.tensor.data();
    const int64_t n = p.tensor.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double plus = loss_fn().item();
      data[i] = saved - step;
      const double minus = loss_fn().item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      if (!std::isfinite(numeric))
        throw std::runtime_error("grad_check: non-finite numeric gradient in " +
                                 p.name);
      const double a = analytic[pi][static_cast<size_t>(i)];
      const double d = a - numeric;
      diff_sq += d * d;
      numeric_sq += numeric * numeric;
      analytic_sq += a * a;
      pr.max_abs_diff = std::max(pr.max_abs_diff, std::abs(d));
    }
    pr.numeric_norm = std::sqrt(numeric_sq);
    pr.analytic_norm = std::sqrt(analytic_sq);
    pr.rel_error = std::sqrt(diff_sq) / (pr.numeric_norm + eps);
    if (pr.rel_error >= report.max_rel_error) {
      report.max_rel_error = pr.rel_error;
      report.worst_param = pr.name;
    }
    report.per_param.push_back(std::move(pr));
  }
  return report;
}

}  // namespace softcot
