// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

// Shared row primitives. The autograd ops and the cached generation path
// both route through these so that a teacher-forced graph replay reproduces
// generation-time values bit for bit (same accumulation order everywhere).

namespace softcot::detail {

inline void softmax_row_inplace(const double* x, double* p, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    p[j] = std::exp(x[j] - mx);
    z += p[j];
  }
  for (int j = 0; j < n; ++j) p[j] /= z;
}

inline void layer_norm_row_stats(const double* x, int n, double eps,
                                 double* mean_out, double* inv_std_out) {
  double mean = 0.0;
  for (int j = 0; j < n; ++j) mean += x[j];
  mean /= n;
  double var = 0.0;
  for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= n;
  *mean_out = mean;
  *inv_std_out = 1.0 / std::sqrt(var + eps);
}

inline double gelu_scalar(double v) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
}

// out[0..n) = x (1 x k) * W (k x n), accumulated over k in ascending order.
inline void vec_mat(const double* x, const double* w, int k, int n,
                    double* out) {
  for (int j = 0; j < n; ++j) out[j] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double xp = x[p];
    if (xp == 0.0) continue;
    const double* wrow = w + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) out[j] += xp * wrow[j];
  }
}

}  // namespace softcot::detail
