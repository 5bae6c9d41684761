// SPDX-License-Identifier: Apache-2.0
#include "softcot/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "softcot/detail/rowmath.hpp"

namespace softcot {

namespace {

std::atomic<uint64_t> g_next_id{1};

thread_local bool t_grad_enabled = true;

uint64_t next_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

std::string shape_to_string(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

bool tracks_grad(const Tensor& t) {
  return t.defined() && (t.requires_grad() || t.impl()->node != nullptr);
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_op_result(std::vector<int> shape, const char* op,
                      std::vector<Tensor> parents,
                      std::function<void(const detail::TensorImpl&)> bw,
                      bool any_grad) {
  Tensor out;
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<size_t>(numel_of(impl->shape)), 0.0);
  impl->id = next_id();
  if (t_grad_enabled && any_grad) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    node->id = impl->id;
    node->op = op;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.impl());
    node->backward = std::move(bw);
    impl->node = std::move(node);
  }
  out.impl_ = std::move(impl);
  return out;
}

namespace {

Tensor make_result(std::vector<int> shape, const char* op,
                   std::vector<Tensor> parents,
                   std::function<void(const detail::TensorImpl&)> bw) {
  bool any = false;
  for (const auto& p : parents) any = any || tracks_grad(p);
  return make_op_result(std::move(shape), op, std::move(parents), std::move(bw),
                        any);
}

void require_2d(const Tensor& t, const char* op) {
  if (!t.defined() || t.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a 2-d tensor");
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  impl->id = next_id();
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("from_data: " + shape_to_string(shape) +
                                " does not hold " +
                                std::to_string(values.size()) + " values");
  Tensor t = zeros(std::move(shape), requires_grad);
  t.values() = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1, 1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  int n = static_cast<int>(values.size());
  return from_data({1, n}, std::move(values), requires_grad);
}

std::string Tensor::shape_str() const { return shape_to_string(impl_->shape); }

int Tensor::rows() const {
  require_2d(*this, "rows");
  return impl_->shape[0];
}

int Tensor::cols() const {
  require_2d(*this, "cols");
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item: tensor " + shape_str() + " is not scalar");
  return impl_->data[0];
}

double Tensor::at(int r, int c) const {
  require_2d(*this, "at");
  return impl_->data[static_cast<size_t>(r) * impl_->shape[1] + c];
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t = zeros(impl_->shape, impl_->requires_grad);
  t.values() = impl_->data;
  return t;
}

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeMismatchError("matmul", a.shape_str(), b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  auto ai = a.impl();
  auto bi = b.impl();
  Tensor out = make_result(
      {m, n}, "matmul", {a, b}, [ai, bi, m, k, n](const detail::TensorImpl& o) {
        const double* g = o.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          // dA += G * B^T
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<size_t>(i) * n + j];
              if (gij == 0.0) continue;
              const double* brow = bi->data.data();
              for (int p = 0; p < k; ++p)
                ai->grad[static_cast<size_t>(i) * k + p] +=
                    gij * brow[static_cast<size_t>(p) * n + j];
            }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          // dB += A^T * G
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              const double aip = ai->data[static_cast<size_t>(i) * k + p];
              if (aip == 0.0) continue;
              for (int j = 0; j < n; ++j)
                bi->grad[static_cast<size_t>(p) * n + j] +=
                    aip * g[static_cast<size_t>(i) * n + j];
            }
        }
      });
  double* c = out.data();
  const double* ad = a.data();
  const double* bd = b.data();
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    const double* arow = ad + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = bd + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw ShapeMismatchError("matmul_nt", a.shape_str(), b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.rows();
  auto ai = a.impl();
  auto bi = b.impl();
  Tensor out = make_result(
      {m, n}, "matmul_nt", {a, b},
      [ai, bi, m, k, n](const detail::TensorImpl& o) {
        const double* g = o.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          // dA += G * B
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<size_t>(i) * n + j];
              if (gij == 0.0) continue;
              const double* brow = bi->data.data() + static_cast<size_t>(j) * k;
              for (int p = 0; p < k; ++p)
                ai->grad[static_cast<size_t>(i) * k + p] += gij * brow[p];
            }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          // dB += G^T * A
          for (int i = 0; i < m; ++i) {
            const double* arow = ai->data.data() + static_cast<size_t>(i) * k;
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<size_t>(i) * n + j];
              if (gij == 0.0) continue;
              double* brow = bi->grad.data() + static_cast<size_t>(j) * k;
              for (int p = 0; p < k; ++p) brow[p] += gij * arow[p];
            }
          }
        }
      });
  double* c = out.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b.data() + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[static_cast<size_t>(i) * n + j] = acc;
    }
  }
  return out;
}

namespace {

enum class AddMode { same, row_broadcast };

AddMode add_mode(const Tensor& a, const Tensor& b, const char* op) {
  require_2d(a, op);
  require_2d(b, op);
  if (a.shape() == b.shape()) return AddMode::same;
  if (b.rows() == 1 && b.cols() == a.cols()) return AddMode::row_broadcast;
  throw ShapeMismatchError(op, a.shape_str(), b.shape_str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const AddMode mode = add_mode(a, b, "add");
  const int m = a.rows(), n = a.cols();
  auto ai = a.impl();
  auto bi = b.impl();
  Tensor out = make_result(
      a.shape(), "add", {a, b}, [ai, bi, mode, m, n](const detail::TensorImpl& o) {
        const double* g = o.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += g[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          if (mode == AddMode::same) {
            for (size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] += g[i];
          } else {
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n; ++j)
                bi->grad[j] += g[static_cast<size_t>(i) * n + j];
          }
        }
      });
  double* c = out.data();
  const double* ad = a.data();
  const double* bd = b.data();
  if (mode == AddMode::same) {
    for (int64_t i = 0; i < out.numel(); ++i) c[i] = ad[i] + bd[i];
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        c[static_cast<size_t>(i) * n + j] = ad[static_cast<size_t>(i) * n + j] + bd[j];
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_2d(a, "sub");
  require_2d(b, "sub");
  if (a.shape() != b.shape())
    throw ShapeMismatchError("sub", a.shape_str(), b.shape_str());
  auto ai = a.impl();
  auto bi = b.impl();
  Tensor out =
      make_result(a.shape(), "sub", {a, b}, [ai, bi](const detail::TensorImpl& o) {
        const double* g = o.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += g[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= g[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

Tensor mul_elem(const Tensor& a, const Tensor& b) {
  require_2d(a, "mul_elem");
  require_2d(b, "mul_elem");
  if (a.shape() != b.shape())
    throw ShapeMismatchError("mul_elem", a.shape_str(), b.shape_str());
  auto ai = a.impl();
  auto bi = b.impl();
  Tensor out = make_result(
      a.shape(), "mul_elem", {a, b}, [ai, bi](const detail::TensorImpl& o) {
        const double* g = o.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            ai->grad[i] += g[i] * bi->data[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (size_t i = 0; i < o.grad.size(); ++i)
            bi->grad[i] += g[i] * ai->data[i];
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  require_2d(a, "scale");
  auto ai = a.impl();
  Tensor out = make_result(
      a.shape(), "scale", {a}, [ai, factor](const detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
          ai->grad[i] += factor * o.grad[i];
      });
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = factor * a.data()[i];
  return out;
}

using detail::softmax_row_inplace;

Tensor rowwise_softmax(const Tensor& logits) {
  require_2d(logits, "rowwise_softmax");
  if (logits.cols() < 1)
    throw std::invalid_argument("rowwise_softmax: empty rows");
  const int m = logits.rows(), n = logits.cols();
  auto xi = logits.impl();
  Tensor out = make_result(
      logits.shape(), "rowwise_softmax", {logits},
      [xi, m, n](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const double* p = o.data.data() + static_cast<size_t>(i) * n;
          const double* g = o.grad.data() + static_cast<size_t>(i) * n;
          double dot = 0.0;
          for (int j = 0; j < n; ++j) dot += p[j] * g[j];
          double* dx = xi->grad.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) dx[j] += p[j] * (g[j] - dot);
        }
      });
  for (int i = 0; i < m; ++i)
    softmax_row_inplace(logits.data() + static_cast<size_t>(i) * n,
                out.data() + static_cast<size_t>(i) * n, n);
  return out;
}

Tensor causal_rowwise_softmax(const Tensor& scores, int key_offset) {
  require_2d(scores, "causal_rowwise_softmax");
  if (key_offset < 0)
    throw std::invalid_argument("causal_rowwise_softmax: negative key offset");
  const int m = scores.rows(), n = scores.cols();
  auto xi = scores.impl();
  Tensor out = make_result(
      scores.shape(), "causal_rowwise_softmax", {scores},
      [xi, m, n, key_offset](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const int valid = std::min(n, i + key_offset + 1);
          const double* p = o.data.data() + static_cast<size_t>(i) * n;
          const double* g = o.grad.data() + static_cast<size_t>(i) * n;
          double dot = 0.0;
          for (int j = 0; j < valid; ++j) dot += p[j] * g[j];
          double* dx = xi->grad.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < valid; ++j) dx[j] += p[j] * (g[j] - dot);
        }
      });
  for (int i = 0; i < m; ++i) {
    const int valid = std::min(n, i + key_offset + 1);
    if (valid < 1)
      throw std::invalid_argument("causal_rowwise_softmax: row with no keys");
    softmax_row_inplace(scores.data() + static_cast<size_t>(i) * n,
                out.data() + static_cast<size_t>(i) * n, valid);
    // masked entries stay exactly zero
  }
  return out;
}

Tensor rowwise_log_softmax(const Tensor& logits) {
  require_2d(logits, "rowwise_log_softmax");
  const int m = logits.rows(), n = logits.cols();
  auto xi = logits.impl();
  Tensor out = make_result(
      logits.shape(), "rowwise_log_softmax", {logits},
      [xi, m, n](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const double* y = o.data.data() + static_cast<size_t>(i) * n;
          const double* g = o.grad.data() + static_cast<size_t>(i) * n;
          double gsum = 0.0;
          for (int j = 0; j < n; ++j) gsum += g[j];
          double* dx = xi->grad.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) dx[j] += g[j] - std::exp(y[j]) * gsum;
        }
      });
  for (int i = 0; i < m; ++i) {
    const double* x = logits.data() + static_cast<size_t>(i) * n;
    double* y = out.data() + static_cast<size_t>(i) * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_2d(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  if (gain.shape() != std::vector<int>{1, n})
    throw ShapeMismatchError("layer_norm gain", x.shape_str(), gain.shape_str());
  if (bias.shape() != std::vector<int>{1, n})
    throw ShapeMismatchError("layer_norm bias", x.shape_str(), bias.shape_str());
  auto xi = x.impl();
  auto gi = gain.impl();
  auto bi = bias.impl();
  // Cache per-row mean and inverse std for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(2 * static_cast<size_t>(m));
  Tensor out = make_result(
      x.shape(), "layer_norm", {x, gain, bias},
      [xi, gi, bi, stats, m, n](const detail::TensorImpl& o) {
        for (int i = 0; i < m; ++i) {
          const double mean = (*stats)[2 * static_cast<size_t>(i)];
          const double inv_std = (*stats)[2 * static_cast<size_t>(i) + 1];
          const double* xrow = xi->data.data() + static_cast<size_t>(i) * n;
          const double* grow = o.grad.data() + static_cast<size_t>(i) * n;
          if (gi->requires_grad || bi->requires_grad) {
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            for (int j = 0; j < n; ++j) {
              const double xhat = (xrow[j] - mean) * inv_std;
              if (gi->requires_grad) gi->grad[j] += grow[j] * xhat;
              if (bi->requires_grad) bi->grad[j] += grow[j];
            }
          }
          if (xi->requires_grad) {
            xi->ensure_grad();
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int j = 0; j < n; ++j) {
              const double xhat = (xrow[j] - mean) * inv_std;
              const double dxhat = grow[j] * gi->data[j];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            double* dx = xi->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              const double xhat = (xrow[j] - mean) * inv_std;
              const double dxhat = grow[j] * gi->data[j];
              dx[j] += inv_std *
                       (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
            }
          }
        }
      });
  for (int i = 0; i < m; ++i) {
    const double* xrow = x.data() + static_cast<size_t>(i) * n;
    double mean, inv_std;
    detail::layer_norm_row_stats(xrow, n, eps, &mean, &inv_std);
    (*stats)[2 * static_cast<size_t>(i)] = mean;
    (*stats)[2 * static_cast<size_t>(i) + 1] = inv_std;
    double* yrow = out.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j)
      yrow[j] = (xrow[j] - mean) * inv_std * gain.data()[j] + bias.data()[j];
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  require_2d(x, "gelu");
  auto xi = x.impl();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  Tensor out =
      make_result(x.shape(), "gelu", {x}, [xi](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
          const double v = xi->data[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          xi->grad[i] += o.grad[i] * (cdf + v * pdf);
        }
      });
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = detail::gelu_scalar(x.data()[i]);
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  const int rows = table.rows(), n = table.cols();
  for (int id : ids)
    if (id < 0 || id >= rows)
      throw std::out_of_range("gather_rows: row id " + std::to_string(id) +
                              " outside table " + table.shape_str());
  auto ti = table.impl();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  const int t = static_cast<int>(ids.size());
  Tensor out = make_result(
      {t, n}, "gather_rows", {table},
      [ti, ids_copy, n](const detail::TensorImpl& o) {
        if (!ti->requires_grad) return;
        ti->ensure_grad();
        for (size_t i = 0; i < ids_copy->size(); ++i) {
          const double* g = o.grad.data() + i * static_cast<size_t>(n);
          double* dst =
              ti->grad.data() + static_cast<size_t>((*ids_copy)[i]) * n;
          for (int j = 0; j < n; ++j) dst[j] += g[j];
        }
      });
  for (int i = 0; i < t; ++i) {
    const double* src = table.data() + static_cast<size_t>(ids[i]) * n;
    std::copy(src, src + n, out.data() + static_cast<size_t>(i) * n);
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n)
      throw ShapeMismatchError("concat_rows", parts[0].shape_str(), p.shape_str());
    total += p.rows();
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  impls.reserve(parts.size());
  for (const auto& p : parts) impls.push_back(p.impl());
  Tensor out = make_result(
      {total, n}, "concat_rows", parts, [impls, n](const detail::TensorImpl& o) {
        size_t row = 0;
        for (const auto& pi : impls) {
          const size_t prows = pi->shape[0];
          if (pi->requires_grad) {
            pi->ensure_grad();
            for (size_t i = 0; i < prows * static_cast<size_t>(n); ++i)
              pi->grad[i] += o.grad[row * n + i];
          }
          row += prows;
        }
      });
  size_t row = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + row * n);
    row += static_cast<size_t>(p.rows());
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  require_2d(x, "slice_cols");
  if (begin < 0 || end > x.cols() || begin >= end)
    throw std::invalid_argument("slice_cols: bad range [" +
                                std::to_string(begin) + "," +
                                std::to_string(end) + ") for " + x.shape_str());
  const int m = x.rows(), n = x.cols(), w = end - begin;
  auto xi = x.impl();
  Tensor out = make_result(
      {m, w}, "slice_cols", {x},
      [xi, m, n, w, begin](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            xi->grad[static_cast<size_t>(i) * n + begin + j] +=
                o.grad[static_cast<size_t>(i) * w + j];
      });
  for (int i = 0; i < m; ++i)
    std::copy(x.data() + static_cast<size_t>(i) * n + begin,
              x.data() + static_cast<size_t>(i) * n + end,
              out.data() + static_cast<size_t>(i) * w);
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m)
      throw ShapeMismatchError("concat_cols", parts[0].shape_str(), p.shape_str());
    total += p.cols();
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  Tensor out = make_result(
      {m, total}, "concat_cols", parts,
      [impls, m, total](const detail::TensorImpl& o) {
        int col = 0;
        for (const auto& pi : impls) {
          const int w = pi->shape[1];
          if (pi->requires_grad) {
            pi->ensure_grad();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < w; ++j)
                pi->grad[static_cast<size_t>(i) * w + j] +=
                    o.grad[static_cast<size_t>(i) * total + col + j];
          }
          col += w;
        }
      });
  int col = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i)
      std::copy(p.data() + static_cast<size_t>(i) * w,
                p.data() + static_cast<size_t>(i) * w + w,
                out.data() + static_cast<size_t>(i) * total + col);
    col += w;
  }
  return out;
}

Tensor pick_per_row(const Tensor& x, const std::vector<int>& idx) {
  require_2d(x, "pick_per_row");
  const int m = x.rows(), n = x.cols();
  if (static_cast<int>(idx.size()) != m)
    throw std::invalid_argument("pick_per_row: " + std::to_string(idx.size()) +
                                " indices for " + std::to_string(m) + " rows");
  for (int j : idx)
    if (j < 0 || j >= n)
      throw std::out_of_range("pick_per_row: column " + std::to_string(j) +
                              " outside " + x.shape_str());
  auto xi = x.impl();
  auto idx_copy = std::make_shared<std::vector<int>>(idx);
  Tensor out = make_result(
      {m, 1}, "pick_per_row", {x}, [xi, idx_copy, n](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (size_t i = 0; i < idx_copy->size(); ++i)
          xi->grad[i * static_cast<size_t>(n) + (*idx_copy)[i]] += o.grad[i];
      });
  for (int i = 0; i < m; ++i)
    out.data()[i] = x.data()[static_cast<size_t>(i) * n + idx[i]];
  return out;
}

Tensor sum_all(const Tensor& x) {
  require_2d(x, "sum_all");
  auto xi = x.impl();
  Tensor out =
      make_result({1, 1}, "sum_all", {x}, [xi](const detail::TensorImpl& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const double g = o.grad[0];
        for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
      });
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor, got " +
                                (loss.defined() ? loss.shape_str() : "<empty>"));
  auto root = loss.impl();
  root->ensure_grad();
  root->grad[0] += 1.0;
  if (!root->node) return;

  // Collect reachable nodes, then run them in descending creation order.
  // Creation order is topological, so each node fires exactly once with its
  // output gradient complete.
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<std::shared_ptr<detail::TensorImpl>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    if (!cur->node) continue;
    for (const auto& p : cur->node->parents)
      if (p->node && seen.insert(p.get()).second) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });
  for (const auto& impl : order) {
    if (!impl->node || !impl->node->backward) continue;
    impl->ensure_grad();
    impl->node->backward(*impl);
  }
}

}  // namespace softcot
