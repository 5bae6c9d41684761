// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace softcot {

// Dense row-major 2-D (or scalar/vector, stored as 1xN / Nx1) tensor of
// doubles with reverse-mode differentiation. Ops record a node holding the
// backward rule; backward() walks the recorded graph once, in reverse
// creation order, and accumulates gradients into every requires_grad leaf.
//
// Tensors are value types sharing storage; data is treated as immutable once
// an op has consumed it. Independent graphs may be built concurrently (each
// graph single-threaded).

class Tensor;

struct ShapeMismatchError : std::invalid_argument {
  ShapeMismatchError(const std::string& op, const std::string& lhs,
                     const std::string& rhs)
      : std::invalid_argument(op + ": shape mismatch " + lhs + " vs " + rhs),
        lhs_shape(lhs),
        rhs_shape(rhs) {}
  std::string lhs_shape;
  std::string rhs_shape;
};

namespace detail {

struct Node {
  uint64_t id = 0;
  const char* op = "";
  std::vector<std::shared_ptr<struct TensorImpl>> parents;
  std::function<void(const struct TensorImpl& out)> backward;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same size as data
  bool requires_grad = false;
  uint64_t id = 0;
  std::shared_ptr<Node> node;  // null for leaves / no-grad results

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

bool grad_enabled();

// Disables graph recording in the current thread while alive.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  std::string shape_str() const;
  int rows() const;
  int cols() const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
  bool is_scalar() const { return numel() == 1; }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double item() const;
  double at(int r, int c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  uint64_t id() const { return impl_->id; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  double* grad() { return impl_->grad.data(); }
  const double* grad() const { return impl_->grad.data(); }
  std::vector<double>& grad_values() { return impl_->grad; }
  const std::vector<double>& grad_values() const { return impl_->grad; }
  void ensure_grad() { impl_->ensure_grad(); }
  void zero_grad();

  // Deep copy of data (no graph history is carried over).
  Tensor clone() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  friend Tensor make_op_result(std::vector<int> shape, const char* op,
                               std::vector<Tensor> parents,
                               std::function<void(const detail::TensorImpl&)> bw,
                               bool any_grad);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a (m x k) times b^T where b is (n x k); result m x n.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Same-shape add, or b a 1 x n row vector broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor rowwise_softmax(const Tensor& logits);
// Row i attends to columns [0, i + key_offset]; masked entries get prob 0.
Tensor causal_rowwise_softmax(const Tensor& scores, int key_offset);
Tensor rowwise_log_softmax(const Tensor& logits);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor concat_cols(const std::vector<Tensor>& parts);
// x (t x n) -> t x 1 with out[i] = x[i, idx[i]].
Tensor pick_per_row(const Tensor& x, const std::vector<int>& idx);
Tensor sum_all(const Tensor& x);

// Reverse-mode sweep from a scalar loss. Every requires_grad leaf reachable
// from the loss ends up with an accumulated gradient (allocated on demand).
void backward(const Tensor& loss);

}  // namespace softcot
