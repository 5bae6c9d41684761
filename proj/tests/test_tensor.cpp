// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "softcot/grad_check.hpp"
#include "softcot/rng.hpp"
#include "softcot/tensor.hpp"

using namespace softcot;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.gaussian();
  return t;
}

// Contracts an op output to a scalar with weights that are frozen on first
// use, so repeated loss evaluations inside grad_check stay deterministic.
struct WeightedSum {
  Rng* rng;
  Tensor weights;
  Tensor operator()(const Tensor& x) {
    if (!weights.defined()) {
      weights = Tensor::zeros(x.shape(), false);
      for (int64_t i = 0; i < weights.numel(); ++i)
        weights.data()[i] = rng->gaussian();
    }
    return sum_all(mul_elem(x, weights));
  }
};

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul of all-ones 2x3 and 3x1 gives 3s") {
  Tensor a = Tensor::full({2, 3}, 1.0);
  Tensor b = Tensor::full({3, 1}, 1.0);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == std::vector<int>{2, 1});
  CHECK(c.data()[0] == 3.0);
  CHECK(c.data()[1] == 3.0);
}

TEST_CASE("rowwise_softmax of [0,0] is uniform") {
  Tensor p = rowwise_softmax(Tensor::row({0.0, 0.0}));
  CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.data()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("rowwise_softmax rows are nonnegative and sum to one") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5, 9}, rng, false);
    Tensor p = rowwise_softmax(scale(x, 3.0));
    for (int i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 9; ++j) {
        CHECK(p.at(i, j) >= 0.0);
        sum += p.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("gather_rows returns the selected row") {
  Rng rng(3);
  Tensor table = random_tensor({6, 4}, rng);
  Tensor row = gather_rows(table, {4});
  for (int j = 0; j < 4; ++j) CHECK(row.at(0, j) == table.at(4, j));
  CHECK_THROWS_AS(gather_rows(table, {6}), std::out_of_range);
  Tensor empty = gather_rows(table, {});
  CHECK(empty.shape() == std::vector<int>{0, 4});
}

TEST_CASE("backward of sum is all ones") {
  Tensor x = Tensor::full({3, 4}, 2.5, true);
  backward(sum_all(x));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("backward of a dot product returns the other factor") {
  Rng rng(11);
  Tensor a = random_tensor({1, 8}, rng);
  Tensor b = random_tensor({1, 8}, rng, false);
  backward(sum_all(mul_elem(a, b)));
  for (int j = 0; j < 8; ++j) CHECK(a.grad()[j] == b.data()[j]);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::full({2, 2}, 1.0, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), std::invalid_argument);
}

TEST_CASE("shape mismatches name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 1});
  try {
    matmul(a, b);
    FAIL("expected ShapeMismatchError");
  } catch (const ShapeMismatchError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,1]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeMismatchError);
  CHECK_THROWS_AS(mul_elem(a, b), ShapeMismatchError);
}

TEST_CASE("grad_check: quadratic loss") {
  Rng rng(5);
  ParamList params{{"w", random_tensor({3, 3}, rng)}};
  auto loss_fn = [&] {
    return scale(sum_all(mul_elem(params[0].tensor, params[0].tensor)), 0.5);
  };
  const auto report = grad_check(loss_fn, params);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: identically zero gradient") {
  Rng rng(6);
  ParamList params{{"w", random_tensor({2, 5}, rng)}};
  auto loss_fn = [&] { return scale(sum_all(params[0].tensor), 0.0); };
  const auto report = grad_check(loss_fn, params);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: random 3-layer MLP matches finite differences") {
  Rng rng(42);
  ParamList params{
      {"x", random_tensor({2, 4}, rng)},  {"w1", random_tensor({4, 5}, rng)},
      {"b1", random_tensor({1, 5}, rng)}, {"w2", random_tensor({5, 4}, rng)},
      {"b2", random_tensor({1, 4}, rng)}, {"w3", random_tensor({4, 1}, rng)},
  };
  auto loss_fn = [&] {
    Tensor h1 = gelu(add(matmul(params[0].tensor, params[1].tensor),
                         params[2].tensor));
    Tensor h2 = gelu(add(matmul(h1, params[3].tensor), params[4].tensor));
    return sum_all(matmul(h2, params[5].tensor));
  };
  const auto report = grad_check(loss_fn, params);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("every op matches central finite differences on random tensors") {
  Rng rng(2024);
  auto check = [&](const char* name, ParamList params, auto&& op) {
    CAPTURE(name);
    WeightedSum contract{&rng, {}};
    const auto report =
        grad_check([&] { return contract(op(params)); }, params);
    CHECK_MESSAGE(report.max_rel_error < 1e-6,
                  name << " worst=" << report.worst_param << " err="
                       << report.max_rel_error);
  };

  check("matmul", {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}},
        [&](ParamList& p) { return matmul(p[0].tensor, p[1].tensor); });
  check("matmul_nt", {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({5, 4}, rng)}},
        [&](ParamList& p) { return matmul_nt(p[0].tensor, p[1].tensor); });
  check("add", {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({3, 4}, rng)}},
        [&](ParamList& p) { return add(p[0].tensor, p[1].tensor); });
  check("add_row_broadcast",
        {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({1, 4}, rng)}},
        [&](ParamList& p) { return add(p[0].tensor, p[1].tensor); });
  check("sub", {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({2, 3}, rng)}},
        [&](ParamList& p) { return sub(p[0].tensor, p[1].tensor); });
  check("mul_elem", {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({2, 3}, rng)}},
        [&](ParamList& p) { return mul_elem(p[0].tensor, p[1].tensor); });
  check("scale", {{"a", random_tensor({2, 5}, rng)}},
        [&](ParamList& p) { return scale(p[0].tensor, -1.7); });
  check("rowwise_softmax", {{"a", random_tensor({3, 6}, rng)}},
        [&](ParamList& p) { return rowwise_softmax(p[0].tensor); });
  check("causal_rowwise_softmax", {{"a", random_tensor({4, 4}, rng)}},
        [&](ParamList& p) { return causal_rowwise_softmax(p[0].tensor, 0); });
  check("rowwise_log_softmax", {{"a", random_tensor({3, 5}, rng)}},
        [&](ParamList& p) { return rowwise_log_softmax(p[0].tensor); });
  check("layer_norm",
        {{"x", random_tensor({3, 6}, rng)},
         {"g", random_tensor({1, 6}, rng)},
         {"b", random_tensor({1, 6}, rng)}},
        [&](ParamList& p) {
          return layer_norm(p[0].tensor, p[1].tensor, p[2].tensor);
        });
  check("gelu", {{"a", random_tensor({3, 4}, rng)}},
        [&](ParamList& p) { return gelu(p[0].tensor); });
  check("gather_rows", {{"t", random_tensor({5, 3}, rng)}},
        [&](ParamList& p) { return gather_rows(p[0].tensor, {4, 0, 0, 2}); });
  check("concat_rows",
        {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({1, 3}, rng)}},
        [&](ParamList& p) { return concat_rows({p[0].tensor, p[1].tensor}); });
  check("slice_cols", {{"a", random_tensor({3, 6}, rng)}},
        [&](ParamList& p) { return slice_cols(p[0].tensor, 1, 4); });
  check("concat_cols",
        {{"a", random_tensor({3, 2}, rng)}, {"b", random_tensor({3, 3}, rng)}},
        [&](ParamList& p) { return concat_cols({p[0].tensor, p[1].tensor}); });
  check("pick_per_row", {{"a", random_tensor({4, 5}, rng)}},
        [&](ParamList& p) { return pick_per_row(p[0].tensor, {1, 0, 4, 2}); });
}

TEST_CASE("graph replay with an identical seed is bit-identical") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor loss = sum_all(gelu(matmul(a, rowwise_softmax(b))));
    backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad_values().begin(), a.grad_values().end());
    out.insert(out.end(), b.grad_values().begin(), b.grad_values().end());
    return out;
  };
  CHECK(run(99) == run(99));
}

TEST_CASE("gradients accumulate across reuse of one leaf") {
  Tensor x = Tensor::full({1, 3}, 2.0, true);
  // loss = sum(x) + sum(x .* x) -> dx = 1 + 2x = 5
  backward(add(sum_all(x), sum_all(mul_elem(x, x))));
  for (int j = 0; j < 3; ++j) CHECK(x.grad()[j] == 5.0);
}

TEST_SUITE_END();
