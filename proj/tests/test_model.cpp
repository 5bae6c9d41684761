// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "softcot/model.hpp"
#include "softcot/rng.hpp"
#include "softcot/tensor.hpp"

using namespace softcot;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.vocab_size = 7;
  cfg.embed_dim = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 4.0;
  cfg.max_seq_len = 16;
  return cfg;
}

Tensor random_rows(int rows, int cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.1 * rng.gaussian();
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("embed_tokens returns embedding rows") {
  ModelParams params = ModelParams::init(small_config(), 1);
  NoGradGuard no_grad;
  Tensor rows = embed_tokens(params, {3, 3, 0});
  for (int j = 0; j < 8; ++j) {
    CHECK(rows.at(0, j) == params.token_embedding.at(3, j));
    CHECK(rows.at(1, j) == params.token_embedding.at(3, j));
    CHECK(rows.at(2, j) == params.token_embedding.at(0, j));
  }
  CHECK(embed_tokens(params, {}).shape() == std::vector<int>{0, 8});
  CHECK_THROWS_AS(embed_tokens(params, {7}), std::out_of_range);
}

TEST_CASE("embed_distribution: degenerate, midpoint, validation") {
  ModelParams params = ModelParams::init(small_config(), 2);
  NoGradGuard no_grad;
  const int v = params.config.vocab_size;

  std::vector<double> one_hot(v, 0.0);
  one_hot[4] = 1.0;
  Tensor mix = embed_distribution(params, Tensor::row(one_hot));
  for (int j = 0; j < 8; ++j) CHECK(mix.at(0, j) == params.token_embedding.at(4, j));

  std::vector<double> half(v, 0.0);
  half[1] = 0.5;
  half[5] = 0.5;
  Tensor mid = embed_distribution(params, Tensor::row(half));
  for (int j = 0; j < 8; ++j)
    CHECK(mid.at(0, j) ==
          doctest::Approx(0.5 * params.token_embedding.at(1, j) +
                          0.5 * params.token_embedding.at(5, j))
              .epsilon(1e-14));

  std::vector<double> bad(v, 0.0);
  bad[0] = 0.7;
  CHECK_THROWS_AS(embed_distribution(params, Tensor::row(bad)),
                  std::invalid_argument);
  bad[1] = -0.1;
  bad[0] = 1.1;
  CHECK_THROWS_AS(embed_distribution(params, Tensor::row(bad)),
                  std::invalid_argument);
}

TEST_CASE("embed_distribution is linear in p") {
  ModelParams params = ModelParams::init(small_config(), 3);
  NoGradGuard no_grad;
  Rng rng(17);
  const int v = params.config.vocab_size;
  auto random_prob_row = [&] {
    std::vector<double> p(v);
    double total = 0.0;
    for (double& x : p) {
      x = -std::log(rng.uniform01() + 1e-300);
      total += x;
    }
    for (double& x : p) x /= total;
    return p;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_prob_row();
    const auto q = random_prob_row();
    const double alpha = rng.uniform01();
    std::vector<double> blend(v);
    for (int i = 0; i < v; ++i) blend[i] = alpha * p[i] + (1 - alpha) * q[i];
    // Renormalize exactly to absorb rounding in the blend.
    double total = 0.0;
    for (double x : blend) total += x;
    for (double& x : blend) x /= total;
    Tensor lhs = embed_distribution(params, Tensor::row(blend));
    Tensor ep = embed_distribution(params, Tensor::row(p));
    Tensor eq = embed_distribution(params, Tensor::row(q));
    for (int j = 0; j < 8; ++j) {
      const double rhs = alpha * ep.at(0, j) + (1 - alpha) * eq.at(0, j);
      CHECK(std::abs(lhs.at(0, j) - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("forward_stack prefix property and causality") {
  ModelParams params = ModelParams::init(small_config(), 4);
  NoGradGuard no_grad;
  Rng rng(5);
  const int t = 9;
  Tensor h0 = random_rows(t, 8, rng);

  Tensor full = forward_stack(params, h0);
  for (int s = 1; s <= t; ++s) {
    Tensor prefix_in = Tensor::zeros({s, 8});
    std::copy(h0.data(), h0.data() + static_cast<size_t>(s) * 8, prefix_in.data());
    Tensor prefix_out = forward_stack(params, prefix_in);
    double max_diff = 0.0;
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < 8; ++j)
        max_diff = std::max(max_diff, std::abs(prefix_out.at(i, j) - full.at(i, j)));
    CHECK(max_diff < 1e-9);
  }

  // Permuting a future row leaves past outputs unchanged.
  Tensor permuted = h0.clone();
  for (int j = 0; j < 8; ++j) {
    std::swap(permuted.data()[static_cast<size_t>(t - 1) * 8 + j],
              permuted.data()[static_cast<size_t>(t - 2) * 8 + j]);
  }
  Tensor out_permuted = forward_stack(params, permuted);
  for (int i = 0; i < t - 2; ++i)
    for (int j = 0; j < 8; ++j) CHECK(out_permuted.at(i, j) == full.at(i, j));
}

TEST_CASE("incremental cache matches full recomputation") {
  ModelParams params = ModelParams::init(small_config(), 6);
  NoGradGuard no_grad;
  Rng rng(8);
  const int t = 11;
  Tensor h0 = random_rows(t, 8, rng);

  Tensor full = forward_stack(params, h0);

  KvCache cache = make_cache(params);
  std::vector<double> incremental;
  // Feed in uneven chunks to exercise both the batch and single-row paths.
  const int chunks[] = {4, 1, 5, 1};
  int fed = 0;
  for (int chunk : chunks) {
    auto rows = forward_incremental(params, cache,
                                    h0.data() + static_cast<size_t>(fed) * 8, chunk);
    incremental.insert(incremental.end(), rows.begin(), rows.end());
    fed += chunk;
  }
  REQUIRE(fed == t);

  double max_diff = 0.0;
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < 8; ++j)
      max_diff = std::max(max_diff,
                          std::abs(incremental[static_cast<size_t>(i) * 8 + j] -
                                   full.at(i, j)));
  CHECK(max_diff < 1e-9);
  // The two paths share their row primitives, so they agree bit for bit.
  CHECK(max_diff == 0.0);

  KvCache big = make_cache(params);
  std::vector<double> too_long(17 * 8, 0.0);
  CHECK_THROWS_AS(forward_incremental(params, big, too_long.data(), 17),
                  std::invalid_argument);
}

TEST_CASE("temperature softmax: symmetry, limits, ties, errors") {
  const double logits_pair[] = {1.0, 1.0};
  auto p = temperature_softmax(logits_pair, 2, 1.0);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));

  const double logits_three[] = {2.0, 1.0, 1.0};
  p = temperature_softmax(logits_three, 3, 0.0);
  CHECK(p == std::vector<double>{1.0, 0.0, 0.0});

  const double logits_grow[] = {1.0, 2.0};
  p = temperature_softmax(logits_grow, 2, 0.0001);
  CHECK(p[1] >= 1.0 - 1e-12);

  const double tied[] = {3.0, 3.0, 1.0};
  p = temperature_softmax(tied, 3, 0.0);
  CHECK(p == std::vector<double>{1.0, 0.0, 0.0});  // tie breaks low

  const double bad[] = {1.0, std::nan("")};
  CHECK_THROWS(temperature_softmax(bad, 2, 1.0));
  CHECK_THROWS_AS(temperature_softmax(logits_pair, 2, -0.5), std::invalid_argument);
}

TEST_CASE("max coordinate converges monotonically to the argmax one-hot") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> logits(6);
    for (double& l : logits) l = rng.gaussian();
    const int arg = argmax_lowest(logits.data(), 6);
    double previous = 0.0;
    for (double tau : {1.0, 0.1, 0.01, 0.0001}) {
      const auto p = temperature_softmax(logits.data(), 6, tau);
      CHECK(argmax_lowest(p.data(), 6) == arg);
      CHECK(p[arg] >= previous);
      previous = p[arg];
    }
    const auto limit = temperature_softmax(logits.data(), 6, 0.0);
    CHECK(limit[arg] == 1.0);
    CHECK(previous >= 1.0 - 1e-9);
  }
}

TEST_CASE("next_token_probs decodes through the vocabulary head") {
  ModelParams params = ModelParams::init(small_config(), 9);
  NoGradGuard no_grad;
  Rng rng(33);
  std::vector<double> hl(8);
  for (double& x : hl) x = rng.gaussian();
  const auto logits = decode_logits(params, hl.data());
  const auto probs = next_token_probs(params, hl.data(), 0.7);
  const auto expected = temperature_softmax(logits.data(), 7, 0.7);
  CHECK(probs == expected);
}

TEST_CASE("rms_embedding_norm") {
  ModelConfig cfg = small_config();
  ModelParams params = ModelParams::init(cfg, 10);

  // All rows unit norm -> 1.
  for (int i = 0; i < cfg.vocab_size; ++i) {
    double norm = 0.0;
    for (int j = 0; j < cfg.embed_dim; ++j)
      norm += params.token_embedding.at(i, j) * params.token_embedding.at(i, j);
    norm = std::sqrt(norm);
    for (int j = 0; j < cfg.embed_dim; ++j)
      params.token_embedding.data()[static_cast<size_t>(i) * cfg.embed_dim + j] /= norm;
  }
  CHECK(rms_embedding_norm(params.token_embedding) == doctest::Approx(1.0).epsilon(1e-12));

  // Single row of all 2s with four columns -> 4.
  Tensor single = Tensor::full({1, 4}, 2.0);
  CHECK(rms_embedding_norm(single) == doctest::Approx(4.0).epsilon(1e-15));

  // Random matrix matches a direct two-pass recomputation.
  Rng rng(12);
  Tensor e = Tensor::zeros({9, 5});
  for (int64_t i = 0; i < e.numel(); ++i) e.data()[i] = rng.gaussian();
  double mean_sq = 0.0;
  for (int i = 0; i < 9; ++i) {
    double row_sq = 0.0;
    for (int j = 0; j < 5; ++j) row_sq += e.at(i, j) * e.at(i, j);
    mean_sq += row_sq;
  }
  mean_sq /= 9.0;
  CHECK(rms_embedding_norm(e) == doctest::Approx(std::sqrt(mean_sq)).epsilon(1e-12));

  CHECK_THROWS_AS(rms_embedding_norm(Tensor::zeros({0, 4})), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bitwise") {
  ModelParams params = ModelParams::init(small_config(), 77);
  const std::string path = "test_ckpt_roundtrip.bin";
  save_checkpoint(params, path);
  ModelParams loaded = load_checkpoint(path);
  CHECK(loaded.config == params.config);
  auto a = params.named_params();
  auto b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor.values() == b[i].tensor.values());
  }
  std::remove(path.c_str());
  CHECK_THROWS(load_checkpoint("does_not_exist.bin"));
}

TEST_SUITE_END();
