// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softcot/grad_check.hpp"
#include "softcot/tensor.hpp"

namespace softcot {

// Decoder-only transformer: token embedding matrix, pre-norm causal
// attention/MLP blocks with learned positional embeddings, final layer norm,
// and a decode matrix mapping the residual stream back to vocabulary logits.
// A temperature-tau softmax turns logits into next-token probabilities, with
// tau = 0 extended by continuity to the argmax one-hot.

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 0;   // n0; the decode head reads the same width (nL == n0)
  int layers = 0;
  int heads = 0;
  double mlp_ratio = 4.0;
  int max_seq_len = 0;

  int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }
  int head_dim() const { return embed_dim / heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor attn_qkv_w, attn_qkv_b;  // n0 x 3n0, 1 x 3n0
  Tensor attn_out_w, attn_out_b;  // n0 x n0, 1 x n0
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_in_w, mlp_in_b;      // n0 x hidden, 1 x hidden
  Tensor mlp_out_w, mlp_out_b;    // hidden x n0, 1 x n0
};

struct ModelParams {
  ModelConfig config;
  Tensor token_embedding;  // V x n0
  Tensor pos_embedding;    // max_seq_len x n0
  std::vector<LayerParams> stack;
  Tensor final_ln_gain, final_ln_bias;
  Tensor decode_matrix;  // n0 x V

  static ModelParams init(const ModelConfig& cfg, uint64_t seed,
                          double init_std = 0.02);

  // Ordered view over every trainable tensor; tensors are shared, not copied.
  ParamList named_params();
  ModelParams clone() const;
  void zero_grads();
  void check_finite() const;
};

// ---- forward passes ----------------------------------------------------

// Full-sequence pass from position 0; builds a graph when grads are enabled.
// h0 holds the raw input-layer rows (token embeddings or mixtures), without
// positional embeddings; those are added inside.
Tensor forward_stack(const ModelParams& params, const Tensor& h0);

// Incremental cached pass over plain doubles (generation path; never records
// a graph). Rows are fed at consecutive positions starting at cache.length.
struct KvCache {
  struct LayerKv {
    std::vector<double> keys;    // length x n0, flattened
    std::vector<double> values;  // length x n0, flattened
  };
  std::vector<LayerKv> layers;
  int length = 0;
};

KvCache make_cache(const ModelParams& params);
// Returns the final-norm output rows (t x n0, flattened) for the t new
// inputs and advances the cache.
std::vector<double> forward_incremental(const ModelParams& params,
                                        KvCache& cache, const double* rows,
                                        int t);

// ---- embedding and decoding ---------------------------------------------

Tensor embed_tokens(const ModelParams& params, const std::vector<int>& ids);
// p must be a probability row over the vocabulary (nonnegative, sums to 1
// within 1e-9); returns the convex mixture p * E as a 1 x n0 tensor.
Tensor embed_distribution(const ModelParams& params, const Tensor& p);
std::vector<double> embed_distribution_plain(const ModelParams& params,
                                             const double* p);

// softmax(logits / tau) with max subtraction; tau = 0 gives the exact argmax
// one-hot (ties broken toward the lowest index). Throws on non-finite input.
std::vector<double> temperature_softmax(const double* logits, int n,
                                        double tau);
std::vector<double> next_token_probs(const ModelParams& params,
                                     const double* hl_row, double tau);
std::vector<double> decode_logits(const ModelParams& params,
                                  const double* hl_row);
int argmax_lowest(const double* v, int n);

// sqrt(mean over embedding rows of squared L2 norm); the reference scale for
// the noise std sigma = gamma * rms.
double rms_embedding_norm(const Tensor& token_embedding);

// ---- checkpoints ---------------------------------------------------------

// Versioned binary container: magic, config header, named tensors with raw
// little-endian float64 payloads. load(save(m)) == m bitwise.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Same container, used for optimizer state sidecars; tensors keyed by name.
void save_tensor_map(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path);
std::vector<std::pair<std::string, Tensor>> load_tensor_map(
    const std::string& path);

}  // namespace softcot
