// SPDX-License-Identifier: Apache-2.0
#include "softcot/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "softcot/detail/rowmath.hpp"
#include "softcot/rng.hpp"

namespace softcot {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("model: vocab_size must be >= 2");
  if (embed_dim < 1) throw std::invalid_argument("model: embed_dim must be >= 1");
  if (layers < 1) throw std::invalid_argument("model: layers must be >= 1");
  if (heads < 1 || embed_dim % heads != 0)
    throw std::invalid_argument("model: embed_dim must be divisible by heads");
  if (mlp_hidden() < 1) throw std::invalid_argument("model: mlp_ratio too small");
  if (max_seq_len < 1) throw std::invalid_argument("model: max_seq_len must be >= 1");
}

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double std_dev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = std_dev * rng.gaussian();
  return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed,
                              double init_std) {
  cfg.validate();
  Rng rng(seed);
  const int n0 = cfg.embed_dim;
  const int hidden = cfg.mlp_hidden();
  ModelParams p;
  p.config = cfg;
  p.token_embedding = gaussian_tensor({cfg.vocab_size, n0}, init_std, rng);
  p.pos_embedding = gaussian_tensor({cfg.max_seq_len, n0}, init_std, rng);
  p.stack.resize(cfg.layers);
  for (auto& layer : p.stack) {
    layer.ln1_gain = Tensor::full({1, n0}, 1.0, true);
    layer.ln1_bias = Tensor::zeros({1, n0}, true);
    layer.attn_qkv_w = gaussian_tensor({n0, 3 * n0}, init_std, rng);
    layer.attn_qkv_b = Tensor::zeros({1, 3 * n0}, true);
    layer.attn_out_w = gaussian_tensor({n0, n0}, init_std, rng);
    layer.attn_out_b = Tensor::zeros({1, n0}, true);
    layer.ln2_gain = Tensor::full({1, n0}, 1.0, true);
    layer.ln2_bias = Tensor::zeros({1, n0}, true);
    layer.mlp_in_w = gaussian_tensor({n0, hidden}, init_std, rng);
    layer.mlp_in_b = Tensor::zeros({1, hidden}, true);
    layer.mlp_out_w = gaussian_tensor({hidden, n0}, init_std, rng);
    layer.mlp_out_b = Tensor::zeros({1, n0}, true);
  }
  p.final_ln_gain = Tensor::full({1, n0}, 1.0, true);
  p.final_ln_bias = Tensor::zeros({1, n0}, true);
  p.decode_matrix = gaussian_tensor({n0, cfg.vocab_size}, init_std, rng);
  return p;
}

ParamList ModelParams::named_params() {
  ParamList list;
  list.push_back({"embed.tokens", token_embedding});
  list.push_back({"embed.pos", pos_embedding});
  for (size_t i = 0; i < stack.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto& l = stack[i];
    list.push_back({prefix + "ln1.gain", l.ln1_gain});
    list.push_back({prefix + "ln1.bias", l.ln1_bias});
    list.push_back({prefix + "attn.qkv_w", l.attn_qkv_w});
    list.push_back({prefix + "attn.qkv_b", l.attn_qkv_b});
    list.push_back({prefix + "attn.out_w", l.attn_out_w});
    list.push_back({prefix + "attn.out_b", l.attn_out_b});
    list.push_back({prefix + "ln2.gain", l.ln2_gain});
    list.push_back({prefix + "ln2.bias", l.ln2_bias});
    list.push_back({prefix + "mlp.in_w", l.mlp_in_w});
    list.push_back({prefix + "mlp.in_b", l.mlp_in_b});
    list.push_back({prefix + "mlp.out_w", l.mlp_out_w});
    list.push_back({prefix + "mlp.out_b", l.mlp_out_b});
  }
  list.push_back({"final_ln.gain", final_ln_gain});
  list.push_back({"final_ln.bias", final_ln_bias});
  list.push_back({"decode.w", decode_matrix});
  return list;
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.config = config;
  copy.token_embedding = token_embedding.clone();
  copy.pos_embedding = pos_embedding.clone();
  copy.stack.reserve(stack.size());
  for (const auto& l : stack) {
    LayerParams c;
    c.ln1_gain = l.ln1_gain.clone();
    c.ln1_bias = l.ln1_bias.clone();
    c.attn_qkv_w = l.attn_qkv_w.clone();
    c.attn_qkv_b = l.attn_qkv_b.clone();
    c.attn_out_w = l.attn_out_w.clone();
    c.attn_out_b = l.attn_out_b.clone();
    c.ln2_gain = l.ln2_gain.clone();
    c.ln2_bias = l.ln2_bias.clone();
    c.mlp_in_w = l.mlp_in_w.clone();
    c.mlp_in_b = l.mlp_in_b.clone();
    c.mlp_out_w = l.mlp_out_w.clone();
    c.mlp_out_b = l.mlp_out_b.clone();
    copy.stack.push_back(std::move(c));
  }
  copy.final_ln_gain = final_ln_gain.clone();
  copy.final_ln_bias = final_ln_bias.clone();
  copy.decode_matrix = decode_matrix.clone();
  return copy;
}

void ModelParams::zero_grads() {
  for (auto& p : named_params()) p.tensor.zero_grad();
}

void ModelParams::check_finite() const {
  auto list = const_cast<ModelParams*>(this)->named_params();
  for (const auto& p : list)
    for (int64_t i = 0; i < p.tensor.numel(); ++i)
      if (!std::isfinite(p.tensor.data()[i]))
        throw std::runtime_error("model: non-finite value in " + p.name);
}

// ---- full-sequence graph forward ----------------------------------------

Tensor forward_stack(const ModelParams& params, const Tensor& h0) {
  const ModelConfig& cfg = params.config;
  const int t = h0.rows();
  if (h0.cols() != cfg.embed_dim)
    throw ShapeMismatchError("forward_stack", h0.shape_str(),
                             "[t," + std::to_string(cfg.embed_dim) + "]");
  if (t > cfg.max_seq_len)
    throw std::invalid_argument("forward_stack: sequence length " +
                                std::to_string(t) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  std::vector<int> positions(t);
  for (int i = 0; i < t; ++i) positions[i] = i;
  Tensor x = add(h0, gather_rows(params.pos_embedding, positions));
  const int n0 = cfg.embed_dim;
  const int dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& layer : params.stack) {
    Tensor ln1 = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    Tensor qkv = add(matmul(ln1, layer.attn_qkv_w), layer.attn_qkv_b);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      Tensor q = slice_cols(qkv, h * dh, (h + 1) * dh);
      Tensor k = slice_cols(qkv, n0 + h * dh, n0 + (h + 1) * dh);
      Tensor v = slice_cols(qkv, 2 * n0 + h * dh, 2 * n0 + (h + 1) * dh);
      Tensor scores = scale(matmul_nt(q, k), inv_sqrt_dh);
      Tensor probs = causal_rowwise_softmax(scores, 0);
      head_outputs.push_back(matmul(probs, v));
    }
    Tensor att = concat_cols(head_outputs);
    Tensor proj = add(matmul(att, layer.attn_out_w), layer.attn_out_b);
    x = add(x, proj);
    Tensor ln2 = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Tensor hidden = gelu(add(matmul(ln2, layer.mlp_in_w), layer.mlp_in_b));
    Tensor mlp = add(matmul(hidden, layer.mlp_out_w), layer.mlp_out_b);
    x = add(x, mlp);
  }
  return layer_norm(x, params.final_ln_gain, params.final_ln_bias);
}

// ---- incremental cached forward ------------------------------------------

KvCache make_cache(const ModelParams& params) {
  KvCache cache;
  cache.layers.resize(params.stack.size());
  return cache;
}

std::vector<double> forward_incremental(const ModelParams& params,
                                        KvCache& cache, const double* rows,
                                        int t) {
  const ModelConfig& cfg = params.config;
  const int n0 = cfg.embed_dim;
  const int dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  if (cache.length + t > cfg.max_seq_len)
    throw std::invalid_argument("forward_incremental: sequence length " +
                                std::to_string(cache.length + t) +
                                " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  std::vector<double> out(static_cast<size_t>(t) * n0);
  std::vector<double> x(n0), ln_row(n0), qkv(3 * n0), att(n0), proj(n0);
  std::vector<double> hidden(cfg.mlp_hidden());
  std::vector<double> scores, probs;
  for (int r = 0; r < t; ++r) {
    const int pos = cache.length;
    const double* pos_row = params.pos_embedding.data() + static_cast<size_t>(pos) * n0;
    const double* in_row = rows + static_cast<size_t>(r) * n0;
    for (int j = 0; j < n0; ++j) x[j] = in_row[j] + pos_row[j];
    for (size_t li = 0; li < params.stack.size(); ++li) {
      const auto& layer = params.stack[li];
      auto& kv = cache.layers[li];
      double mean, inv_std;
      detail::layer_norm_row_stats(x.data(), n0, 1e-5, &mean, &inv_std);
      for (int j = 0; j < n0; ++j)
        ln_row[j] = (x[j] - mean) * inv_std * layer.ln1_gain.data()[j] +
                    layer.ln1_bias.data()[j];
      detail::vec_mat(ln_row.data(), layer.attn_qkv_w.data(), n0, 3 * n0,
                      qkv.data());
      for (int j = 0; j < 3 * n0; ++j) qkv[j] = qkv[j] + layer.attn_qkv_b.data()[j];
      kv.keys.insert(kv.keys.end(), qkv.begin() + n0, qkv.begin() + 2 * n0);
      kv.values.insert(kv.values.end(), qkv.begin() + 2 * n0, qkv.begin() + 3 * n0);
      const int keys = pos + 1;
      scores.resize(keys);
      probs.resize(keys);
      for (int h = 0; h < cfg.heads; ++h) {
        const double* q = qkv.data() + h * dh;
        for (int j = 0; j < keys; ++j) {
          const double* krow = kv.keys.data() + static_cast<size_t>(j) * n0 + h * dh;
          double dot = 0.0;
          for (int d = 0; d < dh; ++d) dot += q[d] * krow[d];
          scores[j] = dot * inv_sqrt_dh;
        }
        detail::softmax_row_inplace(scores.data(), probs.data(), keys);
        double* head_out = att.data() + h * dh;
        for (int d = 0; d < dh; ++d) head_out[d] = 0.0;
        for (int j = 0; j < keys; ++j) {
          const double pj = probs[j];
          if (pj == 0.0) continue;
          const double* vrow =
              kv.values.data() + static_cast<size_t>(j) * n0 + h * dh;
          for (int d = 0; d < dh; ++d) head_out[d] += pj * vrow[d];
        }
      }
      detail::vec_mat(att.data(), layer.attn_out_w.data(), n0, n0, proj.data());
      for (int j = 0; j < n0; ++j) proj[j] = proj[j] + layer.attn_out_b.data()[j];
      for (int j = 0; j < n0; ++j) x[j] = x[j] + proj[j];
      detail::layer_norm_row_stats(x.data(), n0, 1e-5, &mean, &inv_std);
      for (int j = 0; j < n0; ++j)
        ln_row[j] = (x[j] - mean) * inv_std * layer.ln2_gain.data()[j] +
                    layer.ln2_bias.data()[j];
      detail::vec_mat(ln_row.data(), layer.mlp_in_w.data(), n0, cfg.mlp_hidden(),
                      hidden.data());
      for (int j = 0; j < cfg.mlp_hidden(); ++j)
        hidden[j] = detail::gelu_scalar(hidden[j] + layer.mlp_in_b.data()[j]);
      detail::vec_mat(hidden.data(), layer.mlp_out_w.data(), cfg.mlp_hidden(), n0,
                      proj.data());
      for (int j = 0; j < n0; ++j) proj[j] = proj[j] + layer.mlp_out_b.data()[j];
      for (int j = 0; j < n0; ++j) x[j] = x[j] + proj[j];
    }
    double mean, inv_std;
    detail::layer_norm_row_stats(x.data(), n0, 1e-5, &mean, &inv_std);
    double* out_row = out.data() + static_cast<size_t>(r) * n0;
    for (int j = 0; j < n0; ++j)
      out_row[j] = (x[j] - mean) * inv_std * params.final_ln_gain.data()[j] +
                   params.final_ln_bias.data()[j];
    cache.length += 1;
  }
  return out;
}

// ---- embedding and decoding ----------------------------------------------

Tensor embed_tokens(const ModelParams& params, const std::vector<int>& ids) {
  return gather_rows(params.token_embedding, ids);
}

namespace {

void validate_probability_row(const double* p, int n) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0))
      throw std::invalid_argument("embed_distribution: negative probability");
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument(
        "embed_distribution: probabilities sum to " + std::to_string(sum));
}

}  // namespace

Tensor embed_distribution(const ModelParams& params, const Tensor& p) {
  if (p.shape() != std::vector<int>{1, params.config.vocab_size})
    throw ShapeMismatchError("embed_distribution", p.shape_str(),
                             "[1," + std::to_string(params.config.vocab_size) + "]");
  validate_probability_row(p.data(), p.cols());
  return matmul(p, params.token_embedding);
}

std::vector<double> embed_distribution_plain(const ModelParams& params,
                                             const double* p) {
  const int v = params.config.vocab_size;
  const int n0 = params.config.embed_dim;
  validate_probability_row(p, v);
  std::vector<double> out(n0);
  detail::vec_mat(p, params.token_embedding.data(), v, n0, out.data());
  return out;
}

int argmax_lowest(const double* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::vector<double> temperature_softmax(const double* logits, int n,
                                        double tau) {
  if (tau < 0.0)
    throw std::invalid_argument("temperature_softmax: negative temperature");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(logits[i]) && logits[i] != -INFINITY)
      throw std::runtime_error("temperature_softmax: non-finite logits");
  std::vector<double> p(n, 0.0);
  if (tau == 0.0) {
    p[argmax_lowest(logits, n)] = 1.0;
    return p;
  }
  std::vector<double> scaled(n);
  for (int i = 0; i < n; ++i) scaled[i] = logits[i] / tau;
  detail::softmax_row_inplace(scaled.data(), p.data(), n);
  return p;
}

std::vector<double> decode_logits(const ModelParams& params,
                                  const double* hl_row) {
  const int n0 = params.config.embed_dim;
  const int v = params.config.vocab_size;
  std::vector<double> logits(v);
  detail::vec_mat(hl_row, params.decode_matrix.data(), n0, v, logits.data());
  return logits;
}

std::vector<double> next_token_probs(const ModelParams& params,
                                     const double* hl_row, double tau) {
  const std::vector<double> logits = decode_logits(params, hl_row);
  for (double l : logits)
    if (!std::isfinite(l))
      throw std::runtime_error("next_token_probs: non-finite logits");
  return temperature_softmax(logits.data(), params.config.vocab_size, tau);
}

double rms_embedding_norm(const Tensor& token_embedding) {
  if (token_embedding.rows() < 1)
    throw std::invalid_argument("rms_embedding_norm: empty embedding matrix");
  double sum_sq = 0.0;
  for (int64_t i = 0; i < token_embedding.numel(); ++i)
    sum_sq += token_embedding.data()[i] * token_embedding.data()[i];
  return std::sqrt(sum_sq / token_embedding.rows());
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'C', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr char kMapMagic[8] = {'S', 'C', 'O', 'T', 'T', 'M', 'A', 'P'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return value;
}

void write_tensor_entry(std::ofstream& out, const std::string& name,
                        const Tensor& t) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape().size()));
  for (int d : t.shape()) write_pod<int32_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor_entry(std::ifstream& in) {
  const uint32_t name_len = read_pod<uint32_t>(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  const uint32_t ndim = read_pod<uint32_t>(in);
  std::vector<int> shape(ndim);
  for (uint32_t i = 0; i < ndim; ++i) shape[i] = read_pod<int32_t>(in);
  Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<uint32_t>(out, kCheckpointVersion);
  const ModelConfig& c = params.config;
  write_pod<int32_t>(out, c.vocab_size);
  write_pod<int32_t>(out, c.embed_dim);
  write_pod<int32_t>(out, c.layers);
  write_pod<int32_t>(out, c.heads);
  write_pod<double>(out, c.mlp_ratio);
  write_pod<int32_t>(out, c.max_seq_len);
  auto list = const_cast<ModelParams&>(params).named_params();
  write_pod<uint32_t>(out, static_cast<uint32_t>(list.size()));
  for (const auto& p : list) write_tensor_entry(out, p.name, p.tensor);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  ModelConfig cfg;
  cfg.vocab_size = read_pod<int32_t>(in);
  cfg.embed_dim = read_pod<int32_t>(in);
  cfg.layers = read_pod<int32_t>(in);
  cfg.heads = read_pod<int32_t>(in);
  cfg.mlp_ratio = read_pod<double>(in);
  cfg.max_seq_len = read_pod<int32_t>(in);
  ModelParams params = ModelParams::init(cfg, /*seed=*/0);
  auto list = params.named_params();
  const uint32_t count = read_pod<uint32_t>(in);
  if (count != list.size())
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, tensor] = read_tensor_entry(in);
    if (name != list[i].name)
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
    if (tensor.shape() != list[i].tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    list[i].tensor.values() = tensor.values();
  }
  return params;
}

void save_tensor_map(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("tensor_map: cannot open " + path);
  out.write(kMapMagic, sizeof(kMapMagic));
  write_pod<uint32_t>(out, kCheckpointVersion);
  write_pod<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) write_tensor_entry(out, name, tensor);
  if (!out) throw std::runtime_error("tensor_map: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> load_tensor_map(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("tensor_map: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMapMagic, sizeof(magic)) != 0)
    throw std::runtime_error("tensor_map: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("tensor_map: unsupported version");
  const uint32_t count = read_pod<uint32_t>(in);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) out.push_back(read_tensor_entry(in));
  return out;
}

}  // namespace softcot
