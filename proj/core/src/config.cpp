// SPDX-License-Identifier: Apache-2.0
#include "softcot/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

namespace softcot {

namespace {

enum class KeyType { integer, real, boolean, text };

struct SchemaEntry {
  const char* key;
  KeyType type;
  const char* default_value;
};

// Schema order is the order of the resolved dump.
constexpr SchemaEntry kSchema[] = {
    {"seed", KeyType::integer, "1"},
    {"threads", KeyType::integer, "0"},
    {"out_dir", KeyType::text, "runs/default"},
    {"model.embed_dim", KeyType::integer, "32"},
    {"model.layers", KeyType::integer, "2"},
    {"model.heads", KeyType::integer, "4"},
    {"model.mlp_ratio", KeyType::real, "4.0"},
    {"model.max_seq_len", KeyType::integer, "64"},
    {"model.init_std", KeyType::real, "0.02"},
    {"task.kind", KeyType::text, "addition"},
    {"task.digits", KeyType::integer, "2"},
    {"task.summands", KeyType::integer, "2"},
    {"task.chain_length", KeyType::integer, "3"},
    {"task.nodes", KeyType::integer, "4"},
    {"task.edge_density", KeyType::real, "0.3"},
    {"task.train_size", KeyType::integer, "512"},
    {"task.val_size", KeyType::integer, "128"},
    {"task.test_size", KeyType::integer, "200"},
    {"rollout.mode", KeyType::text, "hard"},
    {"rollout.tau_cot", KeyType::text, "auto"},  // auto: 1.0 / 0.5 / 0.0001
    {"rollout.placement", KeyType::text, "embedding"},
    {"rollout.topk", KeyType::integer, "5"},
    {"rollout.max_cot", KeyType::integer, "8"},
    {"rollout.max_answer", KeyType::integer, "5"},
    {"train.batch_prompts", KeyType::integer, "2"},
    {"train.group_size", KeyType::integer, "32"},
    {"train.lr", KeyType::real, "0.003"},
    {"train.warmup_steps", KeyType::integer, "20"},
    {"train.total_steps", KeyType::integer, "2000"},
    {"train.weight_decay", KeyType::real, "0.01"},
    {"train.grad_clip", KeyType::real, "1.0"},
    {"train.validation_every", KeyType::integer, "50"},
    {"train.gamma_noise", KeyType::real, "0.33"},
    {"train.answer_tau", KeyType::real, "1.0"},
    {"train.early_stop_val_target", KeyType::real, "-1.0"},
    {"eval.samples", KeyType::integer, "32"},
    {"eval.gamma", KeyType::real, "0.33"},
    {"eval.raw_pass_k", KeyType::boolean, "false"},
};

const SchemaEntry* find_schema(const std::string& key) {
  for (const auto& entry : kSchema)
    if (key == entry.key) return &entry;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" +
                    value + "'");
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& entry : kSchema) values_.emplace_back(entry.key, entry.default_value);
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void ExperimentConfig::apply_override(const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + key_equals_value +
                      "' must look like key=value");
  set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!find_schema(key)) throw ConfigError("config: unknown key '" + key + "'");
  for (auto& [k, v] : values_)
    if (k == key) {
      v = value;
      return;
    }
}

std::string ExperimentConfig::get(const std::string& key) const {
  for (const auto& [k, v] : values_)
    if (k == key) return v;
  throw ConfigError("config: unknown key '" + key + "'");
}

int ExperimentConfig::get_int(const std::string& key) const {
  return static_cast<int>(parse_int(key, get(key)));
}
double ExperimentConfig::get_real(const std::string& key) const {
  return parse_real(key, get(key));
}
bool ExperimentConfig::get_bool(const std::string& key) const {
  return parse_bool(key, get(key));
}

void ExperimentConfig::resolve() {
  if (get("rollout.tau_cot") == "auto") {
    const GenMode m = gen_mode_from_name(get("rollout.mode"));
    const char* tau = m == GenMode::hard ? "1.0"
                      : m == GenMode::soft ? "0.5"
                                           : "0.0001";
    set("rollout.tau_cot", tau);
  }
  // Type-check everything now so later typed reads cannot surprise.
  for (const auto& entry : kSchema) {
    const std::string value = get(entry.key);
    switch (entry.type) {
      case KeyType::integer: parse_int(entry.key, value); break;
      case KeyType::real: parse_real(entry.key, value); break;
      case KeyType::boolean: parse_bool(entry.key, value); break;
      case KeyType::text: break;
    }
  }
  // Names must resolve.
  gen_mode_from_name(get("rollout.mode"));
  placement_from_name(get("rollout.placement"));
  task_kind_from_name(get("task.kind"));
  parse_real("rollout.tau_cot", get("rollout.tau_cot"));
  resolved_ = true;
}

void ExperimentConfig::write_resolved(const std::string& path) const {
  if (!resolved_) throw ConfigError("config: write_resolved before resolve()");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("config: cannot write " + path);
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
}

uint64_t ExperimentConfig::seed() const {
  return static_cast<uint64_t>(parse_int("seed", get("seed")));
}

unsigned ExperimentConfig::threads() const {
  return static_cast<unsigned>(get_int("threads"));
}

std::string ExperimentConfig::out_dir() const {
  if (const char* root = std::getenv("SOFTCOT_OUT_ROOT"))
    return std::string(root) + "/" + get("out_dir");
  return get("out_dir");
}

ModelConfig ExperimentConfig::model_config(int vocab_size) const {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = get_int("model.embed_dim");
  cfg.layers = get_int("model.layers");
  cfg.heads = get_int("model.heads");
  cfg.mlp_ratio = get_real("model.mlp_ratio");
  cfg.max_seq_len = get_int("model.max_seq_len");
  cfg.validate();
  return cfg;
}

double ExperimentConfig::model_init_std() const { return get_real("model.init_std"); }

TaskSpec ExperimentConfig::task_spec() const {
  TaskSpec spec;
  spec.kind = task_kind_from_name(get("task.kind"));
  spec.digits = get_int("task.digits");
  spec.summands = get_int("task.summands");
  spec.chain_length = get_int("task.chain_length");
  spec.nodes = get_int("task.nodes");
  spec.edge_density = get_real("task.edge_density");
  spec.train_size = get_int("task.train_size");
  spec.val_size = get_int("task.val_size");
  spec.test_size = get_int("task.test_size");
  spec.seed = substream(seed(), "data");
  spec.validate();
  return spec;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig cfg;
  cfg.batch_prompts = get_int("train.batch_prompts");
  cfg.group_size = get_int("train.group_size");
  cfg.lr = get_real("train.lr");
  cfg.warmup_steps = get_int("train.warmup_steps");
  cfg.total_steps = get_int("train.total_steps");
  cfg.weight_decay = get_real("train.weight_decay");
  cfg.grad_clip = get_real("train.grad_clip");
  cfg.validation_every = get_int("train.validation_every");
  cfg.gamma_noise = get_real("train.gamma_noise");
  cfg.early_stop_val_target = get_real("train.early_stop_val_target");
  cfg.seed = seed();
  cfg.threads = threads();
  cfg.validate();
  return cfg;
}

GenMode ExperimentConfig::mode() const {
  return gen_mode_from_name(get("rollout.mode"));
}

RolloutConfig ExperimentConfig::rollout_config(const ModelParams& params,
                                               const Vocab& vocab) const {
  const GenMode m = mode();
  const double gamma = get_real("train.gamma_noise");
  const double sigma =
      m == GenMode::hard ? 0.0
                         : gamma * rms_embedding_norm(params.token_embedding);
  RolloutConfig cfg = make_rollout_config(
      vocab, m, get_real("rollout.tau_cot"), sigma, get_int("rollout.max_cot"),
      get_int("rollout.max_answer"), get_real("train.answer_tau"));
  cfg.gamma = m == GenMode::hard ? 0.0 : gamma;
  cfg.placement = placement_from_name(get("rollout.placement"));
  cfg.topk = get_int("rollout.topk");
  cfg.validate(params.config.vocab_size);
  return cfg;
}

SuiteOptions ExperimentConfig::suite_options() const {
  SuiteOptions options;
  options.samples = get_int("eval.samples");
  options.gamma = get_real("eval.gamma");
  options.max_cot = get_int("rollout.max_cot");
  options.max_answer = get_int("rollout.max_answer");
  options.raw_pass_k = get_bool("eval.raw_pass_k");
  options.threads = threads();
  return options;
}

}  // namespace softcot
