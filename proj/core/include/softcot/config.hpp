// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softcot/eval.hpp"
#include "softcot/model.hpp"
#include "softcot/rl.hpp"
#include "softcot/rollout.hpp"
#include "softcot/tasks.hpp"

namespace softcot {

// Flat key = value experiment configuration with a typed schema. Unknown
// keys and malformed values are hard errors; CLI --set overrides are applied
// after the file. The resolved form (every key, final values) is written
// into each run directory.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ExperimentConfig {
 public:
  ExperimentConfig();  // schema defaults

  static ExperimentConfig from_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Fills mode-dependent defaults (rollout.tau_cot) and type-checks every
  // value. Call once after all overrides.
  void resolve();
  void write_resolved(const std::string& path) const;

  // Typed views (resolve() must have been called).
  uint64_t seed() const;
  unsigned threads() const;
  std::string out_dir() const;
  ModelConfig model_config(int vocab_size) const;
  double model_init_std() const;
  TaskSpec task_spec() const;
  TrainConfig train_config() const;
  GenMode mode() const;
  RolloutConfig rollout_config(const ModelParams& params, const Vocab& vocab) const;
  SuiteOptions suite_options() const;

 private:
  int get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> values_;  // schema order
  bool resolved_ = false;
};

}  // namespace softcot
