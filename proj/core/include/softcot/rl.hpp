// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softcot/model.hpp"
#include "softcot/rollout.hpp"
#include "softcot/tasks.hpp"

namespace softcot {

// RLOO training: tiered rewards on the final answer, per-prompt leave-one-out
// advantages treated as stop-gradient constants, and an advantage-weighted
// negative log-likelihood surrogate. For soft/fuzzy trajectories the CoT
// log-probability is the Gaussian log-density of the stored noisy values
// around the clean values recomputed under the current parameters (additive
// theta-independent constant dropped); gradients flow through that recompute,
// never through the stored noise.

struct RewardSpec {
  double exact_reward = 100.0;
  double format_reward = 10.0;
  double zero_reward = 0.0;
};

double reward_for(VerifyResult verdict, const RewardSpec& spec);
double compute_reward(const Vocab& vocab, const std::vector<int>& answer_ids,
                      const std::string& label, AnswerType type,
                      const RewardSpec& spec);

// A_g = r_g - mean of the other G-1 rewards. Throws if G < 2.
std::vector<double> loo_advantages(const std::vector<double>& rewards);

struct RewardedGroup {
  int prompt_index = -1;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

// Differentiable log-probability of a stored trajectory under params.
// Hard mode: CoT token log-probs at the trajectory's sampling temperature
// plus answer token log-probs (temperature 1). Soft/fuzzy: Gaussian CoT
// terms plus answer token log-probs. Prefilled tokens are never scored.
// Throws for soft/fuzzy trajectories with sigma == 0 (undefined density) and
// for hard trajectories sampled at temperature 0.
Tensor traj_logprob(const ModelParams& params, const Trajectory& traj);

// -(1/(B*G)) sum_bg A_bg * logprob(y_bg). Advantages enter as constants.
// Every trajectory must match cfg's mode, temperature, sigma and placement.
Tensor rloo_loss(const ModelParams& params,
                 const std::vector<RewardedGroup>& batch,
                 const RolloutConfig& cfg);

// Linear warmup to peak over warmup_steps, then cosine decay to zero at
// total_steps.
double lr_schedule(int step, double peak_lr, int warmup_steps, int total_steps);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg);
  // Applies one decoupled-weight-decay Adam step using the gradients
  // currently stored on the parameters.
  void step(double lr);
  int64_t steps_taken() const { return steps_; }

  std::vector<std::pair<std::string, Tensor>> state_tensors() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t steps_ = 0;
};

// Global L2 gradient norm across all params; scales gradients down to
// max_norm when exceeded. Returns the pre-clip norm.
double clip_grad_norm(ParamList& params, double max_norm);

struct TrainConfig {
  int batch_prompts = 2;     // B
  int group_size = 32;       // G
  double lr = 3e-3;
  int warmup_steps = 20;
  int total_steps = 2000;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  int validation_every = 50;
  double gamma_noise = 0.33;  // sigma = gamma * rms embedding norm
  uint64_t seed = 1;
  unsigned threads = 0;       // 0 = hardware concurrency
  // Stop as soon as greedy validation reaches this rate (negative disables).
  double early_stop_val_target = -1.0;

  void validate() const;
};

struct ValidationPoint {
  int step = 0;
  double success = 0.0;
  std::string checkpoint;
};

struct TrainResult {
  std::vector<ValidationPoint> history;
  int best_step = -1;
  double best_success = 0.0;
  int final_step = 0;
  std::string best_checkpoint;
  std::string final_checkpoint;
};

// argmax over validation success; ties break toward the earliest step.
int select_best(const std::vector<ValidationPoint>& history);

// Greedy validation: hard -> temperature-0 CoT; soft/fuzzy -> sigma = 0 CoT;
// answers always greedy. Fraction of examples whose answer verifies exact.
double greedy_validation(const ModelParams& params,
                         const std::vector<TaskExample>& examples,
                         const Vocab& vocab, const RolloutConfig& rollout_cfg,
                         AnswerType type, unsigned threads = 0);

// Warm start standing in for the pretrained base model: a short supervised
// pass that teaches the answer template (stop marker context, digits, EOS)
// against SHUFFLED labels, so the model formats answers but knows nothing
// about the task mapping. Deterministic under seed.
void format_prime(ModelParams& params, const std::vector<TaskExample>& examples,
                  const Vocab& vocab, const RolloutConfig& rollout_cfg,
                  int steps, double lr, uint64_t seed);

// Full RLOO loop. Writes training.jsonl, validation.jsonl and checkpoints
// under run_dir; appends when resuming. Aborts with a diagnostic batch dump
// on a non-finite loss.
TrainResult train(ModelParams& params, const Dataset& data, const Vocab& vocab,
                  const TrainConfig& train_cfg, const RolloutConfig& rollout_cfg,
                  const std::string& run_dir,
                  const std::optional<std::string>& resume_from = std::nullopt);

}  // namespace softcot
