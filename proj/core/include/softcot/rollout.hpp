// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "softcot/model.hpp"
#include "softcot/rng.hpp"
#include "softcot/tasks.hpp"

namespace softcot {

// Chain-of-thought generation. Hard mode samples discrete tokens; soft and
// fuzzy modes feed the probability-mixture embedding p*E forward with
// Gaussian exploration noise (fuzzy = soft in the small-temperature regime,
// where the clean mixture collapses to a discrete-token embedding). The CoT
// stops when the greedy shadow sequence ends with the stop marker, after
// which the answer intro is prefilled and the answer is decoded greedily.

enum class GenMode { hard, soft, fuzzy };
enum class NoisePlacement { embedding, logits, logits_topk, final_hidden };

std::string gen_mode_name(GenMode mode);
GenMode gen_mode_from_name(const std::string& name);
std::string placement_name(NoisePlacement placement);
NoisePlacement placement_from_name(const std::string& name);

struct RolloutConfig {
  GenMode mode = GenMode::hard;
  double tau_cot = 1.0;
  double sigma = 0.0;  // resolved noise std (gamma * rms embedding norm)
  double gamma = 0.0;  // scale factor the sigma was derived from, for logs
  NoisePlacement placement = NoisePlacement::embedding;
  int topk = 5;  // logits_topk only
  int max_cot = 8;
  int max_answer = 5;
  std::vector<int> stop_marker;
  std::vector<int> prefill_on_stop;    // injected when the shadow hits the marker
  std::vector<int> prefill_on_budget;  // injected when max_cot is exhausted
  int answer_end_id = -1;

  // Answer decode temperature. Evaluation and validation always use 0
  // (greedy); training rollouts sample at 1 so the reward can find the
  // answer format from a cold start.
  double answer_tau = 0.0;

  void validate(int vocab_size) const;
};

RolloutConfig make_rollout_config(const Vocab& vocab, GenMode mode,
                                  double tau_cot, double sigma, int max_cot,
                                  int max_answer, double answer_tau = 0.0);

struct StepRecord {
  std::vector<double> p;  // post-temperature (and post-logit-noise) distribution
  std::vector<double> clean_h0;  // p * E            (soft/fuzzy)
  std::vector<double> noisy_h0;  // embedding fed    (soft/fuzzy)
  std::vector<double> site_clean;  // noise-site vector (logits / final_hidden)
  std::vector<double> site_noisy;
  std::vector<int> topk_indices;  // logits_topk: coordinates that got noise
  uint64_t noise_seed_offset = 0;
  int shadow_id = -1;  // argmax of p
  int hard_id = -1;    // sampled token (hard mode only)
};

struct Trajectory {
  std::vector<int> prompt_ids;
  std::vector<StepRecord> cot_steps;
  std::vector<int> prefilled;  // tokens injected, never scored
  std::vector<int> answer_ids;
  bool stopped_early = false;

  // generation config echo, required to rebuild log-probabilities
  GenMode mode = GenMode::hard;
  double tau_cot = 1.0;
  double sigma = 0.0;
  NoisePlacement placement = NoisePlacement::embedding;
  int topk = 0;
  uint64_t noise_seed = 0;  // root of this trajectory's noise stream

  // The sequence the stopping criterion monitors: generated tokens in hard
  // mode, argmax shadow tokens in soft/fuzzy mode.
  std::vector<int> shadow_sequence() const;
};

// true iff ids ends exactly with marker.
bool check_stop(const std::vector<int>& ids, const std::vector<int>& marker);

// clean + sigma * eps with eps ~ N(0, I); sigma = 0 returns clean unchanged.
std::vector<double> add_gaussian_noise(const std::vector<double>& clean,
                                       double sigma, Rng& rng);
// Adds noise to the k largest logits and sets all others to -inf. Returns
// the chosen coordinates (ascending). k must be in [1, V].
std::vector<int> apply_topk_logit_noise(std::vector<double>& logits, int k,
                                        double sigma, Rng& rng);

// Precomputed prompt state shared across a group of rollouts for one prompt.
struct PromptState {
  KvCache cache;
  std::vector<double> last_hidden;
};
PromptState prefill_prompt(const ModelParams& params,
                           const std::vector<int>& prompt_ids,
                           const RolloutConfig& cfg);

// One full rollout. Pure given (params, prompt, cfg, seed): the trajectory
// noise/sampling streams derive from seed alone.
Trajectory generate(const ModelParams& params, const std::vector<int>& prompt_ids,
                    const RolloutConfig& cfg, uint64_t seed);
Trajectory generate(const ModelParams& params, const PromptState& prompt,
                    const std::vector<int>& prompt_ids, const RolloutConfig& cfg,
                    uint64_t seed);

// n independent rollouts for one prompt plus per-trajectory correctness.
// Trajectory s uses seed mix(base_seed, s); deterministic under base_seed.
struct SampledGroup {
  std::vector<Trajectory> trajectories;
  std::vector<bool> correct;
};
SampledGroup pass_k_sampler(const ModelParams& params,
                            const std::vector<int>& prompt_ids,
                            const RolloutConfig& cfg, int n, uint64_t base_seed,
                            const std::function<bool(const Trajectory&)>& judge,
                            unsigned threads = 1);

// One JSON line per trajectory for offline inspection.
void append_trajectory_jsonl(std::ostream& out, const Vocab& vocab,
                             const Trajectory& traj, double reward);

}  // namespace softcot
