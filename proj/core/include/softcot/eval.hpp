// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "softcot/model.hpp"
#include "softcot/rollout.hpp"
#include "softcot/tasks.hpp"

namespace softcot {

// Measurement suite: six inference settings (the CoT decode varies, answers
// are always greedy), unbiased pass@k from a pool of n samples, per-position
// mean CoT entropy, and the per-token NLL of the correct continuation on a
// held-out multiple-choice set.

enum class InferenceSetting {
  hard_greedy,
  hard_sample,
  soft_greedy,
  soft_sample,
  fuzzy_greedy,
  fuzzy_sample,
};

inline constexpr InferenceSetting kAllSettings[] = {
    InferenceSetting::hard_greedy,  InferenceSetting::hard_sample,
    InferenceSetting::soft_greedy,  InferenceSetting::soft_sample,
    InferenceSetting::fuzzy_greedy, InferenceSetting::fuzzy_sample,
};

std::string setting_name(InferenceSetting setting);
InferenceSetting setting_from_name(const std::string& name);
bool setting_is_sampled(InferenceSetting setting);

// hard: tau 0 / 1; soft: tau 0.5 with sigma in {0, gamma*rms}; fuzzy:
// tau 1e-4 with sigma in {0, gamma*rms}.
RolloutConfig setting_rollout_config(InferenceSetting setting,
                                     const ModelParams& params,
                                     const Vocab& vocab, double gamma,
                                     int max_cot, int max_answer,
                                     double fuzzy_tau =  0.0001);

// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated in log space.
double pass_at_k(int n, int c, int k);

struct EntropyPoint {
  int position = 0;
  double mean_entropy = 0.0;
  int n_alive = 0;
};

double row_entropy(const std::vector<double>& p);
// Mean CoT-step entropy per position over the trajectories alive there;
// positions nobody reaches are omitted.
std::vector<EntropyPoint> entropy_profile(
    const std::vector<Trajectory>& trajectories, int max_pos);

// Streaming form used by run_suite; same math as entropy_profile.
class EntropyAccumulator {
 public:
  explicit EntropyAccumulator(int max_pos);
  void add(const Trajectory& traj);
  std::vector<EntropyPoint> profile() const;

 private:
  std::vector<double> sums_;
  std::vector<int> alive_;
};

struct McEvalItem {
  std::vector<int> prompt_ids;        // prompt + stop marker + box-open
  std::vector<int> continuation_ids;  // value tokens + EOS
};
McEvalItem make_mc_eval_item(const Vocab& vocab, const std::string& question,
                             const std::string& continuation);

// Mean over items of per-token NLL of the correct continuation,
// teacher-forced at temperature 1. Items with empty continuations are
// skipped with a warning on stderr.
double nll_correct(const ModelParams& params, const std::vector<McItem>& items,
                   const Vocab& vocab);

struct MetricsRecord {
  std::string setting;
  double pass1 = 0.0;
  std::map<int, double> pass_at;  // k -> estimate (sampled settings)
  std::vector<EntropyPoint> entropy;
  double nll = 0.0;
  int n_samples = 0;
};

struct SuiteOptions {
  int samples = 32;        // pool size n for sampled settings
  double gamma = 0.33;
  int max_cot = 8;
  int max_answer = 5;
  bool raw_pass_k = false;  // any-of-first-k instead of the unbiased estimator
  unsigned threads = 0;
  std::vector<int> ks = {1, 2, 4, 8, 16, 32};
};

std::vector<MetricsRecord> run_suite(const ModelParams& params,
                                     const std::vector<TaskExample>& test_set,
                                     const std::vector<McItem>& mc_items,
                                     const Vocab& vocab, uint64_t seed,
                                     const SuiteOptions& options);

// CSV outputs: metrics.csv rows are (setting, k, value) where k is "pass@N"
// or "nll_correct"; entropy files are (position, mean_entropy, n_alive).
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records);
void write_entropy_csv(const std::string& path,
                       const std::vector<EntropyPoint>& profile);

}  // namespace softcot
