// SPDX-License-Identifier: Apache-2.0
#include "softcot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "softcot/detail/rowmath.hpp"
#include "softcot/parallel.hpp"
#include "softcot/rng.hpp"

namespace softcot {

std::string setting_name(InferenceSetting setting) {
  switch (setting) {
    case InferenceSetting::hard_greedy: return "hard_greedy";
    case InferenceSetting::hard_sample: return "hard_sample";
    case InferenceSetting::soft_greedy: return "soft_greedy";
    case InferenceSetting::soft_sample: return "soft_sample";
    case InferenceSetting::fuzzy_greedy: return "fuzzy_greedy";
    case InferenceSetting::fuzzy_sample: return "fuzzy_sample";
  }
  throw std::logic_error("setting_name: bad setting");
}

InferenceSetting setting_from_name(const std::string& name) {
  for (InferenceSetting s : kAllSettings)
    if (setting_name(s) == name) return s;
  throw std::invalid_argument("unknown inference setting '" + name + "'");
}

bool setting_is_sampled(InferenceSetting setting) {
  switch (setting) {
    case InferenceSetting::hard_sample:
    case InferenceSetting::soft_sample:
    case InferenceSetting::fuzzy_sample:
      return true;
    default:
      return false;
  }
}

RolloutConfig setting_rollout_config(InferenceSetting setting,
                                     const ModelParams& params,
                                     const Vocab& vocab, double gamma,
                                     int max_cot, int max_answer,
                                     double fuzzy_tau) {
  const double sigma = gamma * rms_embedding_norm(params.token_embedding);
  switch (setting) {
    case InferenceSetting::hard_greedy:
      return make_rollout_config(vocab, GenMode::hard, 0.0, 0.0, max_cot,
                                 max_answer);
    case InferenceSetting::hard_sample:
      return make_rollout_config(vocab, GenMode::hard, 1.0, 0.0, max_cot,
                                 max_answer);
    case InferenceSetting::soft_greedy:
      return make_rollout_config(vocab, GenMode::soft, 0.5, 0.0, max_cot,
                                 max_answer);
    case InferenceSetting::soft_sample:
      return make_rollout_config(vocab, GenMode::soft, 0.5, sigma, max_cot,
                                 max_answer);
    case InferenceSetting::fuzzy_greedy:
      return make_rollout_config(vocab, GenMode::fuzzy, fuzzy_tau, 0.0, max_cot,
                                 max_answer);
    case InferenceSetting::fuzzy_sample:
      return make_rollout_config(vocab, GenMode::fuzzy, fuzzy_tau, sigma,
                                 max_cot, max_answer);
  }
  throw std::logic_error("setting_rollout_config: bad setting");
}

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n)
    throw std::invalid_argument("pass_at_k: need 0 <= c <= n, n >= 1");
  if (k < 1 || k > n)
    throw std::invalid_argument("pass_at_k: need 1 <= k <= n, got k=" +
                                std::to_string(k) + " n=" + std::to_string(n));
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) in log space.
  const double log_ratio = std::lgamma(n - c + 1.0) - std::lgamma(n - c - k + 1.0) -
                           std::lgamma(n + 1.0) + std::lgamma(n - k + 1.0);
  return 1.0 - std::exp(log_ratio);
}

double row_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

EntropyAccumulator::EntropyAccumulator(int max_pos)
    : sums_(static_cast<size_t>(std::max(0, max_pos)), 0.0),
      alive_(static_cast<size_t>(std::max(0, max_pos)), 0) {}

void EntropyAccumulator::add(const Trajectory& traj) {
  const size_t limit = std::min(sums_.size(), traj.cot_steps.size());
  for (size_t t = 0; t < limit; ++t) {
    sums_[t] += row_entropy(traj.cot_steps[t].p);
    alive_[t] += 1;
  }
}

std::vector<EntropyPoint> EntropyAccumulator::profile() const {
  std::vector<EntropyPoint> out;
  for (size_t t = 0; t < sums_.size(); ++t)
    if (alive_[t] > 0)
      out.push_back({static_cast<int>(t), sums_[t] / alive_[t], alive_[t]});
  return out;
}

std::vector<EntropyPoint> entropy_profile(
    const std::vector<Trajectory>& trajectories, int max_pos) {
  EntropyAccumulator acc(max_pos);
  for (const auto& traj : trajectories) acc.add(traj);
  return acc.profile();
}

McEvalItem make_mc_eval_item(const Vocab& vocab, const std::string& question,
                             const std::string& continuation) {
  McEvalItem item;
  item.prompt_ids = format_prompt(vocab, question);
  const auto marker = stop_marker_ids(vocab);
  item.prompt_ids.insert(item.prompt_ids.end(), marker.begin(), marker.end());
  item.prompt_ids.push_back(box_open_id(vocab));
  item.continuation_ids = vocab.encode(continuation);
  item.continuation_ids.push_back(Vocab::kEos);
  return item;
}

double nll_correct(const ModelParams& params, const std::vector<McItem>& items,
                   const Vocab& vocab) {
  if (items.empty()) throw std::invalid_argument("nll_correct: no items");
  NoGradGuard no_grad;
  const int n0 = params.config.embed_dim;
  const int v = params.config.vocab_size;
  double total = 0.0;
  int counted = 0;
  for (const auto& mc : items) {
    if (mc.correct.empty()) {
      std::cerr << "nll_correct: skipping item with empty continuation\n";
      continue;
    }
    const McEvalItem item = make_mc_eval_item(vocab, mc.question, mc.correct);
    KvCache cache = make_cache(params);
    std::vector<double> rows(item.prompt_ids.size() * static_cast<size_t>(n0));
    for (size_t i = 0; i < item.prompt_ids.size(); ++i) {
      const double* src = params.token_embedding.data() +
                          static_cast<size_t>(item.prompt_ids[i]) * n0;
      std::copy(src, src + n0, rows.data() + i * static_cast<size_t>(n0));
    }
    std::vector<double> outputs =
        forward_incremental(params, cache, rows.data(),
                            static_cast<int>(item.prompt_ids.size()));
    std::vector<double> last(outputs.end() - n0, outputs.end());
    double item_nll = 0.0;
    for (size_t j = 0; j < item.continuation_ids.size(); ++j) {
      const std::vector<double> logits = decode_logits(params, last.data());
      double mx = logits[0];
      for (int i = 1; i < v; ++i) mx = std::max(mx, logits[i]);
      double z = 0.0;
      for (int i = 0; i < v; ++i) z += std::exp(logits[i] - mx);
      const int token = item.continuation_ids[j];
      item_nll -= logits[token] - mx - std::log(z);
      if (j + 1 < item.continuation_ids.size()) {
        const double* src =
            params.token_embedding.data() + static_cast<size_t>(token) * n0;
        std::vector<double> next = forward_incremental(params, cache, src, 1);
        last.assign(next.begin(), next.end());
      }
    }
    total += item_nll / static_cast<double>(item.continuation_ids.size());
    counted += 1;
  }
  if (counted == 0) throw std::runtime_error("nll_correct: every item skipped");
  return total / counted;
}

std::vector<MetricsRecord> run_suite(const ModelParams& params,
                                     const std::vector<TaskExample>& test_set,
                                     const std::vector<McItem>& mc_items,
                                     const Vocab& vocab, uint64_t seed,
                                     const SuiteOptions& options) {
  if (test_set.empty()) throw std::invalid_argument("run_suite: empty test set");
  const AnswerType type =
      (test_set[0].label == "yes" || test_set[0].label == "no")
          ? AnswerType::yes_no
          : AnswerType::integer;
  const double nll = mc_items.empty() ? 0.0 : nll_correct(params, mc_items, vocab);

  std::vector<MetricsRecord> records;
  for (InferenceSetting setting : kAllSettings) {
    const RolloutConfig cfg =
        setting_rollout_config(setting, params, vocab, options.gamma,
                               options.max_cot, options.max_answer);
    const bool sampled = setting_is_sampled(setting);
    const int n = sampled ? options.samples : 1;
    const uint64_t setting_seed = substream(seed, setting_name(setting));

    MetricsRecord record;
    record.setting = setting_name(setting);
    record.n_samples = n;
    record.nll = nll;

    std::vector<int> ks;
    for (int k : options.ks)
      if (k <= n) ks.push_back(k);

    // Per-item work runs in parallel; reduction happens in item order so the
    // output is identical across runs regardless of scheduling.
    struct ItemResult {
      int correct = 0;
      std::vector<char> correct_flags;
      std::vector<double> entropy_sums;
      std::vector<int> entropy_alive;
    };
    std::vector<ItemResult> results(test_set.size());
    parallel_for(test_set.size(), options.threads, [&](size_t item) {
      const TaskExample& ex = test_set[item];
      auto judge = [&](const Trajectory& traj) {
        return verify(vocab, traj.answer_ids, ex.label, type) ==
               VerifyResult::exact;
      };
      const SampledGroup group = pass_k_sampler(
          params, ex.prompt_ids, cfg, n,
          substream(setting_seed, static_cast<uint64_t>(item)), judge,
          /*threads=*/1);
      ItemResult& res = results[item];
      res.entropy_sums.assign(static_cast<size_t>(options.max_cot), 0.0);
      res.entropy_alive.assign(static_cast<size_t>(options.max_cot), 0);
      for (const auto& traj : group.trajectories) {
        const size_t limit =
            std::min(res.entropy_sums.size(), traj.cot_steps.size());
        for (size_t t = 0; t < limit; ++t) {
          res.entropy_sums[t] += row_entropy(traj.cot_steps[t].p);
          res.entropy_alive[t] += 1;
        }
      }
      res.correct_flags.assign(group.correct.begin(), group.correct.end());
      for (bool c : group.correct) res.correct += c;
    });

    double pass1_sum = 0.0;
    std::vector<double> pass_sums(ks.size(), 0.0);
    std::vector<double> entropy_sums(static_cast<size_t>(options.max_cot), 0.0);
    std::vector<int> entropy_alive(static_cast<size_t>(options.max_cot), 0);
    for (const auto& res : results) {
      pass1_sum += static_cast<double>(res.correct) / n;
      for (size_t ki = 0; ki < ks.size(); ++ki) {
        if (options.raw_pass_k) {
          bool any = false;
          for (int s = 0; s < ks[ki]; ++s) any = any || res.correct_flags[s];
          pass_sums[ki] += any ? 1.0 : 0.0;
        } else {
          pass_sums[ki] += pass_at_k(n, res.correct, ks[ki]);
        }
      }
      for (size_t t = 0; t < entropy_sums.size(); ++t) {
        entropy_sums[t] += res.entropy_sums[t];
        entropy_alive[t] += res.entropy_alive[t];
      }
    }

    record.pass1 = pass1_sum / static_cast<double>(test_set.size());
    for (size_t ki = 0; ki < ks.size(); ++ki)
      record.pass_at[ks[ki]] = pass_sums[ki] / static_cast<double>(test_set.size());
    for (size_t t = 0; t < entropy_sums.size(); ++t)
      if (entropy_alive[t] > 0)
        record.entropy.push_back({static_cast<int>(t),
                                  entropy_sums[t] / entropy_alive[t],
                                  entropy_alive[t]});
    records.push_back(std::move(record));
  }
  return records;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  out << "setting,k,value\n";
  for (const auto& record : records) {
    out << record.setting << ",pass@1," << format_double(record.pass1) << "\n";
    for (const auto& [k, v] : record.pass_at)
      if (k != 1)
        out << record.setting << ",pass@" << k << "," << format_double(v) << "\n";
    out << record.setting << ",nll_correct," << format_double(record.nll) << "\n";
  }
}

void write_entropy_csv(const std::string& path,
                       const std::vector<EntropyPoint>& profile) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("entropy: cannot open " + path);
  out << "position,mean_entropy,n_alive\n";
  for (const auto& point : profile)
    out << point.position << "," << format_double(point.mean_entropy) << ","
        << point.n_alive << "\n";
}

}  // namespace softcot
