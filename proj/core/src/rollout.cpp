// SPDX-License-Identifier: Apache-2.0
#include "softcot/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "softcot/parallel.hpp"
#include "softcot/rng.hpp"

namespace softcot {

std::string gen_mode_name(GenMode mode) {
  switch (mode) {
    case GenMode::hard: return "hard";
    case GenMode::soft: return "soft";
    case GenMode::fuzzy: return "fuzzy";
  }
  throw std::logic_error("gen_mode_name: bad mode");
}

GenMode gen_mode_from_name(const std::string& name) {
  if (name == "hard") return GenMode::hard;
  if (name == "soft") return GenMode::soft;
  if (name == "fuzzy") return GenMode::fuzzy;
  throw std::invalid_argument("unknown generation mode '" + name + "'");
}

std::string placement_name(NoisePlacement placement) {
  switch (placement) {
    case NoisePlacement::embedding: return "embedding";
    case NoisePlacement::logits: return "logits";
    case NoisePlacement::logits_topk: return "logits_topk";
    case NoisePlacement::final_hidden: return "final_hidden";
  }
  throw std::logic_error("placement_name: bad placement");
}

NoisePlacement placement_from_name(const std::string& name) {
  if (name == "embedding") return NoisePlacement::embedding;
  if (name == "logits") return NoisePlacement::logits;
  if (name == "logits_topk") return NoisePlacement::logits_topk;
  if (name == "final_hidden") return NoisePlacement::final_hidden;
  throw std::invalid_argument("unknown noise placement '" + name + "'");
}

void RolloutConfig::validate(int vocab_size) const {
  if (sigma < 0.0) throw std::invalid_argument("rollout: sigma must be >= 0");
  if (tau_cot < 0.0) throw std::invalid_argument("rollout: tau_cot must be >= 0");
  if (max_cot < 1) throw std::invalid_argument("rollout: max_cot must be >= 1");
  if (max_answer < 1) throw std::invalid_argument("rollout: max_answer must be >= 1");
  if (stop_marker.empty())
    throw std::invalid_argument("rollout: stop_marker must be nonempty");
  if (mode == GenMode::fuzzy && tau_cot > 0.01)
    throw std::invalid_argument("rollout: fuzzy mode expects tau_cot <= 0.01");
  if (placement == NoisePlacement::logits_topk) {
    if (topk < 1) throw std::invalid_argument("rollout: topk must be >= 1");
    if (topk > vocab_size)
      throw std::invalid_argument("rollout: topk " + std::to_string(topk) +
                                  " exceeds vocabulary " +
                                  std::to_string(vocab_size));
  }
  if (answer_end_id < 0 || answer_end_id >= vocab_size)
    throw std::invalid_argument("rollout: answer_end_id outside vocabulary");
  if (answer_tau < 0.0)
    throw std::invalid_argument("rollout: answer_tau must be >= 0");
}

RolloutConfig make_rollout_config(const Vocab& vocab, GenMode mode,
                                  double tau_cot, double sigma, int max_cot,
                                  int max_answer, double answer_tau) {
  RolloutConfig cfg;
  cfg.mode = mode;
  cfg.tau_cot = tau_cot;
  cfg.answer_tau = answer_tau;
  cfg.sigma = mode == GenMode::hard ? 0.0 : sigma;
  cfg.max_cot = max_cot;
  cfg.max_answer = max_answer;
  cfg.stop_marker = stop_marker_ids(vocab);
  cfg.prefill_on_stop = {box_open_id(vocab)};
  cfg.prefill_on_budget = cfg.stop_marker;
  cfg.prefill_on_budget.push_back(box_open_id(vocab));
  cfg.answer_end_id = Vocab::kEos;
  return cfg;
}

std::vector<int> Trajectory::shadow_sequence() const {
  std::vector<int> out;
  out.reserve(cot_steps.size());
  for (const auto& step : cot_steps)
    out.push_back(mode == GenMode::hard ? step.hard_id : step.shadow_id);
  return out;
}

bool check_stop(const std::vector<int>& ids, const std::vector<int>& marker) {
  if (marker.empty() || ids.size() < marker.size()) return false;
  return std::equal(marker.begin(), marker.end(),
                    ids.end() - static_cast<ptrdiff_t>(marker.size()));
}

std::vector<double> add_gaussian_noise(const std::vector<double>& clean,
                                       double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma < 0");
  if (sigma == 0.0) return clean;
  std::vector<double> out(clean.size());
  for (size_t i = 0; i < clean.size(); ++i)
    out[i] = clean[i] + sigma * rng.gaussian();
  return out;
}

std::vector<int> apply_topk_logit_noise(std::vector<double>& logits, int k,
                                        double sigma, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  if (k < 1 || k > v)
    throw std::invalid_argument("apply_topk_logit_noise: k=" + std::to_string(k) +
                                " outside [1," + std::to_string(v) + "]");
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  // Largest first; ties resolved toward the lower index for determinism.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logits[a] > logits[b];
  });
  std::vector<int> kept(order.begin(), order.begin() + k);
  std::sort(kept.begin(), kept.end());
  std::vector<char> is_kept(v, 0);
  for (int i : kept) is_kept[i] = 1;
  for (int i : kept)
    if (sigma > 0.0) logits[i] += sigma * rng.gaussian();
  for (int i = 0; i < v; ++i)
    if (!is_kept[i]) logits[i] = -INFINITY;
  return kept;
}

namespace {

void check_finite_row(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("generate: non-finite ") + what);
}

uint64_t noise_stream_root(uint64_t traj_seed) {
  return substream(traj_seed, "noise");
}

}  // namespace

PromptState prefill_prompt(const ModelParams& params,
                           const std::vector<int>& prompt_ids,
                           const RolloutConfig& cfg) {
  cfg.validate(params.config.vocab_size);
  if (prompt_ids.empty())
    throw std::invalid_argument("generate: empty prompt");
  const int budget = static_cast<int>(prompt_ids.size()) + cfg.max_cot +
                     static_cast<int>(cfg.prefill_on_budget.size()) +
                     cfg.max_answer;
  if (budget > params.config.max_seq_len)
    throw std::invalid_argument(
        "generate: prompt + budgets need " + std::to_string(budget) +
        " positions, max_seq_len is " + std::to_string(params.config.max_seq_len));
  const int n0 = params.config.embed_dim;
  PromptState state;
  state.cache = make_cache(params);
  std::vector<double> rows(prompt_ids.size() * static_cast<size_t>(n0));
  const double* table = params.token_embedding.data();
  for (size_t i = 0; i < prompt_ids.size(); ++i) {
    const int id = prompt_ids[i];
    if (id < 0 || id >= params.config.vocab_size)
      throw std::out_of_range("generate: prompt token " + std::to_string(id) +
                              " outside vocabulary");
    std::copy(table + static_cast<size_t>(id) * n0,
              table + static_cast<size_t>(id) * n0 + n0,
              rows.data() + i * static_cast<size_t>(n0));
  }
  std::vector<double> outputs = forward_incremental(
      params, state.cache, rows.data(), static_cast<int>(prompt_ids.size()));
  state.last_hidden.assign(outputs.end() - n0, outputs.end());
  return state;
}

Trajectory generate(const ModelParams& params, const PromptState& prompt,
                    const std::vector<int>& prompt_ids, const RolloutConfig& cfg,
                    uint64_t seed) {
  const int n0 = params.config.embed_dim;
  const int v = params.config.vocab_size;
  const bool continuous = cfg.mode != GenMode::hard;

  Trajectory traj;
  traj.prompt_ids = prompt_ids;
  traj.mode = cfg.mode;
  traj.tau_cot = cfg.tau_cot;
  traj.sigma = cfg.sigma;
  traj.placement = cfg.placement;
  traj.topk = cfg.placement == NoisePlacement::logits_topk ? cfg.topk : 0;
  traj.noise_seed = noise_stream_root(seed);

  Rng sample_rng(substream(seed, "sample"));
  KvCache cache = prompt.cache;
  std::vector<double> last_hidden = prompt.last_hidden;
  std::vector<int> stop_sequence;

  for (int k = 0; k < cfg.max_cot; ++k) {
    StepRecord rec;
    rec.noise_seed_offset = static_cast<uint64_t>(k);
    Rng noise_rng(substream(traj.noise_seed, rec.noise_seed_offset));

    std::vector<double> hidden_row = last_hidden;
    if (continuous && cfg.placement == NoisePlacement::final_hidden &&
        cfg.sigma > 0.0) {
      rec.site_clean = hidden_row;
      hidden_row = add_gaussian_noise(hidden_row, cfg.sigma, noise_rng);
      rec.site_noisy = hidden_row;
    }
    std::vector<double> logits = decode_logits(params, hidden_row.data());
    check_finite_row(logits, "logits");
    if (continuous && cfg.sigma > 0.0 &&
        cfg.placement == NoisePlacement::logits) {
      rec.site_clean = logits;
      logits = add_gaussian_noise(logits, cfg.sigma, noise_rng);
      rec.site_noisy = logits;
    } else if (continuous && cfg.placement == NoisePlacement::logits_topk) {
      rec.site_clean = logits;
      rec.topk_indices =
          apply_topk_logit_noise(logits, cfg.topk, cfg.sigma, noise_rng);
      rec.site_noisy = logits;
    }

    rec.p = temperature_softmax(logits.data(), v, cfg.tau_cot);
    rec.shadow_id = argmax_lowest(rec.p.data(), v);

    std::vector<double> next_input;
    int stop_token;
    if (cfg.mode == GenMode::hard) {
      rec.hard_id = cfg.tau_cot == 0.0 ? rec.shadow_id
                                       : sample_rng.categorical(rec.p.data(), v);
      stop_token = rec.hard_id;
      const double* row =
          params.token_embedding.data() + static_cast<size_t>(rec.hard_id) * n0;
      next_input.assign(row, row + n0);
    } else {
      rec.clean_h0 = embed_distribution_plain(params, rec.p.data());
      if (cfg.placement == NoisePlacement::embedding && cfg.sigma > 0.0)
        rec.noisy_h0 = add_gaussian_noise(rec.clean_h0, cfg.sigma, noise_rng);
      else
        rec.noisy_h0 = rec.clean_h0;
      stop_token = rec.shadow_id;
      next_input = rec.noisy_h0;
    }
    check_finite_row(next_input, "input embedding");

    traj.cot_steps.push_back(std::move(rec));
    stop_sequence.push_back(stop_token);
    std::vector<double> outputs =
        forward_incremental(params, cache, next_input.data(), 1);
    last_hidden.assign(outputs.begin(), outputs.end());
    if (check_stop(stop_sequence, cfg.stop_marker)) {
      traj.stopped_early = true;
      break;
    }
  }

  traj.prefilled = traj.stopped_early ? cfg.prefill_on_stop : cfg.prefill_on_budget;
  for (int id : traj.prefilled) {
    const double* row =
        params.token_embedding.data() + static_cast<size_t>(id) * n0;
    std::vector<double> outputs = forward_incremental(params, cache, row, 1);
    last_hidden.assign(outputs.begin(), outputs.end());
  }

  for (int j = 0; j < cfg.max_answer; ++j) {
    std::vector<double> logits = decode_logits(params, last_hidden.data());
    check_finite_row(logits, "answer logits");
    const std::vector<double> p =
        temperature_softmax(logits.data(), v, cfg.answer_tau);
    const int token = cfg.answer_tau == 0.0 ? argmax_lowest(p.data(), v)
                                            : sample_rng.categorical(p.data(), v);
    traj.answer_ids.push_back(token);
    if (token == cfg.answer_end_id) break;
    if (j + 1 < cfg.max_answer) {
      const double* row =
          params.token_embedding.data() + static_cast<size_t>(token) * n0;
      std::vector<double> outputs = forward_incremental(params, cache, row, 1);
      last_hidden.assign(outputs.begin(), outputs.end());
    }
  }
  return traj;
}

Trajectory generate(const ModelParams& params,
                    const std::vector<int>& prompt_ids, const RolloutConfig& cfg,
                    uint64_t seed) {
  const PromptState prompt = prefill_prompt(params, prompt_ids, cfg);
  return generate(params, prompt, prompt_ids, cfg, seed);
}

SampledGroup pass_k_sampler(const ModelParams& params,
                            const std::vector<int>& prompt_ids,
                            const RolloutConfig& cfg, int n, uint64_t base_seed,
                            const std::function<bool(const Trajectory&)>& judge,
                            unsigned threads) {
  if (n < 1) throw std::invalid_argument("pass_k_sampler: n must be >= 1");
  const PromptState prompt = prefill_prompt(params, prompt_ids, cfg);
  SampledGroup group;
  group.trajectories.resize(n);
  group.correct.resize(n);
  parallel_for(static_cast<size_t>(n), threads, [&](size_t s) {
    Trajectory traj = generate(params, prompt, prompt_ids, cfg,
                               substream(base_seed, static_cast<uint64_t>(s)));
    group.correct[s] = judge(traj);
    group.trajectories[s] = std::move(traj);
  });
  return group;
}

void append_trajectory_jsonl(std::ostream& out, const Vocab& vocab,
                             const Trajectory& traj, double reward) {
  nlohmann::json record{
      {"prompt", vocab.render(traj.prompt_ids)},
      {"mode", gen_mode_name(traj.mode)},
      {"shadow_ids", traj.shadow_sequence()},
      {"stopped_early", traj.stopped_early},
      {"answer", vocab.render(traj.answer_ids)},
      {"reward", reward},
  };
  out << record.dump() << "\n";
}

}  // namespace softcot
