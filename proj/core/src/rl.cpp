// SPDX-License-Identifier: Apache-2.0
#include "softcot/rl.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "softcot/parallel.hpp"
#include "softcot/rng.hpp"

namespace fs = std::filesystem;

namespace softcot {

double reward_for(VerifyResult verdict, const RewardSpec& spec) {
  switch (verdict) {
    case VerifyResult::exact: return spec.exact_reward;
    case VerifyResult::format_only: return spec.format_reward;
    case VerifyResult::none: return spec.zero_reward;
  }
  throw std::logic_error("reward_for: bad verdict");
}

double compute_reward(const Vocab& vocab, const std::vector<int>& answer_ids,
                      const std::string& label, AnswerType type,
                      const RewardSpec& spec) {
  return reward_for(verify(vocab, answer_ids, label, type), spec);
}

std::vector<double> loo_advantages(const std::vector<double>& rewards) {
  const size_t g = rewards.size();
  if (g < 2)
    throw std::invalid_argument("loo_advantages: need at least 2 samples, got " +
                                std::to_string(g));
  double total = 0.0;
  for (double r : rewards) total += r;
  std::vector<double> advantages(g);
  for (size_t i = 0; i < g; ++i) {
    const double baseline = (total - rewards[i]) / static_cast<double>(g - 1);
    advantages[i] = rewards[i] - baseline;
  }
  return advantages;
}

// ---- trajectory log-probability ------------------------------------------

namespace {

Tensor constant_rows(const std::vector<const std::vector<double>*>& rows) {
  const int r = static_cast<int>(rows.size());
  const int n = static_cast<int>(rows[0]->size());
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(r) * n);
  for (const auto* row : rows) flat.insert(flat.end(), row->begin(), row->end());
  return Tensor::from_data({r, n}, std::move(flat), /*requires_grad=*/false);
}

}  // namespace

Tensor traj_logprob(const ModelParams& params, const Trajectory& traj) {
  const int p_len = static_cast<int>(traj.prompt_ids.size());
  const int c_len = static_cast<int>(traj.cot_steps.size());
  const int f_len = static_cast<int>(traj.prefilled.size());
  const int a_len = static_cast<int>(traj.answer_ids.size());
  if (p_len < 1 || a_len < 1)
    throw std::invalid_argument("traj_logprob: malformed trajectory");
  const bool continuous = traj.mode != GenMode::hard;
  if (continuous && traj.sigma <= 0.0)
    throw std::invalid_argument(
        "traj_logprob: Gaussian log-density undefined for sigma == 0");
  if (!continuous && traj.tau_cot <= 0.0 && c_len > 0)
    throw std::invalid_argument(
        "traj_logprob: hard CoT sampled at temperature 0 has no density");

  // Input rows: prompt tokens, CoT inputs (stored noisy embeddings for
  // soft/fuzzy, sampled tokens for hard), prefilled tokens, then all answer
  // tokens except the last (it is never fed back).
  std::vector<Tensor> parts;
  parts.push_back(embed_tokens(params, traj.prompt_ids));
  if (c_len > 0) {
    if (continuous) {
      std::vector<const std::vector<double>*> rows;
      rows.reserve(c_len);
      for (const auto& step : traj.cot_steps) rows.push_back(&step.noisy_h0);
      parts.push_back(constant_rows(rows));
    } else {
      std::vector<int> hard_ids;
      hard_ids.reserve(c_len);
      for (const auto& step : traj.cot_steps) hard_ids.push_back(step.hard_id);
      parts.push_back(embed_tokens(params, hard_ids));
    }
  }
  if (f_len > 0) parts.push_back(embed_tokens(params, traj.prefilled));
  if (a_len > 1)
    parts.push_back(embed_tokens(
        params, std::vector<int>(traj.answer_ids.begin(),
                                 traj.answer_ids.end() - 1)));
  const Tensor h0 = concat_rows(parts);
  const Tensor hl = forward_stack(params, h0);
  const Tensor logits = matmul(hl, params.decode_matrix);

  std::vector<Tensor> terms;

  if (c_len > 0) {
    std::vector<int> cot_positions(c_len);
    for (int k = 0; k < c_len; ++k) cot_positions[k] = p_len - 1 + k;
    if (!continuous) {
      std::vector<int> hard_ids;
      for (const auto& step : traj.cot_steps) hard_ids.push_back(step.hard_id);
      const Tensor cot_logits = gather_rows(logits, cot_positions);
      const Tensor logp =
          rowwise_log_softmax(scale(cot_logits, 1.0 / traj.tau_cot));
      terms.push_back(sum_all(pick_per_row(logp, hard_ids)));
    } else {
      const double coeff = -1.0 / (2.0 * traj.sigma * traj.sigma);
      switch (traj.placement) {
        case NoisePlacement::embedding: {
          const Tensor cot_logits = gather_rows(logits, cot_positions);
          const Tensor probs =
              rowwise_softmax(scale(cot_logits, 1.0 / traj.tau_cot));
          const Tensor clean = matmul(probs, params.token_embedding);
          std::vector<const std::vector<double>*> rows;
          for (const auto& step : traj.cot_steps) rows.push_back(&step.noisy_h0);
          const Tensor diff = sub(constant_rows(rows), clean);
          terms.push_back(scale(sum_all(mul_elem(diff, diff)), coeff));
          break;
        }
        case NoisePlacement::final_hidden: {
          const Tensor site = gather_rows(hl, cot_positions);
          std::vector<const std::vector<double>*> rows;
          for (const auto& step : traj.cot_steps)
            rows.push_back(&step.site_noisy);
          const Tensor diff = sub(constant_rows(rows), site);
          terms.push_back(scale(sum_all(mul_elem(diff, diff)), coeff));
          break;
        }
        case NoisePlacement::logits: {
          const Tensor site = gather_rows(logits, cot_positions);
          std::vector<const std::vector<double>*> rows;
          for (const auto& step : traj.cot_steps)
            rows.push_back(&step.site_noisy);
          const Tensor diff = sub(constant_rows(rows), site);
          terms.push_back(scale(sum_all(mul_elem(diff, diff)), coeff));
          break;
        }
        case NoisePlacement::logits_topk: {
          // Only the noised coordinates carry density; the stored index set
          // is treated as a constant of the sampled trajectory.
          for (int k = 0; k < c_len; ++k) {
            const auto& step = traj.cot_steps[k];
            const int v = params.config.vocab_size;
            const int kk = static_cast<int>(step.topk_indices.size());
            std::vector<double> select(static_cast<size_t>(v) * kk, 0.0);
            std::vector<double> noisy(kk);
            for (int j = 0; j < kk; ++j) {
              select[static_cast<size_t>(step.topk_indices[j]) * kk + j] = 1.0;
              noisy[j] = step.site_noisy[step.topk_indices[j]];
            }
            const Tensor row = gather_rows(logits, {cot_positions[k]});
            const Tensor sel =
                matmul(row, Tensor::from_data({v, kk}, std::move(select)));
            const Tensor diff =
                sub(Tensor::from_data({1, kk}, std::move(noisy)), sel);
            terms.push_back(scale(sum_all(mul_elem(diff, diff)), coeff));
          }
          break;
        }
      }
    }
  }

  std::vector<int> answer_positions(a_len);
  for (int j = 0; j < a_len; ++j) answer_positions[j] = p_len + c_len + f_len - 1 + j;
  const Tensor answer_logits = gather_rows(logits, answer_positions);
  const Tensor answer_logp = rowwise_log_softmax(answer_logits);
  terms.push_back(sum_all(pick_per_row(answer_logp, traj.answer_ids)));

  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

Tensor rloo_loss(const ModelParams& params,
                 const std::vector<RewardedGroup>& batch,
                 const RolloutConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("rloo_loss: empty batch");
  int total_samples = 0;
  for (const auto& group : batch) {
    if (group.trajectories.size() != group.advantages.size() ||
        group.trajectories.size() != group.rewards.size())
      throw std::invalid_argument("rloo_loss: group sizes inconsistent");
    for (const auto& traj : group.trajectories) {
      if (traj.mode != cfg.mode || traj.placement != cfg.placement ||
          traj.tau_cot != cfg.tau_cot || traj.sigma != cfg.sigma)
        throw std::invalid_argument(
            "rloo_loss: trajectory generated under a different mode/config");
    }
    total_samples += static_cast<int>(group.trajectories.size());
  }
  const double inv_bg = 1.0 / static_cast<double>(total_samples);
  Tensor loss = Tensor::scalar(0.0);
  for (const auto& group : batch)
    for (size_t g = 0; g < group.trajectories.size(); ++g) {
      const Tensor lp = traj_logprob(params, group.trajectories[g]);
      loss = add(loss, scale(lp, -group.advantages[g] * inv_bg));
    }
  return loss;
}

// ---- optimizer --------------------------------------------------------------

double lr_schedule(int step, double peak_lr, int warmup_steps, int total_steps) {
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  if (warmup_steps > 0 && step < warmup_steps)
    return peak_lr * static_cast<double>(step) / warmup_steps;
  const int span = std::max(1, total_steps - warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  constexpr double pi = 3.14159265358979323846;
  return peak_lr * 0.5 * (1.0 + std::cos(pi * progress));
}

AdamW::AdamW(ParamList params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
    v_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
  }
}

void AdamW::step(double lr) {
  steps_ += 1;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    double* theta = t.data();
    const bool has_grad = t.has_grad();
    const double* g = has_grad ? t.grad() : nullptr;
    for (int64_t j = 0; j < t.numel(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
      const double m_hat = m_[i][j] / bias1;
      const double v_hat = v_[i][j] / bias2;
      theta[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                        cfg_.weight_decay * theta[j]);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("step", Tensor::scalar(static_cast<double>(steps_)));
  for (size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("m." + params_[i].name,
                     Tensor::from_data(params_[i].tensor.shape(), m_[i]));
    out.emplace_back("v." + params_[i].name,
                     Tensor::from_data(params_[i].tensor.shape(), v_[i]));
  }
  return out;
}

void AdamW::load_state(
    const std::vector<std::pair<std::string, Tensor>>& state) {
  for (const auto& [name, tensor] : state) {
    if (name == "step") {
      steps_ = static_cast<int64_t>(tensor.item());
      continue;
    }
    for (size_t i = 0; i < params_.size(); ++i) {
      if (name == "m." + params_[i].name) m_[i] = tensor.values();
      if (name == "v." + params_[i].name) v_[i] = tensor.values();
    }
  }
}

double clip_grad_norm(ParamList& params, double max_norm) {
  double sum_sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    const double* g = p.tensor.grad();
    for (int64_t i = 0; i < p.tensor.numel(); ++i) sum_sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sum_sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      double* g = p.tensor.grad();
      for (int64_t i = 0; i < p.tensor.numel(); ++i) g[i] *= factor;
    }
  }
  return norm;
}

// ---- training loop ------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_prompts < 1) throw std::invalid_argument("train: B must be >= 1");
  if (group_size < 2)
    throw std::invalid_argument("train: G must be >= 2 (leave-one-out baseline)");
  if (lr <= 0.0) throw std::invalid_argument("train: lr must be > 0");
  if (total_steps < 1) throw std::invalid_argument("train: total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw std::invalid_argument("train: warmup_steps outside [0, total_steps]");
  if (validation_every < 1)
    throw std::invalid_argument("train: validation_every must be >= 1");
  if (gamma_noise < 0.0) throw std::invalid_argument("train: gamma_noise < 0");
}

int select_best(const std::vector<ValidationPoint>& history) {
  if (history.empty())
    throw std::invalid_argument("select_best: empty validation history");
  size_t best = 0;
  for (size_t i = 1; i < history.size(); ++i)
    if (history[i].success > history[best].success) best = i;
  return history[best].step;
}

double greedy_validation(const ModelParams& params,
                         const std::vector<TaskExample>& examples,
                         const Vocab& vocab, const RolloutConfig& rollout_cfg,
                         AnswerType type, unsigned threads) {
  if (examples.empty())
    throw std::invalid_argument("greedy_validation: no examples");
  RolloutConfig greedy = rollout_cfg;
  greedy.answer_tau = 0.0;
  if (greedy.mode == GenMode::hard)
    greedy.tau_cot = 0.0;
  else
    greedy.sigma = 0.0;
  std::vector<char> exact(examples.size(), 0);
  parallel_for(examples.size(), threads, [&](size_t i) {
    NoGradGuard no_grad;
    const Trajectory traj = generate(params, examples[i].prompt_ids, greedy, 0);
    exact[i] =
        verify(vocab, traj.answer_ids, examples[i].label, type) == VerifyResult::exact;
  });
  double hits = 0.0;
  for (char c : exact) hits += c;
  return hits / static_cast<double>(examples.size());
}

void format_prime(ModelParams& params, const std::vector<TaskExample>& examples,
                  const Vocab& vocab, const RolloutConfig& rollout_cfg,
                  int steps, double lr, uint64_t seed) {
  if (steps <= 0) return;
  if (examples.empty())
    throw std::invalid_argument("format_prime: no examples");
  Rng rng(seed);
  ParamList plist = params.named_params();
  AdamW optimizer(plist, AdamWConfig{.weight_decay = 0.0});
  const int batch = 16;
  for (int step = 0; step < steps; ++step) {
    params.zero_grads();
    Tensor loss = Tensor::scalar(0.0);
    for (int b = 0; b < batch; ++b) {
      const auto& ex = examples[rng.uniform_int(examples.size())];
      // A label from a different example: format without the task mapping.
      const auto& wrong = examples[rng.uniform_int(examples.size())];
      std::vector<int> ctx = ex.prompt_ids;
      // Junk chain-of-thought so the answer head tolerates noisy contexts.
      const int cot = static_cast<int>(rng.uniform_int(rollout_cfg.max_cot + 1));
      for (int k = 0; k < cot; ++k)
        ctx.push_back(Vocab::kNumSpecials +
                      static_cast<int>(rng.uniform_int(
                          vocab.size() - Vocab::kNumSpecials)));
      ctx.insert(ctx.end(), rollout_cfg.prefill_on_budget.begin(),
                 rollout_cfg.prefill_on_budget.end());
      std::vector<int> target = vocab.encode(wrong.label);
      target.push_back(Vocab::kEos);
      std::vector<int> inputs = ctx;
      inputs.insert(inputs.end(), target.begin(), target.end() - 1);
      const Tensor h0 = embed_tokens(params, inputs);
      const Tensor logits =
          matmul(forward_stack(params, h0), params.decode_matrix);
      std::vector<int> positions(target.size());
      for (size_t j = 0; j < target.size(); ++j)
        positions[j] = static_cast<int>(ctx.size()) - 1 + static_cast<int>(j);
      const Tensor picked =
          pick_per_row(gather_rows(rowwise_log_softmax(logits), positions), target);
      loss = add(loss, scale(sum_all(picked), -1.0 / batch));
    }
    backward(loss);
    clip_grad_norm(plist, 1.0);
    optimizer.step(lr);
  }
  params.check_finite();
}

namespace {

std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06d.bin", step);
  return buf;
}

void dump_diagnostic_batch(const std::string& path, const Vocab& vocab,
                           const std::vector<RewardedGroup>& batch) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& group : batch)
    for (size_t g = 0; g < group.trajectories.size(); ++g)
      append_trajectory_jsonl(out, vocab, group.trajectories[g],
                              group.rewards[g]);
}

}  // namespace

TrainResult train(ModelParams& params, const Dataset& data, const Vocab& vocab,
                  const TrainConfig& train_cfg, const RolloutConfig& rollout_cfg,
                  const std::string& run_dir,
                  const std::optional<std::string>& resume_from) {
  train_cfg.validate();
  rollout_cfg.validate(params.config.vocab_size);
  if (data.train.size() < static_cast<size_t>(train_cfg.batch_prompts))
    throw std::invalid_argument("train: fewer train examples than batch_prompts");
  const AnswerType type =
      (!data.train.empty() &&
       (data.train[0].label == "yes" || data.train[0].label == "no"))
          ? AnswerType::yes_no
          : AnswerType::integer;

  fs::create_directories(fs::path(run_dir) / "checkpoints");
  const bool resuming = resume_from.has_value();
  int start_step = 0;
  if (resuming) {
    params = load_checkpoint(*resume_from);
    params.check_finite();
  }
  AdamW optimizer(params.named_params(),
                  AdamWConfig{.weight_decay = train_cfg.weight_decay});
  if (resuming) {
    const std::string opt_path = *resume_from + ".opt";
    if (!fs::exists(opt_path))
      throw std::runtime_error("train: missing optimizer sidecar " + opt_path);
    optimizer.load_state(load_tensor_map(opt_path));
    start_step = static_cast<int>(optimizer.steps_taken());
  }

  const auto open_mode = resuming ? std::ios::app : std::ios::trunc;
  std::ofstream train_log(fs::path(run_dir) / "training.jsonl", open_mode);
  std::ofstream val_log(fs::path(run_dir) / "validation.jsonl", open_mode);
  if (!train_log || !val_log)
    throw std::runtime_error("train: cannot open logs under " + run_dir);

  ParamList param_list = params.named_params();
  const RewardSpec reward_spec;
  TrainResult result;

  auto run_validation = [&](int step) -> double {
    const double success = greedy_validation(params, data.val, vocab,
                                             rollout_cfg, type,
                                             train_cfg.threads);
    const std::string name = checkpoint_name(step);
    const std::string path = (fs::path(run_dir) / "checkpoints" / name).string();
    save_checkpoint(params, path);
    result.history.push_back({step, success, path});
    nlohmann::ordered_json record{{"step", step}, {"val_success", success},
                                  {"checkpoint", name}};
    val_log << record.dump() << "\n";
    val_log.flush();
    return success;
  };

  if (!resuming) run_validation(0);

  const uint64_t prompt_root = substream(train_cfg.seed, "prompts");
  const uint64_t rollout_root = substream(train_cfg.seed, "rollout");
  bool early_stopped = false;

  for (int step = start_step; step < train_cfg.total_steps && !early_stopped;
       ++step) {
    const double lr = lr_schedule(step, train_cfg.lr, train_cfg.warmup_steps,
                                  train_cfg.total_steps);

    // B distinct prompts for this step.
    Rng prompt_rng(substream(prompt_root, static_cast<uint64_t>(step)));
    std::vector<int> prompt_indices;
    while (static_cast<int>(prompt_indices.size()) < train_cfg.batch_prompts) {
      const int idx = static_cast<int>(prompt_rng.uniform_int(data.train.size()));
      if (std::find(prompt_indices.begin(), prompt_indices.end(), idx) ==
          prompt_indices.end())
        prompt_indices.push_back(idx);
    }

    // Collect B x G rollouts against read-only params.
    const uint64_t step_root = substream(rollout_root, static_cast<uint64_t>(step));
    std::vector<RewardedGroup> batch(prompt_indices.size());
    std::vector<PromptState> prompt_states(prompt_indices.size());
    for (size_t b = 0; b < prompt_indices.size(); ++b) {
      NoGradGuard no_grad;
      prompt_states[b] = prefill_prompt(
          params, data.train[prompt_indices[b]].prompt_ids, rollout_cfg);
      batch[b].prompt_index = prompt_indices[b];
      batch[b].trajectories.resize(train_cfg.group_size);
      batch[b].rewards.resize(train_cfg.group_size);
    }
    const size_t flat = batch.size() * static_cast<size_t>(train_cfg.group_size);
    parallel_for(flat, train_cfg.threads, [&](size_t i) {
      NoGradGuard no_grad;
      const size_t b = i / train_cfg.group_size;
      const size_t g = i % train_cfg.group_size;
      const TaskExample& ex = data.train[prompt_indices[b]];
      const uint64_t seed = substream(substream(step_root, b), g);
      Trajectory traj =
          generate(params, prompt_states[b], ex.prompt_ids, rollout_cfg, seed);
      batch[b].rewards[g] =
          compute_reward(vocab, traj.answer_ids, ex.label, type, reward_spec);
      batch[b].trajectories[g] = std::move(traj);
    });

    double reward_sum = 0.0, exact_hits = 0.0;
    for (auto& group : batch) {
      group.advantages = loo_advantages(group.rewards);
      for (double r : group.rewards) {
        reward_sum += r;
        if (r == reward_spec.exact_reward) exact_hits += 1.0;
      }
    }
    const double mean_reward = reward_sum / static_cast<double>(flat);
    const double success_rate = exact_hits / static_cast<double>(flat);

    // Groups whose advantages are all zero contribute exactly zero loss and
    // gradient; skip building their graphs.
    std::vector<const RewardedGroup*> active;
    for (const auto& group : batch) {
      const bool live = std::any_of(group.advantages.begin(),
                                    group.advantages.end(),
                                    [](double a) { return a != 0.0; });
      if (live) active.push_back(&group);
    }

    params.zero_grads();
    double loss_value = 0.0;
    if (!active.empty()) {
      // Normalize by the full B*G even when some groups are skipped.
      Tensor loss = Tensor::scalar(0.0);
      const double inv_bg = 1.0 / static_cast<double>(flat);
      for (const auto* group : active)
        for (size_t g = 0; g < group->trajectories.size(); ++g) {
          const Tensor lp = traj_logprob(params, group->trajectories[g]);
          loss = add(loss, scale(lp, -group->advantages[g] * inv_bg));
        }
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        const std::string dump_path =
            (fs::path(run_dir) / "diagnostic_batch.jsonl").string();
        dump_diagnostic_batch(dump_path, vocab, batch);
        throw std::runtime_error("train: non-finite loss at step " +
                                 std::to_string(step) + "; offending batch in " +
                                 dump_path);
      }
      backward(loss);
    }
    const double grad_norm = clip_grad_norm(param_list, train_cfg.grad_clip);
    optimizer.step(lr);

    nlohmann::ordered_json record{
        {"step", step},           {"mean_reward", mean_reward},
        {"success_rate", success_rate}, {"loss", loss_value},
        {"lr", lr},               {"grad_norm", grad_norm},
    };
    train_log << record.dump() << "\n";

    const int done = step + 1;
    if (done % train_cfg.validation_every == 0 || done == train_cfg.total_steps) {
      train_log.flush();
      const double success = run_validation(done);
      if (train_cfg.early_stop_val_target >= 0.0 &&
          success >= train_cfg.early_stop_val_target)
        early_stopped = true;
    }
    result.final_step = done;
  }

  result.best_step = select_best(result.history);
  for (const auto& point : result.history)
    if (point.step == result.best_step) {
      result.best_success = point.success;
      result.best_checkpoint = (fs::path(run_dir) / "best.bin").string();
      fs::copy_file(point.checkpoint, result.best_checkpoint,
                    fs::copy_options::overwrite_existing);
      break;
    }
  result.final_checkpoint = (fs::path(run_dir) / "final.bin").string();
  save_checkpoint(params, result.final_checkpoint);
  save_tensor_map(optimizer.state_tensors(), result.final_checkpoint + ".opt");
  train_log.flush();
  val_log.flush();
  return result;
}

}  // namespace softcot
