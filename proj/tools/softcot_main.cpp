// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration CLI: gen-data, train, eval, grad-check, sweep.
// Exit codes: 0 success, 1 user error (bad config/flags/files), 2 internal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "softcot/config.hpp"
#include "softcot/eval.hpp"
#include "softcot/grad_check.hpp"
#include "softcot/model.hpp"
#include "softcot/rl.hpp"
#include "softcot/rng.hpp"
#include "softcot/rollout.hpp"
#include "softcot/tasks.hpp"
#include "softcot/version.hpp"

namespace fs = std::filesystem;
using namespace softcot;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Flat key = value config file");
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set train.lr=0.001")
      ->take_all();
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig()
                             : ExperimentConfig::from_file(args.config_path);
  for (const auto& kv : args.overrides) cfg.apply_override(kv);
  cfg.resolve();
  return cfg;
}

Dataset load_or_generate(const ExperimentConfig& cfg, const Vocab& vocab,
                         const std::string& data_dir) {
  if (data_dir.empty()) return generate_dataset(cfg.task_spec(), vocab);
  Dataset data;
  data.train = load_dataset_jsonl(data_dir + "/train.jsonl", vocab);
  data.val = load_dataset_jsonl(data_dir + "/val.jsonl", vocab);
  data.test = load_dataset_jsonl(data_dir + "/test.jsonl", vocab);
  return data;
}

void write_run_config(const ExperimentConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  cfg.write_resolved(dir + "/config.resolved");
  std::ofstream version(dir + "/version.txt", std::ios::trunc);
  version << "softcot " << kVersion << " (" << kGitRevision << ")\n";
}

void check_prompt_budget(const Dataset& data, const ExperimentConfig& cfg,
                         const ModelParams& params) {
  size_t longest = 0;
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& ex : *split) longest = std::max(longest, ex.prompt_ids.size());
  const Vocab vocab;
  const int needed = static_cast<int>(longest) +
                     cfg.rollout_config(params, vocab).max_cot +
                     static_cast<int>(stop_marker_ids(vocab).size()) + 1 +
                     cfg.rollout_config(params, vocab).max_answer;
  if (needed > params.config.max_seq_len)
    throw std::invalid_argument(
        "model.max_seq_len " + std::to_string(params.config.max_seq_len) +
        " too small: longest prompt plus budgets needs " + std::to_string(needed));
}

int cmd_gen_data(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const Vocab vocab;
  const TaskSpec spec = cfg.task_spec();
  const Dataset data = generate_dataset(spec, vocab);
  const std::string dir = cfg.out_dir() + "/data";
  fs::create_directories(dir);
  write_dataset_jsonl(dir + "/train.jsonl", data.train);
  write_dataset_jsonl(dir + "/val.jsonl", data.val);
  write_dataset_jsonl(dir + "/test.jsonl", data.test);
  write_manifest(dir + "/manifest.json", spec);
  const auto mc = make_mc_items(data.test, answer_type_of(spec.kind),
                                substream(cfg.seed(), "mc"));
  write_mc_jsonl(dir + "/mc.jsonl", mc);
  std::cout << "wrote " << data.train.size() << "/" << data.val.size() << "/"
            << data.test.size() << " examples under " << dir << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& resume) {
  const ExperimentConfig cfg = load_config(args);
  const Vocab vocab;
  const Dataset data = load_or_generate(cfg, vocab, args.data_dir);
  ModelParams params = ModelParams::init(cfg.model_config(vocab.size()),
                                         substream(cfg.seed(), "init"),
                                         cfg.model_init_std());
  check_prompt_budget(data, cfg, params);
  const std::string run_dir = cfg.out_dir();
  write_run_config(cfg, run_dir);
  const RolloutConfig rollout_cfg = cfg.rollout_config(params, vocab);
  const TrainConfig train_cfg = cfg.train_config();
  const std::optional<std::string> resume_from =
      resume.empty() ? std::nullopt : std::optional<std::string>(resume);
  const TrainResult result =
      train(params, data, vocab, train_cfg, rollout_cfg, run_dir, resume_from);
  std::cout << "trained " << result.final_step << " steps; best validation "
            << result.best_success << " at step " << result.best_step << "\n"
            << "best checkpoint: " << result.best_checkpoint << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             const std::string& out_override, bool dump_trajectories) {
  const ExperimentConfig cfg = load_config(args);
  const Vocab vocab;
  const ModelParams params = load_checkpoint(checkpoint);
  const Dataset data = load_or_generate(cfg, vocab, args.data_dir);
  const TaskSpec spec = cfg.task_spec();
  const auto mc = make_mc_items(data.test, answer_type_of(spec.kind),
                                substream(cfg.seed(), "mc"));
  const std::string out_dir =
      out_override.empty() ? cfg.out_dir() + "/eval" : out_override;
  fs::create_directories(out_dir);
  write_run_config(cfg, out_dir);

  const SuiteOptions options = cfg.suite_options();
  const auto records = run_suite(params, data.test, mc, vocab,
                                 substream(cfg.seed(), "eval"), options);
  write_metrics_csv(out_dir + "/metrics.csv", records);
  for (const auto& record : records)
    write_entropy_csv(out_dir + "/entropy_" + record.setting + ".csv",
                      record.entropy);
  for (const auto& record : records) {
    std::cout << record.setting << ": pass@1 " << record.pass1;
    if (record.pass_at.count(options.samples) && options.samples > 1)
      std::cout << ", pass@" << options.samples << " "
                << record.pass_at.at(options.samples);
    std::cout << "\n";
  }
  std::cout << "nll_correct " << records.front().nll << "\n";

  if (dump_trajectories) {
    const AnswerType type = answer_type_of(spec.kind);
    const RewardSpec reward_spec;
    std::ofstream sink(out_dir + "/trajectories.jsonl", std::ios::trunc);
    for (InferenceSetting setting :
         {InferenceSetting::hard_greedy, InferenceSetting::soft_greedy,
          InferenceSetting::fuzzy_greedy}) {
      const RolloutConfig rc = setting_rollout_config(
          setting, params, vocab, options.gamma, options.max_cot,
          options.max_answer);
      for (const auto& ex : data.test) {
        NoGradGuard no_grad;
        const Trajectory traj = generate(params, ex.prompt_ids, rc, 0);
        append_trajectory_jsonl(
            sink, vocab, traj,
            compute_reward(vocab, traj.answer_ids, ex.label, type, reward_spec));
      }
    }
    std::cout << "trajectories: " << out_dir << "/trajectories.jsonl\n";
  }
  std::cout << "metrics: " << out_dir << "/metrics.csv\n";
  return 0;
}

int cmd_grad_check(const CommonArgs& args, double threshold) {
  const ExperimentConfig cfg = load_config(args);
  const Vocab vocab;
  ModelParams params = ModelParams::init(cfg.model_config(vocab.size()),
                                         substream(cfg.seed(), "init"),
                                         cfg.model_init_std());
  const Dataset data = load_or_generate(cfg, vocab, args.data_dir);
  check_prompt_budget(data, cfg, params);
  ParamList plist = params.named_params();
  const double sigma =
      cfg.train_config().gamma_noise * rms_embedding_norm(params.token_embedding);

  bool ok = true;
  for (auto [mode, tau] : {std::pair{GenMode::soft, 0.5},
                           std::pair{GenMode::fuzzy, 0.0001}}) {
    RolloutConfig rc = make_rollout_config(vocab, mode,
                                           tau, sigma,
                                           cfg.rollout_config(params, vocab).max_cot,
                                           cfg.rollout_config(params, vocab).max_answer);
    // One prompt, two rollouts, fixed seeds: the smallest full RLOO loss.
    std::vector<RewardedGroup> batch(1);
    batch[0].prompt_index = 0;
    {
      NoGradGuard no_grad;
      const uint64_t root = substream(cfg.seed(), "grad-check");
      for (uint64_t g = 0; g < 2; ++g)
        batch[0].trajectories.push_back(
            generate(params, data.train[0].prompt_ids, rc, substream(root, g)));
    }
    batch[0].rewards = {100.0, 0.0};
    batch[0].advantages = loo_advantages(batch[0].rewards);
    auto loss_fn = [&] { return rloo_loss(params, batch, rc); };
    const auto report = grad_check(loss_fn, plist);
    std::cout << gen_mode_name(mode) << ": max relative error "
              << report.max_rel_error << " (worst " << report.worst_param
              << ", threshold " << threshold << ")\n";
    ok = ok && report.max_rel_error < threshold;
  }
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis) {
  const ExperimentConfig base = load_config(args);
  const Vocab vocab;

  struct Cell {
    std::string label;
    std::vector<std::string> overrides;
  };
  std::vector<Cell> cells;
  if (axis == "noise_scale") {
    for (const char* gamma : {"0.1", "0.33", "1.0", "3.0"})
      cells.push_back({std::string("gamma=") + gamma,
                       {std::string("train.gamma_noise=") + gamma}});
  } else if (axis == "temperature") {
    // The small-temperature regime is fuzzy by convention; tau = 0.1 runs
    // through the identical machinery under the soft-mode label.
    for (const char* tau : {"0.0001", "0.001", "0.01"})
      cells.push_back({std::string("tau=") + tau,
                       {"rollout.mode=fuzzy",
                        std::string("rollout.tau_cot=") + tau}});
    cells.push_back({"tau=0.1", {"rollout.mode=soft", "rollout.tau_cot=0.1"}});
  } else if (axis == "placement") {
    for (const char* placement :
         {"embedding", "logits", "logits_topk", "final_hidden"})
      cells.push_back({std::string("placement=") + placement,
                       {std::string("rollout.placement=") + placement}});
  } else {
    throw ConfigError("sweep: unknown axis '" + axis +
                      "' (noise_scale | temperature | placement)");
  }

  const std::string sweep_dir = base.out_dir();
  fs::create_directories(sweep_dir);
  std::ofstream csv(sweep_dir + "/sweep.csv", std::ios::trunc);
  csv << "axis,cell,best_val,best_step,final_val\n";

  for (const auto& cell : cells) {
    CommonArgs cell_args = args;
    cell_args.overrides.insert(cell_args.overrides.end(),
                               cell.overrides.begin(), cell.overrides.end());
    const ExperimentConfig cfg = load_config(cell_args);
    const Dataset data = load_or_generate(cfg, vocab, args.data_dir);
    ModelParams params = ModelParams::init(cfg.model_config(vocab.size()),
                                           substream(cfg.seed(), "init"),
                                           cfg.model_init_std());
    check_prompt_budget(data, cfg, params);
    const std::string run_dir = sweep_dir + "/" + cell.label;
    write_run_config(cfg, run_dir);
    const TrainResult result = train(params, data, vocab, cfg.train_config(),
                                     cfg.rollout_config(params, vocab), run_dir);
    const double final_val = result.history.back().success;
    csv << axis << "," << cell.label << "," << result.best_success << ","
        << result.best_step << "," << final_val << "\n";
    csv.flush();
    std::cout << cell.label << ": best validation " << result.best_success
              << " at step " << result.best_step << ", final " << final_val
              << "\n";
  }
  std::cout << "sweep table: " << sweep_dir << "/sweep.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL fine-tuning of a small transformer over continuous "
               "chains of thought (hard / soft / fuzzy tokens)"};
  app.set_version_flag("--version",
                       std::string(kVersion) + " (" + kGitRevision + ")");
  app.require_subcommand(1);

  CommonArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate task datasets");
  add_common(gen, gen_args);

  CommonArgs train_args;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Run RLOO training");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--data", train_args.data_dir,
                        "Load datasets from this directory instead of generating");
  train_cmd->add_option("--resume", resume,
                        "Resume from a checkpoint (expects a .opt sidecar)");

  CommonArgs eval_args;
  std::string checkpoint, eval_out;
  bool dump_trajectories = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the inference suite");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data_dir,
                       "Load datasets from this directory instead of generating");
  eval_cmd->add_option("--out", eval_out, "Metrics output directory");
  eval_cmd->add_flag("--dump-trajectories", dump_trajectories,
                     "Write greedy trajectories as JSONL");

  CommonArgs check_args;
  double threshold = 1e-4;
  auto* check_cmd =
      app.add_subcommand("grad-check", "Finite-difference gradient oracle");
  add_common(check_cmd, check_args);
  check_cmd->add_option("--threshold", threshold, "Max relative error to pass");

  CommonArgs sweep_args;
  std::string axis;
  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweeps");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--axis", axis, "noise_scale | temperature | placement")
      ->required();
  sweep_cmd->add_option("--data", sweep_args.data_dir,
                        "Load datasets from this directory instead of generating");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train_cmd->parsed()) return cmd_train(train_args, resume);
    if (eval_cmd->parsed())
      return cmd_eval(eval_args, checkpoint, eval_out, dump_trajectories);
    if (check_cmd->parsed()) return cmd_grad_check(check_args, threshold);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, axis);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
