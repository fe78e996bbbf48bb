#include "darqn/cli.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "darqn/checkpoint.hpp"
#include "darqn/config.hpp"
#include "darqn/env.hpp"
#include "darqn/eval.hpp"
#include "darqn/kernels.hpp"
#include "darqn/model.hpp"
#include "darqn/train.hpp"
#include "darqn/util.hpp"
#include "darqn/viz.hpp"

namespace darqn {

namespace {

void apply_backend(const Config& cfg) {
  if (cfg.deterministic) {
    kernels::set_backend(kernels::Backend::Scalar);
  } else {
    kernels::set_backend(kernels::backend_from_string(cfg.backend));
  }
}

void print_resolved(const Config& cfg) {
  std::cout << "# resolved config\n" << print_config(cfg) << std::flush;
}

int env_frame_size(const Config& cfg) { return cfg.profile == "paper" ? 84 : 24; }

struct LoadedModel {
  Geometry geo;
  ParameterSet params;
};

LoadedModel load_model(const Config& cfg, const std::string& checkpoint) {
  const Arch arch = arch_from_string(cfg.model);
  auto env = make_env(cfg.env, env_frame_size(cfg), 0);
  LoadedModel m;
  m.geo = make_geometry(profile_from_string(cfg.profile), env->action_count());
  Rng init_rng(Rng::derive(cfg.seed, 0));
  init_params(m.params, arch, m.geo, init_rng);
  load_checkpoint(checkpoint, arch, m.params);
  return m;
}

int run_train(const std::string& config_path, const std::vector<std::string>& sets) {
  const Config cfg = resolve_config(config_path, sets);
  apply_backend(cfg);
  print_resolved(cfg);
  const TrainStats stats = train(cfg);
  std::cout << "trained steps=" << stats.steps << " epochs=" << stats.epochs
            << " updates=" << stats.updates
            << " last_eval_reward=" << format_double(stats.last_eval_reward)
            << (stats.early_stopped ? " (stopped at reward threshold)" : "") << "\n"
            << "metrics: " << stats.metrics_path << "\n"
            << "checkpoint: " << stats.final_checkpoint << "\n";
  return 0;
}

int run_eval(const std::string& config_path, const std::vector<std::string>& sets,
             const std::string& checkpoint, int episodes) {
  const Config cfg = resolve_config(config_path, sets);
  apply_backend(cfg);
  print_resolved(cfg);
  LoadedModel m = load_model(cfg, checkpoint);
  const Network net(arch_from_string(cfg.model), m.geo);
  auto env = make_env(cfg.env, env_frame_size(cfg), Rng::derive(cfg.seed, 8));
  NetworkPolicy policy(net, m.params, cfg.eval_epsilon, Rng(Rng::derive(cfg.seed, 9)), cfg.mix_prob);
  const EvalReport rep = evaluate(policy, *env, episodes > 0 ? episodes : cfg.eval_episodes);
  std::cout << "episodes=" << rep.episodes << " steps=" << rep.steps
            << " mean_reward=" << format_double(rep.mean_reward)
            << " stddev=" << format_double(rep.stddev_reward)
            << " mean_max_q=" << format_double(rep.mean_max_q) << "\n";
  return 0;
}

int run_count_params(const std::string& model, const std::string& profile, int actions) {
  const Geometry geo = make_geometry(profile_from_string(profile), actions);
  std::cout << count_params(arch_from_string(model), geo) << "\n";
  return 0;
}

int run_visualize(const std::string& config_path, const std::vector<std::string>& sets,
                  const std::string& checkpoint, int steps, const std::string& out_dir) {
  const Config cfg = resolve_config(config_path, sets);
  apply_backend(cfg);
  print_resolved(cfg);
  LoadedModel m = load_model(cfg, checkpoint);
  const Network net(arch_from_string(cfg.model), m.geo);
  auto env = make_env(cfg.env, env_frame_size(cfg), Rng::derive(cfg.seed, 10));
  NetworkPolicy policy(net, m.params, cfg.eval_epsilon, Rng(Rng::derive(cfg.seed, 11)), cfg.mix_prob);
  const int written = capture_trajectory(policy, *env, steps, out_dir, m.geo);
  std::cout << "wrote " << written << " frames and index.csv to " << out_dir << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"DQN/DRQN/DARQN training sandbox on pixel toy environments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, model = "darqn_soft", profile = "paper";
  std::vector<std::string> sets;
  int episodes = 0, steps = 10, actions = 18;

  auto* train_cmd = app.add_subcommand("train", "run the training loop");
  train_cmd->add_option("--config", config_path, "config file (key = value lines)")->required();
  train_cmd->add_option("--set", sets, "override, repeatable: --set key=value");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--config", config_path, "config file")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to load")->required();
  eval_cmd->add_option("--episodes", episodes, "episode count (default: config eval_episodes)");
  eval_cmd->add_option("--set", sets, "override, repeatable");

  auto* count_cmd = app.add_subcommand("count-params", "print the trainable parameter count");
  count_cmd->add_option("--model", model, "dqn|drqn|darqn_soft|darqn_hard")->required();
  count_cmd->add_option("--profile", profile, "paper|small")->required();
  count_cmd->add_option("--actions", actions, "action count (default 18)");

  auto* viz_cmd = app.add_subcommand("visualize", "export attention overlay frames");
  viz_cmd->add_option("--config", config_path, "config file")->required();
  viz_cmd->add_option("--checkpoint", checkpoint, "checkpoint to load")->required();
  viz_cmd->add_option("--steps", steps, "number of steps to record");
  viz_cmd->add_option("--out", out_dir, "output directory")->required();
  viz_cmd->add_option("--set", sets, "override, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(config_path, sets);
    if (eval_cmd->parsed()) return run_eval(config_path, sets, checkpoint, episodes);
    if (count_cmd->parsed()) return run_count_params(model, profile, actions);
    if (viz_cmd->parsed()) return run_visualize(config_path, sets, checkpoint, steps, out_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace darqn
