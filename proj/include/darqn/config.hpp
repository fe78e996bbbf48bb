#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace darqn {

// Flat key=value configuration. Unknown keys are rejected; everything is
// validated before any work starts. print_config() emits a form that parses
// back to an identical config.
struct Config {
  std::string model = "darqn_soft";
  std::string profile = "small";
  std::string env = "catch";
  uint64_t seed = 1;

  double gamma = 0.99;
  double alpha_start = 0.01;  // hard-attention default drops to 0.001
  double alpha_end = 0.00025;
  int64_t alpha_decay_steps = 1000000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  int64_t epsilon_decay_steps = 1000000;
  double eval_epsilon = 0.05;

  int unroll = 4;
  int update_period = 4;
  int minibatch = 32;
  int64_t target_sync_period = 10000;
  int64_t total_steps = 5000000;
  int64_t eval_period = 50000;
  int eval_episodes = 30;
  int64_t replay_capacity = 500000;
  int64_t learn_start = 5000;

  double mix_prob = 0.5;
  std::string advantage_sign = "prose";  // prose|as_printed
  double entropy_coeff = 0.0;
  bool reward_clip = false;

  std::string optimizer = "rmsprop";  // rmsprop|sgd
  double rms_decay = 0.95;
  double rms_momentum = 0.95;
  double rms_epsilon = 1e-6;

  bool deterministic = true;
  std::string backend = "auto";  // auto|scalar|avx2; deterministic pins scalar

  std::string out_dir = "runs/default";
  std::string transfer_from = "none";  // soft checkpoint to copy conv weights from
  std::string stop_at_reward = "none";  // numeric threshold or "none"

  bool operator==(const Config&) const = default;
};

// Parses "key = value" lines ('#' comments, blank lines allowed). Throws
// std::invalid_argument naming the offending key/line.
Config parse_config_text(const std::string& text, Config base = Config{});
Config parse_config_file(const std::string& path, Config base = Config{});
void apply_override(Config& cfg, const std::string& key_equals_value);

// Applies model-dependent defaults for keys the user did not set explicitly,
// then the DARQN_DETERMINISTIC environment override, then validates.
Config resolve_config(const std::string& config_path, const std::vector<std::string>& overrides);

std::string print_config(const Config& cfg);
void validate_config(const Config& cfg);

double stop_at_reward_value(const Config& cfg);  // +inf when disabled
bool stop_at_reward_enabled(const Config& cfg);

}  // namespace darqn
