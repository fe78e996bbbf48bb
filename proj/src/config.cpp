#include "darqn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "darqn/kernels.hpp"
#include "darqn/model.hpp"
#include "darqn/optim.hpp"

namespace darqn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  int64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true|false, got '" + v + "'");
}

struct Field {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define STR_FIELD(name) \
  {#name, Field{[](Config& c, const std::string& v) { c.name = v; }, \
                [](const Config& c) { return c.name; }}}
#define DBL_FIELD(name) \
  {#name, Field{[](Config& c, const std::string& v) { c.name = parse_double(#name, v); }, \
                [](const Config& c) { return format_double(c.name); }}}
#define INT_FIELD(type, name) \
  {#name, Field{[](Config& c, const std::string& v) { c.name = static_cast<type>(parse_int(#name, v)); }, \
                [](const Config& c) { return std::to_string(c.name); }}}
#define BOOL_FIELD(name) \
  {#name, Field{[](Config& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
                [](const Config& c) { return c.name ? std::string("true") : std::string("false"); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields = {
      STR_FIELD(model),
      STR_FIELD(profile),
      STR_FIELD(env),
      {"seed", Field{[](Config& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                     [](const Config& c) { return std::to_string(c.seed); }}},
      DBL_FIELD(gamma),
      DBL_FIELD(alpha_start),
      DBL_FIELD(alpha_end),
      INT_FIELD(int64_t, alpha_decay_steps),
      DBL_FIELD(epsilon_start),
      DBL_FIELD(epsilon_end),
      INT_FIELD(int64_t, epsilon_decay_steps),
      DBL_FIELD(eval_epsilon),
      INT_FIELD(int, unroll),
      INT_FIELD(int, update_period),
      INT_FIELD(int, minibatch),
      INT_FIELD(int64_t, target_sync_period),
      INT_FIELD(int64_t, total_steps),
      INT_FIELD(int64_t, eval_period),
      INT_FIELD(int, eval_episodes),
      INT_FIELD(int64_t, replay_capacity),
      INT_FIELD(int64_t, learn_start),
      DBL_FIELD(mix_prob),
      STR_FIELD(advantage_sign),
      DBL_FIELD(entropy_coeff),
      BOOL_FIELD(reward_clip),
      STR_FIELD(optimizer),
      DBL_FIELD(rms_decay),
      DBL_FIELD(rms_momentum),
      DBL_FIELD(rms_epsilon),
      BOOL_FIELD(deterministic),
      STR_FIELD(backend),
      STR_FIELD(out_dir),
      STR_FIELD(transfer_from),
      STR_FIELD(stop_at_reward),
  };
  return kFields;
}

#undef STR_FIELD
#undef DBL_FIELD
#undef INT_FIELD
#undef BOOL_FIELD

const Field& field_for(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return f;
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_kv(Config& cfg, const std::string& key, const std::string& value,
              std::set<std::string>* seen) {
  field_for(key).set(cfg, value);
  if (seen) seen->insert(key);
}

Config parse_text_impl(const std::string& text, Config cfg, std::set<std::string>* seen) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not 'key = value'");
    apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), seen);
  }
  return cfg;
}

}  // namespace

Config parse_config_text(const std::string& text, Config base) {
  return parse_text_impl(text, std::move(base), nullptr);
}

Config parse_config_file(const std::string& path, Config base) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config file '" + path + "' cannot be read");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

void apply_override(Config& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override '" + kv + "' is not key=value");
  apply_kv(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), nullptr);
}

Config resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  Config cfg;
  std::set<std::string> seen;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::invalid_argument("config file '" + config_path + "' cannot be read");
    std::ostringstream buf;
    buf << f.rdbuf();
    cfg = parse_text_impl(buf.str(), cfg, &seen);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override '" + kv + "' is not key=value");
    apply_kv(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), &seen);
  }
  if (cfg.model == "darqn_hard" && !seen.count("alpha_start")) cfg.alpha_start = 0.001;
  const char* force = std::getenv("DARQN_DETERMINISTIC");
  if (force && std::string(force) == "1") cfg.deterministic = true;
  validate_config(cfg);
  return cfg;
}

std::string print_config(const Config& cfg) {
  std::ostringstream os;
  for (const auto& [name, f] : fields()) os << name << " = " << f.get(cfg) << "\n";
  return os.str();
}

bool stop_at_reward_enabled(const Config& cfg) { return cfg.stop_at_reward != "none"; }

double stop_at_reward_value(const Config& cfg) {
  if (!stop_at_reward_enabled(cfg)) return std::numeric_limits<double>::infinity();
  return parse_double("stop_at_reward", cfg.stop_at_reward);
}

void validate_config(const Config& cfg) {
  arch_from_string(cfg.model);
  profile_from_string(cfg.profile);
  if (cfg.env != "catch" && cfg.env != "seek_avoid")
    throw std::invalid_argument("config: unknown env '" + cfg.env + "'");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("config: gamma must be in [0,1]");
  if (!(cfg.alpha_start > 0.0 && cfg.alpha_end > 0.0))
    throw std::invalid_argument("config: learning rates must be positive");
  if (cfg.alpha_decay_steps <= 0 || cfg.epsilon_decay_steps <= 0)
    throw std::invalid_argument("config: decay steps must be positive");
  for (double e : {cfg.epsilon_start, cfg.epsilon_end, cfg.eval_epsilon})
    if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("config: epsilons must be in [0,1]");
  if (cfg.unroll < 1) throw std::invalid_argument("config: unroll must be >= 1");
  if (cfg.update_period < 1) throw std::invalid_argument("config: update_period must be >= 1");
  if (cfg.minibatch < 1) throw std::invalid_argument("config: minibatch must be >= 1");
  if (cfg.target_sync_period < 1) throw std::invalid_argument("config: target_sync_period must be >= 1");
  if (cfg.total_steps < 0) throw std::invalid_argument("config: total_steps must be >= 0");
  if (cfg.eval_period < 1) throw std::invalid_argument("config: eval_period must be >= 1");
  if (cfg.eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be >= 1");
  if (cfg.replay_capacity < 1) throw std::invalid_argument("config: replay_capacity must be >= 1");
  if (cfg.learn_start < 0) throw std::invalid_argument("config: learn_start must be >= 0");
  if (!(cfg.mix_prob >= 0.0 && cfg.mix_prob <= 1.0))
    throw std::invalid_argument("config: mix_prob must be in [0,1]");
  if (cfg.advantage_sign != "prose" && cfg.advantage_sign != "as_printed")
    throw std::invalid_argument("config: advantage_sign must be prose|as_printed");
  if (cfg.optimizer != "rmsprop" && cfg.optimizer != "sgd")
    throw std::invalid_argument("config: optimizer must be rmsprop|sgd");
  if (!(cfg.rms_decay >= 0.0 && cfg.rms_decay < 1.0))
    throw std::invalid_argument("config: rms_decay must be in [0,1)");
  if (!(cfg.rms_momentum >= 0.0 && cfg.rms_momentum < 1.0))
    throw std::invalid_argument("config: rms_momentum must be in [0,1)");
  if (!(cfg.rms_epsilon > 0.0)) throw std::invalid_argument("config: rms_epsilon must be positive");
  kernels::backend_from_string(cfg.backend);
  if (stop_at_reward_enabled(cfg)) stop_at_reward_value(cfg);
  if (cfg.out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

}  // namespace darqn
