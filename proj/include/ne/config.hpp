#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ne/envs.hpp"
#include "ne/topology.hpp"

namespace ne {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { NE, Random, Static, Reset };
enum class NeScope { Both, Actor, Critic };
enum class ReviewMode { Auto, On, Off };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::NE: return "ne";
    case Mode::Random: return "random";
    case Mode::Static: return "static";
    case Mode::Reset: return "reset";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "ne") return Mode::NE;
  if (s == "random") return Mode::Random;
  if (s == "static") return Mode::Static;
  if (s == "reset") return Mode::Reset;
  throw ConfigError("mode: unknown mode '" + s + "' (ne|random|static|reset)");
}

/// Full experiment configuration. Every field has a default; parse_config
/// fills and validates, so a default-constructed value is a runnable config.
struct RunConfig {
  // run
  std::vector<Mode> modes{Mode::NE};
  std::vector<std::uint64_t> seeds{1};
  std::string env_name = "pendulum";  // environment or "continual"
  long total_steps = 100000;
  long eval_interval = 2500;
  int eval_episodes = 5;
  long warmup_steps = 1000;
  std::size_t buffer_capacity = 100000;
  int batch_size = 128;
  std::vector<int> hidden_dims{64, 64};
  std::string out_dir = "runs";
  std::string static_density = "sparse";  // sparse | dense
  std::string ne_scope = "both";          // both | actor | critic
  std::string experience_review = "auto"; // auto | on | off

  // td3
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double polyak_rho = 0.005;
  int policy_delay = 2;
  double exploration_sigma = 0.1;
  double target_noise_sigma = 0.2;
  double target_noise_clip = 0.5;

  // growth schedule (NE)
  GrowthConfig growth{};  // t_end = 0 in a config file means "total_steps"

  // experience-review signal
  int epsilon_window = 20;
  double epsilon_lower_bound = 0.25;

  // reset baseline
  long reset_interval = 0;  // 0 in a config file means total_steps / 5

  // continual protocol
  std::vector<std::string> continual_tasks{"pendulum", "reacher", "pointmass"};
  int episodes_per_task = 10;
  int cycles = 2;

  bool continual() const { return env_name == "continual"; }

  ContinualSchedule continual_schedule() const {
    ContinualSchedule s;
    for (const auto& t : continual_tasks) s.tasks.push_back(env_from_string(t));
    s.episodes_per_task = episodes_per_task;
    s.cycles = cycles;
    return s;
  }

  void resolve_and_validate() {
    if (modes.empty()) throw ConfigError("mode: at least one mode required");
    if (seeds.empty()) throw ConfigError("seed: at least one seed required");
    if (total_steps < 1) throw ConfigError("total_steps: must be >= 1");
    if (eval_interval < 1) throw ConfigError("eval_interval: must be >= 1");
    if (eval_episodes < 1) throw ConfigError("eval_episodes: must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup_steps: must be >= 0");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity: must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (hidden_dims.empty()) throw ConfigError("hidden_dims: at least one layer");
    for (int h : hidden_dims)
      if (h < 1) throw ConfigError("hidden_dims: widths must be >= 1");
    if (env_name != "continual") env_from_string(env_name);
    if (static_density != "sparse" && static_density != "dense")
      throw ConfigError("static_density: must be sparse or dense");
    if (ne_scope != "both" && ne_scope != "actor" && ne_scope != "critic")
      throw ConfigError("ne_scope: must be both, actor or critic");
    if (experience_review != "auto" && experience_review != "on" &&
        experience_review != "off")
      throw ConfigError("experience_review: must be auto, on or off");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma: must be in [0, 1)");
    if (!(actor_lr > 0.0)) throw ConfigError("actor_lr: must be > 0");
    if (!(critic_lr > 0.0)) throw ConfigError("critic_lr: must be > 0");
    if (!(polyak_rho > 0.0 && polyak_rho <= 1.0))
      throw ConfigError("polyak_rho: must be in (0, 1]");
    if (policy_delay < 1) throw ConfigError("policy_delay: must be >= 1");
    if (exploration_sigma < 0.0) throw ConfigError("exploration_sigma: must be >= 0");
    if (target_noise_sigma < 0.0) throw ConfigError("target_noise_sigma: must be >= 0");
    if (target_noise_clip < 0.0) throw ConfigError("target_noise_clip: must be >= 0");
    if (epsilon_window < 1) throw ConfigError("epsilon_window: must be >= 1");
    if (!(epsilon_lower_bound >= 0.0 && epsilon_lower_bound <= 1.0))
      throw ConfigError("epsilon_lower_bound: must be in [0, 1]");
    if (reset_interval < 0) throw ConfigError("reset_interval: must be >= 0");
    if (episodes_per_task < 1) throw ConfigError("episodes_per_task: must be >= 1");
    if (cycles < 1) throw ConfigError("cycles: must be >= 1");
    if (continual())
      for (const auto& t : continual_tasks) env_from_string(t);

    if (growth.t_end == 0) growth.t_end = total_steps;
    if (reset_interval == 0) reset_interval = std::max<long>(1, total_steps / 5);
    try {
      growth.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (static_cast<long>(buffer_capacity) < batch_size)
      throw ConfigError("buffer_capacity: must be >= batch_size");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError(key + ": not a number '" + v + "'");
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError(key + ": not an integer '" + v + "'");
  }
}

}  // namespace detail

/// Parses the flat `key = value` document. Unknown keys are rejected; every
/// default is filled in and validated.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError(key + ": duplicate key");

    using detail::split_list;
    using detail::to_double;
    using detail::to_long;
    if (key == "mode") {
      cfg.modes.clear();
      for (const auto& m : split_list(val)) cfg.modes.push_back(mode_from_string(m));
    } else if (key == "seed") {
      cfg.seeds.clear();
      for (const auto& s : split_list(val))
        cfg.seeds.push_back(static_cast<std::uint64_t>(to_long(key, s)));
    } else if (key == "env") {
      cfg.env_name = val;
    } else if (key == "total_steps") {
      cfg.total_steps = to_long(key, val);
    } else if (key == "eval_interval") {
      cfg.eval_interval = to_long(key, val);
    } else if (key == "eval_episodes") {
      cfg.eval_episodes = static_cast<int>(to_long(key, val));
    } else if (key == "warmup_steps") {
      cfg.warmup_steps = to_long(key, val);
    } else if (key == "buffer_capacity") {
      const long c = to_long(key, val);
      if (c < 1) throw ConfigError("buffer_capacity: must be >= 1");
      cfg.buffer_capacity = static_cast<std::size_t>(c);
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(to_long(key, val));
    } else if (key == "hidden_dims") {
      cfg.hidden_dims.clear();
      for (const auto& h : split_list(val))
        cfg.hidden_dims.push_back(static_cast<int>(to_long(key, h)));
    } else if (key == "out_dir") {
      cfg.out_dir = val;
    } else if (key == "static_density") {
      cfg.static_density = val;
    } else if (key == "ne_scope") {
      cfg.ne_scope = val;
    } else if (key == "experience_review") {
      cfg.experience_review = val;
    } else if (key == "gamma") {
      cfg.gamma = to_double(key, val);
    } else if (key == "actor_lr") {
      cfg.actor_lr = to_double(key, val);
    } else if (key == "critic_lr") {
      cfg.critic_lr = to_double(key, val);
    } else if (key == "polyak_rho") {
      cfg.polyak_rho = to_double(key, val);
    } else if (key == "policy_delay") {
      cfg.policy_delay = static_cast<int>(to_long(key, val));
    } else if (key == "exploration_sigma") {
      cfg.exploration_sigma = to_double(key, val);
    } else if (key == "target_noise_sigma") {
      cfg.target_noise_sigma = to_double(key, val);
    } else if (key == "target_noise_clip") {
      cfg.target_noise_clip = to_double(key, val);
    } else if (key == "sparsity") {
      cfg.growth.sparsity = to_double(key, val);
    } else if (key == "grow_interval") {
      cfg.growth.grow_interval = to_long(key, val);
    } else if (key == "alpha") {
      cfg.growth.alpha = to_double(key, val);
    } else if (key == "t_end") {
      cfg.growth.t_end = to_long(key, val);
    } else if (key == "omega") {
      cfg.growth.omega = to_double(key, val);
    } else if (key == "kappa") {
      cfg.growth.kappa = to_double(key, val);
    } else if (key == "tau") {
      cfg.growth.tau = to_double(key, val);
    } else if (key == "probe_batch_size") {
      cfg.growth.probe_batch_size = static_cast<int>(to_long(key, val));
    } else if (key == "epsilon_window") {
      cfg.epsilon_window = static_cast<int>(to_long(key, val));
    } else if (key == "epsilon_lower_bound") {
      cfg.epsilon_lower_bound = to_double(key, val);
    } else if (key == "reset_interval") {
      cfg.reset_interval = to_long(key, val);
    } else if (key == "continual_tasks") {
      cfg.continual_tasks = split_list(val);
    } else if (key == "episodes_per_task") {
      cfg.episodes_per_task = static_cast<int>(to_long(key, val));
    } else if (key == "cycles") {
      cfg.cycles = static_cast<int>(to_long(key, val));
    } else {
      throw ConfigError(key + ": unknown key");
    }
  }
  // range checks that the growth validate() reports under its own key names
  if (!(cfg.growth.omega >= 0.0 && cfg.growth.omega < 1.0))
    throw ConfigError("omega: must satisfy 0 <= omega < 1");
  if (cfg.growth.grow_interval < 1) throw ConfigError("grow_interval: must be >= 1");
  if (!(cfg.growth.sparsity >= 0.0 && cfg.growth.sparsity < 1.0))
    throw ConfigError("sparsity: must satisfy 0 <= Sp < 1");
  cfg.resolve_and_validate();
  return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace detail {

inline std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += xs[i];
  }
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Canonical echo of a fully resolved config, restricted to a single
/// (mode, seed). Parsing the echo reproduces the same resolved RunConfig.
inline std::string echo_resolved_config(const RunConfig& cfg, Mode mode,
                                        std::uint64_t seed) {
  using detail::format_number;
  std::ostringstream o;
  o << "# resolved configuration (all defaults filled)\n";
  o << "mode = " << to_string(mode) << "\n";
  o << "seed = " << seed << "\n";
  o << "env = " << cfg.env_name << "\n";
  o << "total_steps = " << cfg.total_steps << "\n";
  o << "eval_interval = " << cfg.eval_interval << "\n";
  o << "eval_episodes = " << cfg.eval_episodes << "\n";
  o << "warmup_steps = " << cfg.warmup_steps << "\n";
  o << "buffer_capacity = " << cfg.buffer_capacity << "\n";
  o << "batch_size = " << cfg.batch_size << "\n";
  std::vector<std::string> dims;
  for (int h : cfg.hidden_dims) dims.push_back(std::to_string(h));
  o << "hidden_dims = " << detail::join(dims) << "\n";
  o << "out_dir = " << cfg.out_dir << "\n";
  o << "static_density = " << cfg.static_density << "\n";
  o << "ne_scope = " << cfg.ne_scope << "\n";
  o << "experience_review = " << cfg.experience_review << "\n";
  o << "gamma = " << format_number(cfg.gamma) << "\n";
  o << "actor_lr = " << format_number(cfg.actor_lr) << "\n";
  o << "critic_lr = " << format_number(cfg.critic_lr) << "\n";
  o << "polyak_rho = " << format_number(cfg.polyak_rho) << "\n";
  o << "policy_delay = " << cfg.policy_delay << "\n";
  o << "exploration_sigma = " << format_number(cfg.exploration_sigma) << "\n";
  o << "target_noise_sigma = " << format_number(cfg.target_noise_sigma) << "\n";
  o << "target_noise_clip = " << format_number(cfg.target_noise_clip) << "\n";
  o << "sparsity = " << format_number(cfg.growth.sparsity) << "\n";
  o << "grow_interval = " << cfg.growth.grow_interval << "\n";
  o << "alpha = " << format_number(cfg.growth.alpha) << "\n";
  o << "t_end = " << cfg.growth.t_end << "\n";
  o << "omega = " << format_number(cfg.growth.omega) << "\n";
  o << "kappa = " << format_number(cfg.growth.kappa) << "\n";
  o << "tau = " << format_number(cfg.growth.tau) << "\n";
  o << "probe_batch_size = " << cfg.growth.probe_batch_size << "\n";
  o << "epsilon_window = " << cfg.epsilon_window << "\n";
  o << "epsilon_lower_bound = " << format_number(cfg.epsilon_lower_bound) << "\n";
  o << "reset_interval = " << cfg.reset_interval << "\n";
  o << "continual_tasks = " << detail::join(cfg.continual_tasks) << "\n";
  o << "episodes_per_task = " << cfg.episodes_per_task << "\n";
  o << "cycles = " << cfg.cycles << "\n";
  return o.str();
}

}  // namespace ne
