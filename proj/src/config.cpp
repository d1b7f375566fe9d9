#include "forecaster/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace forecaster {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(value, &used));
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
  } else {
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
    }
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::string fmt_real(Scalar v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void AgentConfig::set(const std::string& key, const std::string& value) {
  auto i = [&](int& field) { field = parse_number<int>(key, value); };
  auto r = [&](Scalar& field) { field = parse_number<Scalar>(key, value); };
  if (key == "K") i(k);
  else if (key == "X") i(branching);
  else if (key == "m") i(depth);
  else if (key == "C") i(abstract_period);
  else if (key == "primitive_update_period") i(primitive_update_period);
  else if (key == "planner_enabled") planner_enabled = parse_bool(key, value);
  else if (key == "latent_dim") i(latent_dim);
  else if (key == "hidden") i(hidden);
  else if (key == "code_factors") i(code_factors);
  else if (key == "code_classes") i(code_classes);
  else if (key == "gamma") r(gamma);
  else if (key == "lr_world_model") r(lr_world_model);
  else if (key == "lr_codec") r(lr_codec);
  else if (key == "lr_manager") r(lr_manager);
  else if (key == "lr_worker") r(lr_worker);
  else if (key == "lr_abstract") r(lr_abstract);
  else if (key == "entropy_weight") r(entropy_weight);
  else if (key == "recon_weight") r(recon_weight);
  else if (key == "dyn_weight") r(dyn_weight);
  else if (key == "reward_weight") r(reward_weight);
  else if (key == "horizon") i(horizon);
  else if (key == "wm_batch") i(wm_batch);
  else if (key == "seq_len") i(seq_len);
  else if (key == "imagination_starts") i(imagination_starts);
  else if (key == "abstract_batch") i(abstract_batch);
  else if (key == "primitive_capacity") primitive_capacity = parse_number<std::size_t>(key, value);
  else if (key == "extended_capacity") extended_capacity = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "maze_seed") maze_seed = parse_number<long long>(key, value);
  else if (key == "size") size = parse_maze_size(value);
  else if (key == "maze_file") maze_file = value;
  else if (key == "max_episode_steps") i(max_episode_steps);
  else if (key == "total_env_steps") total_env_steps = parse_number<long long>(key, value);
  else if (key == "eval_every") i(eval_every);
  else if (key == "measure_plan_time") measure_plan_time = parse_bool(key, value);
  else if (key == "stop_at_first_success") stop_at_first_success = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void AgentConfig::validate() const {
  auto positive = [](const char* name, long long v) {
    if (v < 1) throw ConfigError(std::string("config key '") + name + "' must be >= 1");
  };
  positive("K", k);
  positive("X", branching);
  positive("m", depth);
  positive("C", abstract_period);
  positive("primitive_update_period", primitive_update_period);
  positive("latent_dim", latent_dim);
  positive("hidden", hidden);
  positive("code_factors", code_factors);
  positive("code_classes", code_classes);
  positive("horizon", horizon);
  positive("wm_batch", wm_batch);
  positive("seq_len", seq_len);
  positive("imagination_starts", imagination_starts);
  positive("abstract_batch", abstract_batch);
  positive("primitive_capacity", static_cast<long long>(primitive_capacity));
  positive("extended_capacity", static_cast<long long>(extended_capacity));
  positive("eval_every", eval_every);
  if (total_env_steps < 0) throw ConfigError("config key 'total_env_steps' must be >= 0");
  if (max_episode_steps < 0) throw ConfigError("config key 'max_episode_steps' must be >= 0");
  if (horizon % k != 0) {
    throw ConfigError("config: K=" + std::to_string(k) + " must divide horizon=" +
                      std::to_string(horizon));
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("config key 'gamma' must lie in (0,1)");
  for (auto [name, v] : {std::pair{"lr_world_model", lr_world_model}, {"lr_codec", lr_codec},
                         {"lr_manager", lr_manager}, {"lr_worker", lr_worker},
                         {"lr_abstract", lr_abstract}, {"entropy_weight", entropy_weight}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("config key '") + name + "' must be finite and >= 0");
    }
  }
}

Scalar AgentConfig::abstract_discount() const { return std::pow(gamma, k); }

std::string AgentConfig::to_text() const {
  std::ostringstream os;
  os << "K = " << k << '\n'
     << "X = " << branching << '\n'
     << "m = " << depth << '\n'
     << "C = " << abstract_period << '\n'
     << "primitive_update_period = " << primitive_update_period << '\n'
     << "planner_enabled = " << (planner_enabled ? "true" : "false") << '\n'
     << "latent_dim = " << latent_dim << '\n'
     << "hidden = " << hidden << '\n'
     << "code_factors = " << code_factors << '\n'
     << "code_classes = " << code_classes << '\n'
     << "gamma = " << fmt_real(gamma) << '\n'
     << "lr_world_model = " << fmt_real(lr_world_model) << '\n'
     << "lr_codec = " << fmt_real(lr_codec) << '\n'
     << "lr_manager = " << fmt_real(lr_manager) << '\n'
     << "lr_worker = " << fmt_real(lr_worker) << '\n'
     << "lr_abstract = " << fmt_real(lr_abstract) << '\n'
     << "entropy_weight = " << fmt_real(entropy_weight) << '\n'
     << "recon_weight = " << fmt_real(recon_weight) << '\n'
     << "dyn_weight = " << fmt_real(dyn_weight) << '\n'
     << "reward_weight = " << fmt_real(reward_weight) << '\n'
     << "horizon = " << horizon << '\n'
     << "wm_batch = " << wm_batch << '\n'
     << "seq_len = " << seq_len << '\n'
     << "imagination_starts = " << imagination_starts << '\n'
     << "abstract_batch = " << abstract_batch << '\n'
     << "primitive_capacity = " << primitive_capacity << '\n'
     << "extended_capacity = " << extended_capacity << '\n'
     << "seed = " << seed << '\n'
     << "maze_seed = " << maze_seed << '\n'
     << "size = " << to_string(size) << '\n';
  if (!maze_file.empty()) os << "maze_file = " << maze_file << '\n';
  os << "max_episode_steps = " << max_episode_steps << '\n'
     << "total_env_steps = " << total_env_steps << '\n'
     << "eval_every = " << eval_every << '\n'
     << "measure_plan_time = " << (measure_plan_time ? "true" : "false") << '\n'
     << "stop_at_first_success = " << (stop_at_first_success ? "true" : "false") << '\n';
  return os.str();
}

AgentConfig AgentConfig::from_text(const std::string& text) {
  AgentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

AgentConfig AgentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

MazeLayout make_layout(const AgentConfig& cfg) {
  if (!cfg.maze_file.empty()) {
    std::ifstream in(cfg.maze_file);
    if (!in) throw ConfigError("cannot open maze file '" + cfg.maze_file + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return MazeLayout::from_text(ss.str());
  }
  return generate(cfg.size, cfg.effective_maze_seed());
}

}  // namespace forecaster
