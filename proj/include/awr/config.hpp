#pragma once

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "awr/algorithm.hpp"
#include "awr/checkpoint.hpp"
#include "awr/error.hpp"

namespace awr {

/// Everything a run needs: the training hyperparameters plus environment,
/// output location and logging. Serialised as nested JSON; every key has a
/// default so a config file only lists what it changes.
struct RunConfig {
  AwrConfig train;
  std::string env = "chain5";
  std::string output_dir = "runs/default";
  long checkpoint_interval = 10;
  std::string log_verbosity = "info";  // quiet | info | debug
};

namespace detail {

inline std::string estimator_name(const std::optional<ReturnEstimator>& e) {
  if (!e) return "auto";
  return *e == ReturnEstimator::td_lambda ? "td_lambda" : "monte_carlo";
}

inline std::string weighting_name(const std::optional<Weighting>& w) {
  if (!w) return "auto";
  switch (*w) {
    case Weighting::advantage: return "advantage";
    case Weighting::return_only: return "return";
    case Weighting::uniform: return "uniform";
  }
  return "auto";
}

inline std::string replay_name(const std::optional<bool>& on_policy) {
  if (!on_policy) return "auto";
  return *on_policy ? "on_policy" : "fifo";
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& rc) {
  const AwrConfig& c = rc.train;
  return {
      {"env", rc.env},
      {"output_dir", rc.output_dir},
      {"checkpoint_interval", rc.checkpoint_interval},
      {"log_verbosity", rc.log_verbosity},
      {"mode", to_string(c.mode)},
      {"seed", c.seed},
      {"max_iters", c.max_iters},
      {"samples_per_iter", c.samples_per_iter},
      {"buffer_capacity", c.buffer_capacity},
      {"minibatch", c.minibatch},
      {"value_steps", c.value_steps},
      {"policy_steps", c.policy_steps},
      {"lr_value", c.lr_value},
      {"lr_policy", c.lr_policy},
      {"momentum", c.momentum},
      {"eval_episodes", c.eval_episodes},
      {"returns",
       {{"gamma", c.returns.gamma}, {"lambda", c.returns.lambda}, {"beta", c.returns.beta},
        {"omega_max", c.returns.omega_max}}},
      {"network",
       {{"hidden", c.hidden},
        {"policy_std", c.policy_std},
        {"learn_std", c.learn_std},
        {"policy_output_scale", c.policy_output_scale},
        {"value_output_scale", c.value_output_scale}}},
      {"ablation",
       {{"estimator", detail::estimator_name(c.estimator)},
        {"weighting", detail::weighting_name(c.weighting)},
        {"replay", detail::replay_name(c.on_policy)},
        {"baseline", c.baseline == BaselineSource::current ? "current" : "previous"}}},
  };
}

namespace detail {

/// Overlays `src` onto `dst`, rejecting keys that `dst` does not have.
inline void merge_strict(nlohmann::json& dst, const nlohmann::json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected a JSON object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError(key + ": unknown configuration key");
    auto& slot = dst[it.key()];
    if (slot.is_object())
      merge_strict(slot, it.value(), key);
    else
      slot = it.value();
  }
}

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + key + ": invalid value " + j.at(key).dump());
  }
}

inline long count_field(const nlohmann::json& j, const std::string& key, const std::string& path = "") {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + key + ": expected an integer, got " + v.dump());
  return v.get<long>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::count_field;
  using detail::field;
  RunConfig rc;
  AwrConfig& c = rc.train;
  rc.env = field<std::string>(j, "env", "");
  rc.output_dir = field<std::string>(j, "output_dir", "");
  rc.checkpoint_interval = count_field(j, "checkpoint_interval");
  rc.log_verbosity = field<std::string>(j, "log_verbosity", "");
  if (rc.log_verbosity != "quiet" && rc.log_verbosity != "info" && rc.log_verbosity != "debug")
    throw ConfigError("log_verbosity: expected quiet, info or debug");
  if (rc.checkpoint_interval < 1) throw ConfigError("checkpoint_interval: must be positive");
  try {
    c.mode = mode_from_string(field<std::string>(j, "mode", ""));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("mode: ") + e.what());
  }
  const auto& seed = j.at("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
    throw ConfigError("seed: expected a non-negative integer, got " + seed.dump());
  c.seed = seed.get<std::uint64_t>();
  c.max_iters = count_field(j, "max_iters");
  c.samples_per_iter = count_field(j, "samples_per_iter");
  c.buffer_capacity = count_field(j, "buffer_capacity");
  c.minibatch = count_field(j, "minibatch");
  c.value_steps = count_field(j, "value_steps");
  c.policy_steps = count_field(j, "policy_steps");
  c.eval_episodes = count_field(j, "eval_episodes");
  c.lr_value = field<double>(j, "lr_value", "");
  c.lr_policy = field<double>(j, "lr_policy", "");
  c.momentum = field<double>(j, "momentum", "");

  const auto& r = j.at("returns");
  c.returns.gamma = field<double>(r, "gamma", "returns.");
  c.returns.lambda = field<double>(r, "lambda", "returns.");
  c.returns.beta = field<double>(r, "beta", "returns.");
  c.returns.omega_max = field<double>(r, "omega_max", "returns.");

  const auto& n = j.at("network");
  c.hidden = field<std::vector<int>>(n, "hidden", "network.");
  c.policy_std = field<double>(n, "policy_std", "network.");
  c.learn_std = field<bool>(n, "learn_std", "network.");
  c.policy_output_scale = field<double>(n, "policy_output_scale", "network.");
  c.value_output_scale = field<double>(n, "value_output_scale", "network.");

  const auto& a = j.at("ablation");
  const auto est = field<std::string>(a, "estimator", "ablation.");
  if (est == "td_lambda")
    c.estimator = ReturnEstimator::td_lambda;
  else if (est == "monte_carlo")
    c.estimator = ReturnEstimator::monte_carlo;
  else if (est != "auto")
    throw ConfigError("ablation.estimator: expected auto, td_lambda or monte_carlo");
  const auto w = field<std::string>(a, "weighting", "ablation.");
  if (w == "advantage")
    c.weighting = Weighting::advantage;
  else if (w == "return")
    c.weighting = Weighting::return_only;
  else if (w == "uniform")
    c.weighting = Weighting::uniform;
  else if (w != "auto")
    throw ConfigError("ablation.weighting: expected auto, advantage, return or uniform");
  const auto rep = field<std::string>(a, "replay", "ablation.");
  if (rep == "fifo")
    c.on_policy = false;
  else if (rep == "on_policy")
    c.on_policy = true;
  else if (rep != "auto")
    throw ConfigError("ablation.replay: expected auto, fifo or on_policy");
  const auto base = field<std::string>(a, "baseline", "ablation.");
  if (base == "current")
    c.baseline = BaselineSource::current;
  else if (base == "previous")
    c.baseline = BaselineSource::previous;
  else
    throw ConfigError("ablation.baseline: expected current or previous");

  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  make_env(rc.env, 0);  // rejects unknown environment names
  return rc;
}

/// Parses a `key.path=value` override. The value is read as JSON when it
/// parses (numbers, booleans, arrays), otherwise as a bare string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError(path + ": unknown configuration key");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError(path + ": cannot replace a whole section");
  *node = value;
}

/// Precedence: --set overrides > AWR_SEED environment variable > config file > defaults.
inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = to_json(RunConfig{});
  if (!path.empty()) {
    nlohmann::json file;
    try {
      file = read_json_file(path);
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
    detail::merge_strict(j, file, "");
  }
  if (const char* s = std::getenv("AWR_SEED"); s != nullptr && *s != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == nullptr || *end != '\0') throw ConfigError("AWR_SEED: expected a non-negative integer");
    j["seed"] = v;
  }
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

}  // namespace awr
