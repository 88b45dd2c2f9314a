#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "awr/envs.hpp"
#include "awr/error.hpp"
#include "awr/replay.hpp"

namespace awr {

/// Static collection of whole episodes plus provenance metadata.
struct Dataset {
  std::string env;
  std::string policy;
  std::vector<Trajectory> episodes;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.size();
    return n;
  }

  double mean_episode_return() const {
    if (episodes.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : episodes) s += e.total_reward();
    return s / static_cast<double>(episodes.size());
  }
};

inline bool operator==(const Transition& a, const Transition& b) {
  return a.state == b.state && actions_equal(a.action, b.action) && a.reward == b.reward && a.next_state == b.next_state;
}

inline bool operator==(const Dataset& a, const Dataset& b) {
  if (a.env != b.env || a.policy != b.policy || a.episodes.size() != b.episodes.size()) return false;
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    const auto& x = a.episodes[i];
    const auto& y = b.episodes[i];
    if (x.end != y.end || x.steps.size() != y.steps.size()) return false;
    for (std::size_t k = 0; k < x.steps.size(); ++k)
      if (!(x.steps[k] == y.steps[k])) return false;
  }
  return true;
}

/// Rolls out whole episodes with `act(state)` until at least n transitions
/// have been gathered.
template <typename ActFn>
Dataset collect_dataset(Env& env, ActFn&& act, std::size_t n, std::string policy_description) {
  if (n < 1) throw ConfigError("collect: need at least one transition");
  Dataset d;
  d.env = env.name();
  d.policy = std::move(policy_description);
  std::size_t total = 0;
  while (total < n) {
    d.episodes.push_back(rollout_episode(env, act));
    total += d.episodes.back().size();
  }
  return d;
}

template <typename Rng>
Dataset collect_dataset(Env& env, const PolicyHead& pi, std::size_t n, Rng& rng, bool deterministic = false,
                        std::string policy_description = "policy") {
  if (deterministic) return collect_dataset(env, [&](const Vec& s) { return pi.mode(s); }, n, policy_description);
  return collect_dataset(env, [&](const Vec& s) { return pi.sample(s, rng); }, n, policy_description);
}

/// Treats a dataset as a replay buffer holding exactly its episodes.
inline ReplayBuffer to_buffer(const Dataset& d) {
  if (d.episodes.empty()) throw ConfigError("dataset is empty");
  ReplayBuffer b(static_cast<long long>(d.size()));
  for (const auto& e : d.episodes) b.push_trajectory(e, 0);
  return b;
}

inline Dataset from_buffer(const ReplayBuffer& b, std::string env, std::string policy) {
  Dataset d{std::move(env), std::move(policy), {}};
  for (std::size_t i = 0; i < b.num_trajectories(); ++i) {
    Trajectory t = b.trajectory(i);
    t.returns.clear();
    t.weights.clear();
    d.episodes.push_back(std::move(t));
  }
  return d;
}

namespace detail {

inline nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// JSON-lines: a header {"env","policy","size"}, then one object per
/// transition {"ep","t","s","a","r","done"}. The last row of each episode
/// also carries "s_next" so truncated tails can be bootstrapped after reload.
inline void write_dataset(std::ostream& os, const Dataset& d) {
  os << nlohmann::json{{"env", d.env}, {"policy", d.policy}, {"size", d.size()}}.dump() << '\n';
  for (std::size_t ep = 0; ep < d.episodes.size(); ++ep) {
    const auto& e = d.episodes[ep];
    for (std::size_t t = 0; t < e.size(); ++t) {
      const auto& tr = e.steps[t];
      const bool last = t + 1 == e.size();
      nlohmann::json row;
      row["ep"] = ep;
      row["t"] = t;
      row["s"] = detail::vec_json(tr.state);
      if (const int* id = std::get_if<int>(&tr.action))
        row["a"] = *id;
      else
        row["a"] = detail::vec_json(std::get<Vec>(tr.action));
      row["r"] = tr.reward;
      row["done"] = last ? to_string(e.terminal() ? StepStatus::terminal : StepStatus::truncated)
                         : to_string(StepStatus::running);
      if (last) row["s_next"] = detail::vec_json(tr.next_state);
      os << row.dump() << '\n';
    }
  }
}

inline Dataset read_dataset(std::istream& is) {
  Dataset d;
  std::string line;
  long lineno = 0;
  auto parse = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
  };

  if (!std::getline(is, line)) throw ParseError("missing header line", 1);
  ++lineno;
  const auto header = parse(line);
  std::size_t declared = 0;
  try {
    d.env = header.at("env").get<std::string>();
    d.policy = header.at("policy").get<std::string>();
    declared = header.at("size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno);
  }

  Trajectory current;
  bool open = false;
  std::size_t expected_ep = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto row = parse(line);
    try {
      const auto ep = row.at("ep").get<std::size_t>();
      const auto t = row.at("t").get<std::size_t>();
      if (ep != expected_ep || t != current.size())
        throw ParseError("episode/step index out of sequence (ep " + std::to_string(ep) + ", t " + std::to_string(t) + ")",
                         lineno);
      Transition tr;
      tr.state = detail::json_vec(row.at("s"));
      const auto& a = row.at("a");
      if (a.is_number_integer())
        tr.action = a.get<int>();
      else
        tr.action = detail::json_vec(a);
      tr.reward = row.at("r").get<double>();
      const auto done = row.at("done").get<std::string>();
      // Non-final rows get their successor's state patched in below.
      if (row.contains("s_next")) tr.next_state = detail::json_vec(row.at("s_next"));
      if (!current.steps.empty() && current.steps.back().next_state.size() == 0)
        current.steps.back().next_state = tr.state;
      current.steps.push_back(std::move(tr));
      open = true;
      if (done == "running") continue;
      if (done != "terminal" && done != "truncated") throw ParseError("unknown done value '" + done + "'", lineno);
      current.end = done == "terminal" ? Termination::terminal : Termination::truncated;
      if (current.steps.back().next_state.size() == 0) current.steps.back().next_state = current.steps.back().state;
      current.validate();
      d.episodes.push_back(std::move(current));
      current = Trajectory{};
      open = false;
      ++expected_ep;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad transition: ") + e.what(), lineno);
    } catch (const ShapeError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (open) throw ParseError("file ends inside an episode (truncated file?)", lineno);
  if (d.size() != declared)
    throw ParseError("header declares " + std::to_string(declared) + " transitions but body has " +
                         std::to_string(d.size()),
                     1);
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  write_dataset(os, d);
  if (!os) throw ConfigError("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

}  // namespace awr
