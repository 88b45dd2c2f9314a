#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "awr/error.hpp"
#include "awr/mlp.hpp"
#include "awr/policy.hpp"

namespace awr {

enum class Termination { terminal, truncated };

struct Transition {
  Vec state;
  Action action;
  double reward = 0.0;
  Vec next_state;
};

/// One whole episode. `returns` and `weights` are per-step caches filled by
/// replay annotation; they are empty until then.
struct Trajectory {
  std::vector<Transition> steps;
  Termination end = Termination::terminal;
  std::vector<double> returns;
  std::vector<double> weights;

  std::size_t size() const { return steps.size(); }
  bool terminal() const { return end == Termination::terminal; }

  double total_reward() const {
    double s = 0.0;
    for (const auto& t : steps) s += t.reward;
    return s;
  }

  void validate() const {
    if (steps.empty()) throw ShapeError("trajectory: must contain at least one transition");
    const auto sdim = steps.front().state.size();
    const auto kind = steps.front().action.index();
    for (const auto& t : steps) {
      if (t.state.size() != sdim || t.next_state.size() != sdim)
        throw ShapeError("trajectory: inconsistent state dimensions");
      if (t.action.index() != kind) throw ShapeError("trajectory: mixed discrete and continuous actions");
    }
  }
};

struct ReturnConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double beta = 0.05;
  double omega_max = 20.0;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("returns.gamma must lie in [0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("returns.lambda must lie in [0, 1]");
    if (!(beta > 0.0)) throw ConfigError("returns.beta must be positive");
    if (!(omega_max > 0.0)) throw ConfigError("returns.omega_max must be positive");
  }
};

/// R_i = sum_{k>=i} gamma^{k-i} r_k, plus gamma^{T-i} * tail_value when the
/// episode was truncated. The tail is ignored for terminal episodes.
inline std::vector<double> monte_carlo_returns(std::span<const double> rewards, bool terminal, double gamma,
                                               double tail_value = 0.0) {
  std::vector<double> out(rewards.size());
  double g = terminal ? 0.0 : tail_value;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    g = rewards[i] + gamma * g;
    out[i] = g;
  }
  return out;
}

inline std::vector<double> rewards_of(const Trajectory& t) {
  std::vector<double> r;
  r.reserve(t.size());
  for (const auto& s : t.steps) r.push_back(s.reward);
  return r;
}

inline std::vector<double> monte_carlo_returns(const Trajectory& t, double gamma, double tail_value = 0.0) {
  const auto r = rewards_of(t);
  return monte_carlo_returns(r, t.terminal(), gamma, tail_value);
}

/// Monte Carlo returns bootstrapping a truncated tail with V(last next_state).
template <typename ValueFn>
  requires std::invocable<ValueFn, const Vec&>
std::vector<double> monte_carlo_returns(const Trajectory& t, ValueFn&& value, double gamma) {
  const double tail = t.terminal() ? 0.0 : value(t.steps.back().next_state);
  return monte_carlo_returns(t, gamma, tail);
}

/// Backward TD(lambda) recursion
///   G_i = r_i + gamma * ((1 - lambda) V(s_{i+1}) + lambda G_{i+1}),
/// ending in G_last = r_last + gamma * V_boot (V_boot = 0 for terminal
/// episodes). next_values[i] holds V(next_state_i); the last entry is only
/// read for truncated episodes.
inline std::vector<double> td_lambda_returns(std::span<const double> rewards, std::span<const double> next_values,
                                             bool terminal, double gamma, double lambda) {
  if (rewards.size() != next_values.size()) throw ShapeError("td_lambda: rewards and next values differ in length");
  const std::size_t n = rewards.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  double g = rewards[n - 1] + gamma * (terminal ? 0.0 : next_values[n - 1]);
  out[n - 1] = g;
  for (std::size_t i = n - 1; i-- > 0;) {
    g = rewards[i] + gamma * ((1.0 - lambda) * next_values[i] + lambda * g);
    out[i] = g;
  }
  return out;
}

template <typename ValueFn>
  requires std::invocable<ValueFn, const Vec&>
std::vector<double> td_lambda_returns(const Trajectory& t, ValueFn&& value, double gamma, double lambda) {
  std::vector<double> next;
  next.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool last = i + 1 == t.size();
    next.push_back(last && t.terminal() ? 0.0 : value(t.steps[i].next_state));
  }
  const auto r = rewards_of(t);
  return td_lambda_returns(r, next, t.terminal(), gamma, lambda);
}

inline std::vector<double> advantages(std::span<const double> returns, std::span<const double> values) {
  if (returns.size() != values.size())
    throw ShapeError("advantages: " + std::to_string(returns.size()) + " returns vs " +
                     std::to_string(values.size()) + " values");
  std::vector<double> a(returns.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = returns[i] - values[i];
  return a;
}

/// omega = min(exp(A / beta), omega_max). Overflow saturates to omega_max;
/// underflow is floored at the smallest normal double so omega stays positive.
inline double advantage_weight(double advantage, double beta, double omega_max) {
  const double w = std::exp(advantage / beta);
  return std::clamp(w, std::numeric_limits<double>::min(), omega_max);
}

inline std::vector<double> advantage_weights(std::span<const double> adv, double beta, double omega_max) {
  if (!(beta > 0.0)) throw ConfigError("advantage_weights: beta must be positive");
  std::vector<double> w(adv.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = advantage_weight(adv[i], beta, omega_max);
  return w;
}

}  // namespace awr
