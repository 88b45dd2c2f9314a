#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "awr/error.hpp"
#include "awr/returns.hpp"

namespace awr {

enum class ReturnEstimator { td_lambda, monte_carlo };

/// How the policy-regression weight of a transition is formed.
///   advantage: min(exp((R - V(s)) / beta), omega_max)   (AWR)
///   return:    min(exp(R / beta), omega_max)            (RWR weights, no baseline)
///   uniform:   1                                        (behavioural cloning)
enum class Weighting { advantage, return_only, uniform };

enum class AnnotatePhase { returns, weights };

struct AnnotateOptions {
  ReturnEstimator estimator = ReturnEstimator::td_lambda;
  Weighting weighting = Weighting::advantage;
};

struct WeightStats {
  double mean_weight = 0.0;
  double clip_fraction = 0.0;
};

struct TransitionRef {
  std::size_t trajectory = 0;
  std::size_t step = 0;
  bool operator==(const TransitionRef&) const = default;
};

template <typename F>
concept BatchValueFn = requires(F f, const Mat& states) {
  { f(states) } -> std::convertible_to<Vec>;
};

template <typename F>
concept StateValueFn = requires(F f, const Vec& s) {
  { f(s) } -> std::convertible_to<double>;
};

/// FIFO store of whole trajectories, capacity counted in transitions.
/// Uniform sampling over the stored transitions is how the mixture of past
/// policies is consumed by the value and policy regressions.
class ReplayBuffer {
public:
  static constexpr std::size_t kDefaultCapacity = 50000;

  explicit ReplayBuffer(long long capacity = static_cast<long long>(kDefaultCapacity)) {
    if (capacity < 1) throw ConfigError("replay: capacity must be at least 1, got " + std::to_string(capacity));
    capacity_ = static_cast<std::size_t>(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return total_; }
  bool empty() const { return total_ == 0; }
  std::size_t num_trajectories() const { return trajs_.size(); }
  const Trajectory& trajectory(std::size_t i) const { return trajs_.at(i); }
  Trajectory& trajectory(std::size_t i) { return trajs_.at(i); }
  long iteration_tag(std::size_t i) const { return tags_.at(i); }

  /// Appends t, then evicts whole trajectories oldest-first until the buffer
  /// is within capacity. Returns the number of evicted transitions.
  std::size_t push_trajectory(Trajectory t, long iteration = 0) {
    t.validate();
    if (t.size() > capacity_)
      throw ContractError("replay: trajectory of " + std::to_string(t.size()) +
                          " transitions exceeds buffer capacity " + std::to_string(capacity_));
    total_ += t.size();
    trajs_.push_back(std::move(t));
    tags_.push_back(iteration);
    std::size_t evicted = 0;
    while (total_ > capacity_) {
      evicted += trajs_.front().size();
      total_ -= trajs_.front().size();
      trajs_.pop_front();
      tags_.pop_front();
    }
    rebuild_index();
    return evicted;
  }

  void clear() {
    trajs_.clear();
    tags_.clear();
    total_ = 0;
    rebuild_index();
  }

  /// Flat transition index in [0, size()) to (trajectory, step).
  TransitionRef locate(std::size_t flat) const {
    if (flat >= total_) throw ShapeError("replay: transition index out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
    const auto traj = static_cast<std::size_t>(std::distance(offsets_.begin(), it)) - 1;
    return {traj, flat - offsets_[traj]};
  }

  const Transition& at(const TransitionRef& r) const { return trajs_.at(r.trajectory).steps.at(r.step); }

  /// n draws with replacement, uniform over all stored transitions.
  template <typename Rng>
  std::vector<TransitionRef> sample_minibatch(std::size_t n, Rng& rng) const {
    if (empty()) throw ContractError("replay: cannot sample from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, total_ - 1);
    std::vector<TransitionRef> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(locate(pick(rng)));
    return out;
  }

  /// phase=returns caches per-transition return estimates computed with
  /// `value` as the bootstrap; phase=weights caches regression weights from
  /// those returns and `value` as the baseline. Returns weight statistics
  /// (zeros for the returns phase).
  template <typename ValueFn>
  WeightStats annotate(ValueFn&& value, const ReturnConfig& cfg, AnnotatePhase phase, AnnotateOptions opt = {}) {
    cfg.validate();
    WeightStats stats;
    std::size_t clipped = 0;
    double weight_sum = 0.0;
    for (auto& t : trajs_) {
      if (phase == AnnotatePhase::returns) {
        const bool need_values = opt.estimator == ReturnEstimator::td_lambda || !t.terminal();
        std::vector<double> next(t.size(), 0.0);
        if (need_values) next = evaluate_next_states(value, t);
        const auto r = rewards_of(t);
        t.returns = opt.estimator == ReturnEstimator::td_lambda
                        ? td_lambda_returns(r, next, t.terminal(), cfg.gamma, cfg.lambda)
                        : monte_carlo_returns(r, t.terminal(), cfg.gamma, next.back());
        continue;
      }
      if (t.returns.size() != t.size())
        throw ContractError("replay: weights requested before returns were annotated");
      std::vector<double> adv;
      switch (opt.weighting) {
        case Weighting::advantage:
          adv = advantages(t.returns, evaluate_states(value, t));
          break;
        case Weighting::return_only:
          adv = t.returns;
          break;
        case Weighting::uniform:
          adv.assign(t.size(), 0.0);
          break;
      }
      t.weights.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (opt.weighting == Weighting::uniform) {
          t.weights[i] = 1.0;
        } else {
          if (std::exp(adv[i] / cfg.beta) > cfg.omega_max) ++clipped;
          t.weights[i] = advantage_weight(adv[i], cfg.beta, cfg.omega_max);
        }
        weight_sum += t.weights[i];
      }
    }
    if (phase == AnnotatePhase::weights && total_ > 0) {
      stats.mean_weight = weight_sum / static_cast<double>(total_);
      stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total_);
    }
    return stats;
  }

private:
  template <typename ValueFn>
  static std::vector<double> apply_value(ValueFn& value, const std::vector<const Vec*>& states) {
    std::vector<double> out(states.size());
    if constexpr (BatchValueFn<ValueFn&>) {
      if (states.empty()) return out;
      Mat m(static_cast<Eigen::Index>(states.size()), states.front()->size());
      for (std::size_t i = 0; i < states.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = states[i]->transpose();
      const Vec v = value(m);
      for (std::size_t i = 0; i < states.size(); ++i) out[i] = v(static_cast<Eigen::Index>(i));
    } else {
      static_assert(StateValueFn<ValueFn&>, "value function must map a state or a batch of states to values");
      for (std::size_t i = 0; i < states.size(); ++i) out[i] = value(*states[i]);
    }
    return out;
  }

  template <typename ValueFn>
  static std::vector<double> evaluate_next_states(ValueFn& value, const Trajectory& t) {
    std::vector<const Vec*> s;
    s.reserve(t.size());
    for (const auto& tr : t.steps) s.push_back(&tr.next_state);
    auto v = apply_value(value, s);
    if (t.terminal()) v.back() = 0.0;
    return v;
  }

  template <typename ValueFn>
  static std::vector<double> evaluate_states(ValueFn& value, const Trajectory& t) {
    std::vector<const Vec*> s;
    s.reserve(t.size());
    for (const auto& tr : t.steps) s.push_back(&tr.state);
    return apply_value(value, s);
  }

  void rebuild_index() {
    offsets_.clear();
    std::size_t acc = 0;
    for (const auto& t : trajs_) {
      offsets_.push_back(acc);
      acc += t.size();
    }
  }

  std::size_t capacity_ = kDefaultCapacity;
  std::size_t total_ = 0;
  std::deque<Trajectory> trajs_;
  std::deque<long> tags_;
  std::vector<std::size_t> offsets_;
};

}  // namespace awr
