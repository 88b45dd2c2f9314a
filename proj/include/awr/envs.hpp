#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "awr/error.hpp"
#include "awr/policy.hpp"
#include "awr/returns.hpp"
#include "awr/tabular.hpp"

namespace awr {

enum class StepStatus { running, terminal, truncated };

inline std::string to_string(StepStatus s) {
  switch (s) {
    case StepStatus::running: return "running";
    case StepStatus::terminal: return "terminal";
    case StepStatus::truncated: return "truncated";
  }
  return "running";
}

struct ActionSpace {
  bool discrete = true;
  int n = 0;    // number of discrete actions
  int dim = 0;  // continuous action dimension
  Vec low, high;

  static ActionSpace discrete_n(int n) { return {true, n, 0, {}, {}}; }
  static ActionSpace box(const Vec& low, const Vec& high) {
    return {false, 0, static_cast<int>(low.size()), low, high};
  }
};

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  StepStatus status = StepStatus::running;
};

/// Episodic environment with a uniform reset/step interface. The base class
/// owns the rng, enforces the step cap (truncation) and rejects stepping a
/// finished episode.
class Env {
public:
  Env(std::string name, std::uint64_t seed, int max_steps) : name_(std::move(name)), rng_(seed), max_steps_(max_steps) {}
  virtual ~Env() = default;
  Env(const Env&) = delete;
  Env& operator=(const Env&) = delete;

  const std::string& name() const { return name_; }
  int max_episode_steps() const { return max_steps_; }
  virtual int state_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual nlohmann::json describe() const = 0;

  Vec reset() {
    steps_ = 0;
    finished_ = false;
    started_ = true;
    return do_reset(rng_);
  }

  StepResult step(const Action& action) {
    if (!started_) throw ContractError(name_ + ": step called before reset");
    if (finished_) throw ContractError(name_ + ": step called on a finished episode");
    const ActionSpace space = action_space();
    Action applied = action;
    if (space.discrete) {
      const int* id = std::get_if<int>(&action);
      if (id == nullptr || *id < 0 || *id >= space.n)
        throw ContractError(name_ + ": action outside the discrete action space");
    } else {
      const Vec* a = std::get_if<Vec>(&action);
      if (a == nullptr || a->size() != space.dim) throw ContractError(name_ + ": continuous action has wrong shape");
      applied = Vec(a->cwiseMax(space.low).cwiseMin(space.high));
    }
    StepResult r = do_step(applied, rng_);
    ++steps_;
    if (r.status == StepStatus::running && steps_ >= max_steps_) r.status = StepStatus::truncated;
    finished_ = r.status != StepStatus::running;
    return r;
  }

  int steps_taken() const { return steps_; }

protected:
  virtual Vec do_reset(std::mt19937_64& rng) = 0;
  virtual StepResult do_step(const Action& action, std::mt19937_64& rng) = 0;

private:
  std::string name_;
  std::mt19937_64 rng_;
  int max_steps_;
  int steps_ = 0;
  bool finished_ = false;
  bool started_ = false;
};

inline Vec one_hot(int i, int n) {
  Vec v = Vec::Zero(n);
  v(i) = 1.0;
  return v;
}

/// Five states in a row, start at the left end. Action 0 moves left (bounded
/// by the wall), action 1 moves right. Entering the right end pays 1 and ends
/// the episode.
class Chain5 final : public Env {
public:
  static constexpr int kStates = 5;
  explicit Chain5(std::uint64_t seed) : Env("chain5", seed, 50) {}
  int state_dim() const override { return kStates; }
  ActionSpace action_space() const override { return ActionSpace::discrete_n(2); }
  nlohmann::json describe() const override {
    return {{"name", "chain5"}, {"states", kStates}, {"actions", 2}, {"start", 0}, {"goal", kStates - 1},
            {"goal_reward", 1.0}, {"max_episode_steps", max_episode_steps()}, {"observation", "one-hot"}};
  }

protected:
  Vec do_reset(std::mt19937_64&) override {
    pos_ = 0;
    return one_hot(pos_, kStates);
  }
  StepResult do_step(const Action& a, std::mt19937_64&) override {
    pos_ = std::get<int>(a) == 1 ? pos_ + 1 : std::max(0, pos_ - 1);
    const bool goal = pos_ == kStates - 1;
    return {one_hot(pos_, kStates), goal ? 1.0 : 0.0, goal ? StepStatus::terminal : StepStatus::running};
  }

private:
  int pos_ = 0;
};

/// 5x5 grid, start at (0,0), goal at (4,4) paying 1 on entry. Actions
/// 0=up(+y) 1=right(+x) 2=down(-y) 3=left(-x); moves into walls stay put.
/// With probability `slip` the action is replaced by a uniformly random one.
class GridWorld final : public Env {
public:
  static constexpr int kSide = 5;
  static constexpr double kSlip = 0.1;
  explicit GridWorld(std::uint64_t seed) : Env("gridworld", seed, 100) {}
  int state_dim() const override { return kSide * kSide; }
  ActionSpace action_space() const override { return ActionSpace::discrete_n(4); }
  nlohmann::json describe() const override {
    return {{"name", "gridworld"}, {"side", kSide}, {"actions", 4}, {"start", {0, 0}}, {"goal", {kSide - 1, kSide - 1}},
            {"goal_reward", 1.0}, {"step_cost", 0.0}, {"slip", kSlip},
            {"max_episode_steps", max_episode_steps()}, {"observation", "one-hot of y*5+x"}};
  }

  static int move(int cell, int action) {
    int x = cell % kSide, y = cell / kSide;
    switch (action) {
      case 0: y = std::min(kSide - 1, y + 1); break;
      case 1: x = std::min(kSide - 1, x + 1); break;
      case 2: y = std::max(0, y - 1); break;
      default: x = std::max(0, x - 1); break;
    }
    return y * kSide + x;
  }

protected:
  Vec do_reset(std::mt19937_64&) override {
    cell_ = 0;
    return one_hot(cell_, kSide * kSide);
  }
  StepResult do_step(const Action& a, std::mt19937_64& rng) override {
    int action = std::get<int>(a);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) < kSlip) action = std::uniform_int_distribution<int>(0, 3)(rng);
    cell_ = move(cell_, action);
    const bool goal = cell_ == kSide * kSide - 1;
    return {one_hot(cell_, kSide * kSide), goal ? 1.0 : 0.0, goal ? StepStatus::terminal : StepStatus::running};
  }

private:
  int cell_ = 0;
};

/// Classic cart-pole balance. State (x, x_dot, theta, theta_dot); action 0
/// pushes left, 1 pushes right; reward 1 per step including the failing one.
/// Integrated with semi-implicit Euler at dt = 0.02.
class CartPole final : public Env {
public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfPoleLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kDt = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
  static constexpr double kXLimit = 2.4;
  static constexpr double kResetRange = 0.05;

  explicit CartPole(std::uint64_t seed) : Env("cartpole", seed, 200) {}
  int state_dim() const override { return 4; }
  ActionSpace action_space() const override { return ActionSpace::discrete_n(2); }
  nlohmann::json describe() const override {
    return {{"name", "cartpole"}, {"gravity", kGravity}, {"cart_mass", kCartMass}, {"pole_mass", kPoleMass},
            {"half_pole_length", kHalfPoleLength}, {"force", kForce}, {"dt", kDt},
            {"integrator", "semi-implicit euler"}, {"theta_limit_rad", kThetaLimit}, {"x_limit", kXLimit},
            {"reset_range", kResetRange}, {"max_episode_steps", max_episode_steps()}};
  }

  const Vec& physical_state() const { return s_; }
  void set_physical_state(const Vec& s) { s_ = s; }

protected:
  Vec do_reset(std::mt19937_64& rng) override {
    std::uniform_real_distribution<double> unif(-kResetRange, kResetRange);
    s_ = Vec(4);
    for (int i = 0; i < 4; ++i) s_(i) = unif(rng);
    return s_;
  }
  StepResult do_step(const Action& a, std::mt19937_64&) override {
    const double force = std::get<int>(a) == 1 ? kForce : -kForce;
    double x = s_(0), x_dot = s_(1), theta = s_(2), theta_dot = s_(3);
    const double total_mass = kCartMass + kPoleMass;
    const double pole_ml = kPoleMass * kHalfPoleLength;
    const double c = std::cos(theta), s = std::sin(theta);
    const double temp = (force + pole_ml * theta_dot * theta_dot * s) / total_mass;
    const double theta_acc =
        (kGravity * s - c * temp) / (kHalfPoleLength * (4.0 / 3.0 - kPoleMass * c * c / total_mass));
    const double x_acc = temp - pole_ml * theta_acc * c / total_mass;
    x_dot += kDt * x_acc;
    x += kDt * x_dot;
    theta_dot += kDt * theta_acc;
    theta += kDt * theta_dot;
    s_ << x, x_dot, theta, theta_dot;
    const bool fail = x < -kXLimit || x > kXLimit || theta < -kThetaLimit || theta > kThetaLimit;
    return {s_, 1.0, fail ? StepStatus::terminal : StepStatus::running};
  }

private:
  Vec s_ = Vec::Zero(4);
};

/// Torque-limited pendulum swing-up. Observation (cos th, sin th, th_dot),
/// torque in [-2, 2], cost th^2 + 0.1 th_dot^2 + 0.001 u^2 with th wrapped to
/// [-pi, pi). Semi-implicit Euler at dt = 0.05; never terminates.
class Pendulum final : public Env {
public:
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  explicit Pendulum(std::uint64_t seed) : Env("pendulum", seed, 200) {}
  int state_dim() const override { return 3; }
  ActionSpace action_space() const override {
    return ActionSpace::box(Vec::Constant(1, -kMaxTorque), Vec::Constant(1, kMaxTorque));
  }
  nlohmann::json describe() const override {
    return {{"name", "pendulum"}, {"max_speed", kMaxSpeed}, {"max_torque", kMaxTorque}, {"dt", kDt},
            {"gravity", kGravity}, {"mass", kMass}, {"length", kLength}, {"integrator", "semi-implicit euler"},
            {"cost", "th^2 + 0.1*th_dot^2 + 0.001*u^2"}, {"max_episode_steps", max_episode_steps()}};
  }

  static double wrap_angle(double th) {
    return std::fmod(std::fmod(th + std::numbers::pi, 2.0 * std::numbers::pi) + 2.0 * std::numbers::pi,
                     2.0 * std::numbers::pi) -
           std::numbers::pi;
  }

protected:
  Vec do_reset(std::mt19937_64& rng) override {
    th_ = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
    th_dot_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    return observe();
  }
  StepResult do_step(const Action& a, std::mt19937_64&) override {
    const double u = std::get<Vec>(a)(0);
    const double wrapped = wrap_angle(th_);
    const double cost = wrapped * wrapped + 0.1 * th_dot_ * th_dot_ + 0.001 * u * u;
    th_dot_ += (-3.0 * kGravity / (2.0 * kLength) * std::sin(th_ + std::numbers::pi) +
                3.0 / (kMass * kLength * kLength) * u) *
               kDt;
    th_dot_ = std::clamp(th_dot_, -kMaxSpeed, kMaxSpeed);
    th_ += th_dot_ * kDt;
    return {observe(), -cost, StepStatus::running};
  }

private:
  Vec observe() const {
    Vec o(3);
    o << std::cos(th_), std::sin(th_), th_dot_;
    return o;
  }
  double th_ = 0.0;
  double th_dot_ = 0.0;
};

inline const std::vector<std::string>& env_names() {
  static const std::vector<std::string> names{"chain5", "gridworld", "cartpole", "pendulum"};
  return names;
}

inline std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed) {
  if (name == "chain5") return std::make_unique<Chain5>(seed);
  if (name == "gridworld") return std::make_unique<GridWorld>(seed);
  if (name == "cartpole") return std::make_unique<CartPole>(seed);
  if (name == "pendulum") return std::make_unique<Pendulum>(seed);
  throw ConfigError("unknown environment '" + name + "' (expected chain5, gridworld, cartpole or pendulum)");
}

/// Exact tabular model of a discrete-state environment. The goal is an
/// absorbing zero-reward state, so discounted values match episodic returns.
inline tabular::TabularMdp tabular_model(const std::string& name, double gamma) {
  tabular::TabularMdp m;
  m.gamma = gamma;
  if (name == "chain5") {
    const int n = Chain5::kStates;
    m.n_states = n;
    m.n_actions = 2;
    m.P.assign(2, Mat::Zero(n, n));
    m.R = Mat::Zero(n, 2);
    for (int s = 0; s < n; ++s) {
      if (s == n - 1) {
        m.P[0](s, s) = m.P[1](s, s) = 1.0;
        continue;
      }
      m.P[0](s, std::max(0, s - 1)) = 1.0;
      m.P[1](s, s + 1) = 1.0;
      if (s + 1 == n - 1) m.R(s, 1) = 1.0;
    }
  } else if (name == "gridworld") {
    const int n = GridWorld::kSide * GridWorld::kSide;
    const int goal = n - 1;
    m.n_states = n;
    m.n_actions = 4;
    m.P.assign(4, Mat::Zero(n, n));
    m.R = Mat::Zero(n, 4);
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 4; ++a) {
        if (s == goal) {
          m.P[static_cast<std::size_t>(a)](s, s) = 1.0;
          continue;
        }
        m.P[static_cast<std::size_t>(a)](s, GridWorld::move(s, a)) += 1.0 - GridWorld::kSlip;
        for (int b = 0; b < 4; ++b) m.P[static_cast<std::size_t>(a)](s, GridWorld::move(s, b)) += GridWorld::kSlip / 4.0;
        m.R(s, a) = m.P[static_cast<std::size_t>(a)](s, goal);
      }
  } else {
    throw ConfigError("no tabular model for environment '" + name + "'");
  }
  m.p0 = one_hot(0, m.n_states);
  m.validate();
  return m;
}

/// Runs one episode from reset, choosing actions with `act(state)`.
template <typename ActFn>
Trajectory rollout_episode(Env& env, ActFn&& act) {
  Trajectory t;
  Vec s = env.reset();
  for (;;) {
    Action a = act(static_cast<const Vec&>(s));
    StepResult r = env.step(a);
    t.steps.push_back({s, std::move(a), r.reward, r.next_state});
    if (r.status != StepStatus::running) {
      t.end = r.status == StepStatus::terminal ? Termination::terminal : Termination::truncated;
      return t;
    }
    s = std::move(r.next_state);
  }
}

}  // namespace awr
