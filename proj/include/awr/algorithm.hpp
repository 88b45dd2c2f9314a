#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "awr/envs.hpp"
#include "awr/error.hpp"
#include "awr/mlp.hpp"
#include "awr/policy.hpp"
#include "awr/replay.hpp"
#include "awr/returns.hpp"

namespace awr {

/// Training variants. The first five interact with an environment; the
/// offline ones treat a fixed dataset as the replay buffer.
enum class Mode { awr, rwr, awr_no_baseline, awr_on_policy, awr_monte_carlo, offline_awr, offline_bc };

inline const std::vector<std::pair<Mode, std::string>>& mode_names() {
  static const std::vector<std::pair<Mode, std::string>> names{
      {Mode::awr, "awr"},
      {Mode::rwr, "rwr"},
      {Mode::awr_no_baseline, "awr_no_baseline"},
      {Mode::awr_on_policy, "awr_on_policy"},
      {Mode::awr_monte_carlo, "awr_monte_carlo"},
      {Mode::offline_awr, "offline_awr"},
      {Mode::offline_bc, "offline_bc"}};
  return names;
}

inline std::string to_string(Mode m) {
  for (const auto& [mode, name] : mode_names())
    if (mode == m) return name;
  return "awr";
}

inline Mode mode_from_string(const std::string& s) {
  for (const auto& [mode, name] : mode_names())
    if (name == s) return mode;
  throw ConfigError("unknown mode '" + s + "'");
}

inline bool is_offline(Mode m) { return m == Mode::offline_awr || m == Mode::offline_bc; }

/// Which value network supplies the baseline in the policy-weight step:
/// the one just fitted on this iteration's returns, or the one from before.
enum class BaselineSource { current, previous };

struct AwrConfig {
  ReturnConfig returns;
  long samples_per_iter = 2000;
  long buffer_capacity = 50000;
  long minibatch = 256;
  long value_steps = 200;
  long policy_steps = 1000;
  double lr_value = 1e-4;
  double lr_policy = 5e-5;
  double momentum = 0.9;
  long max_iters = 100;
  Mode mode = Mode::awr;
  long eval_episodes = 10;
  std::uint64_t seed = 0;

  std::vector<int> hidden = Mlp::default_hidden();
  double policy_std = PolicyHead::kDefaultStd;
  bool learn_std = false;
  double policy_output_scale = 1e-3;
  double value_output_scale = 1.0;
  BaselineSource baseline = BaselineSource::current;

  // Independent ablation toggles; unset means "as implied by mode".
  std::optional<ReturnEstimator> estimator;
  std::optional<Weighting> weighting;
  std::optional<bool> on_policy;

  void validate() const {
    returns.validate();
    auto positive = [](long v, const char* name) {
      if (v < 1) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(samples_per_iter, "samples_per_iter");
    positive(buffer_capacity, "buffer_capacity");
    positive(minibatch, "minibatch");
    positive(eval_episodes, "eval_episodes");
    if (value_steps < 0) throw ConfigError("value_steps must be non-negative");
    if (policy_steps < 0) throw ConfigError("policy_steps must be non-negative");
    if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
    if (!(lr_value > 0.0) || !(lr_policy > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(policy_std > 0.0)) throw ConfigError("policy_std must be positive");
    if (!(policy_output_scale > 0.0) || !(value_output_scale > 0.0))
      throw ConfigError("output scales must be positive");
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
};

/// Concrete switches a mode expands to.
struct Variant {
  ReturnEstimator estimator = ReturnEstimator::td_lambda;
  Weighting weighting = Weighting::advantage;
  bool on_policy = false;
};

inline Variant resolve_variant(const AwrConfig& cfg) {
  Variant v;
  switch (cfg.mode) {
    case Mode::awr:
    case Mode::offline_awr: break;
    case Mode::rwr:
      v.weighting = Weighting::return_only;
      v.on_policy = true;
      break;
    case Mode::awr_no_baseline: v.weighting = Weighting::return_only; break;
    case Mode::awr_on_policy: v.on_policy = true; break;
    case Mode::awr_monte_carlo: v.estimator = ReturnEstimator::monte_carlo; break;
    case Mode::offline_bc: v.weighting = Weighting::uniform; break;
  }
  if (cfg.estimator) v.estimator = *cfg.estimator;
  if (cfg.weighting) v.weighting = *cfg.weighting;
  if (cfg.on_policy) v.on_policy = *cfg.on_policy;
  return v;
}

struct IterationRecord {
  long iteration = 0;
  long env_steps = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double mean_weight = 1.0;
  double clip_fraction = 0.0;
};

struct TrainResult {
  std::vector<IterationRecord> records;
  PolicyHead policy;
  Mlp value;
};

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
};

/// Undiscounted episode returns over full rollouts (mode() when deterministic).
template <typename Rng>
EvalResult evaluate(Env& env, const PolicyHead& pi, long episodes, Rng& rng, bool deterministic = true) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be at least 1");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  for (long e = 0; e < episodes; ++e) {
    Trajectory t = deterministic ? rollout_episode(env, [&](const Vec& s) { return pi.mode(s); })
                                 : rollout_episode(env, [&](const Vec& s) { return pi.sample(s, rng); });
    returns.push_back(t.total_reward());
  }
  EvalResult r;
  for (double x : returns) r.mean += x;
  r.mean /= static_cast<double>(returns.size());
  for (double x : returns) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(returns.size()));
  return r;
}

/// Batch value function view over an Mlp, usable by ReplayBuffer::annotate.
inline auto value_fn(const Mlp& v) {
  return [&v](const Mat& states) -> Vec { return v.forward(states).col(0); };
}

inline Mat gather_states(const ReplayBuffer& b, const std::vector<TransitionRef>& refs) {
  const auto& first = b.at(refs.front()).state;
  Mat m(static_cast<Eigen::Index>(refs.size()), first.size());
  for (std::size_t i = 0; i < refs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = b.at(refs[i]).state.transpose();
  return m;
}

/// Regresses V onto the cached returns: value_steps SGD-momentum steps on
/// uniform minibatches. Returns the loss of the final minibatch.
template <typename Rng>
double value_update(const ReplayBuffer& buffer, Mlp& value, const AwrConfig& cfg, Rng& rng) {
  double loss = 0.0;
  for (long step = 0; step < cfg.value_steps; ++step) {
    const auto refs = buffer.sample_minibatch(static_cast<std::size_t>(cfg.minibatch), rng);
    const Mat states = gather_states(buffer, refs);
    Mat targets(states.rows(), 1);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto& t = buffer.trajectory(refs[i].trajectory);
      if (t.returns.size() != t.size()) throw ContractError("value_update: buffer has not been annotated with returns");
      targets(static_cast<Eigen::Index>(i), 0) = t.returns[refs[i].step];
    }
    LossAndGrad lg = mse_loss(value, states, targets);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("value_update: non-finite loss at step " + std::to_string(step));
    value.sgd_momentum_step(lg.grads, cfg.lr_value, cfg.momentum);
    loss = lg.loss;
  }
  return loss;
}

inline WeightedBatch make_weighted_batch(const ReplayBuffer& buffer, const std::vector<TransitionRef>& refs,
                                         const PolicyHead& pi) {
  WeightedBatch b;
  b.states = gather_states(buffer, refs);
  b.weights.resize(static_cast<Eigen::Index>(refs.size()));
  if (pi.kind() == PolicyKind::categorical)
    b.action_ids.reserve(refs.size());
  else
    b.actions.resize(static_cast<Eigen::Index>(refs.size()), pi.action_dim());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = buffer.trajectory(refs[i].trajectory);
    if (t.weights.size() != t.size()) throw ContractError("policy_update: buffer has not been annotated with weights");
    const auto row = static_cast<Eigen::Index>(i);
    b.weights(row) = t.weights[refs[i].step];
    const Action& a = t.steps[refs[i].step].action;
    if (pi.kind() == PolicyKind::categorical) {
      const int* id = std::get_if<int>(&a);
      if (id == nullptr) throw ShapeError("policy_update: categorical policy needs discrete actions");
      b.action_ids.push_back(*id);
    } else {
      const Vec* v = std::get_if<Vec>(&a);
      if (v == nullptr || v->size() != pi.action_dim()) throw ShapeError("policy_update: action shape mismatch");
      b.actions.row(row) = v->transpose();
    }
  }
  return b;
}

/// Weighted maximum-likelihood regression of the policy onto buffer actions:
/// policy_steps SGD-momentum steps on uniform minibatches. Returns the loss of
/// the final minibatch.
template <typename Rng>
double policy_update(const ReplayBuffer& buffer, PolicyHead& pi, const AwrConfig& cfg, Rng& rng) {
  double loss = 0.0;
  for (long step = 0; step < cfg.policy_steps; ++step) {
    const auto refs = buffer.sample_minibatch(static_cast<std::size_t>(cfg.minibatch), rng);
    const WeightedBatch b = make_weighted_batch(buffer, refs, pi);
    PolicyLoss pl = weighted_nll_grad(pi, b);
    pi.apply_gradients(pl.grads, cfg.lr_policy, cfg.momentum);
    loss = pl.loss;
  }
  return loss;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline PolicyHead make_policy(const AwrConfig& cfg, int state_dim, const ActionSpace& space) {
  std::vector<int> dims{state_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(space.discrete ? space.n : space.dim);
  Mlp net = Mlp::init(dims, derive_seed(cfg.seed, 1), cfg.policy_output_scale);
  if (space.discrete) return PolicyHead::categorical(std::move(net));
  return PolicyHead::gaussian(std::move(net), Vec::Constant(space.dim, cfg.policy_std), cfg.learn_std);
}

inline Mlp make_value_net(const AwrConfig& cfg, int state_dim) {
  std::vector<int> dims{state_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  return Mlp::init(dims, derive_seed(cfg.seed, 2), cfg.value_output_scale);
}

using IterationHook = std::function<void(const IterationRecord&, const PolicyHead&, const Mlp&)>;

/// Stateful driver for the training loop; one call to iterate() is one outer
/// iteration: collect, fit values on returns bootstrapped with the previous
/// value function, reweight, fit the policy, evaluate.
class Trainer {
public:
  /// Online training against `env`; `eval_env` (may alias env) is used for
  /// deterministic evaluation rollouts.
  Trainer(const AwrConfig& cfg, Env& env, Env& eval_env)
      : cfg_(cfg), variant_(resolve_variant(cfg)), env_(&env), eval_env_(&eval_env), rng_(derive_seed(cfg.seed, 0)),
        buffer_(cfg.buffer_capacity) {
    cfg_.validate();
    if (is_offline(cfg_.mode)) throw ContractError("mode " + to_string(cfg_.mode) + " requires a dataset, not an environment");
    policy_ = make_policy(cfg_, env.state_dim(), env.action_space());
    value_ = make_value_net(cfg_, env.state_dim());
  }

  /// Offline training on a fixed buffer. Collection is a contract violation;
  /// `eval_env` may be null, in which case evaluation records are zero.
  Trainer(const AwrConfig& cfg, ReplayBuffer dataset, Env* eval_env)
      : cfg_(cfg), variant_(resolve_variant(cfg)), eval_env_(eval_env), rng_(derive_seed(cfg.seed, 0)),
        buffer_(std::move(dataset)) {
    cfg_.validate();
    if (!is_offline(cfg_.mode))
      throw ContractError("mode " + to_string(cfg_.mode) + " collects data; offline training only accepts offline_awr or offline_bc");
    if (buffer_.empty()) throw ConfigError("offline training requires a nonempty dataset");
    variant_.on_policy = false;
    const auto& first = buffer_.trajectory(0).steps.front();
    const int sdim = static_cast<int>(first.state.size());
    ActionSpace space;
    if (const int* id = std::get_if<int>(&first.action)) {
      int n = 2;
      for (std::size_t i = 0; i < buffer_.num_trajectories(); ++i)
        for (const auto& tr : buffer_.trajectory(i).steps) n = std::max(n, std::get<int>(tr.action) + 1);
      if (eval_env_ != nullptr && eval_env_->action_space().discrete) n = std::max(n, eval_env_->action_space().n);
      space = ActionSpace::discrete_n(n);
      (void)id;
    } else {
      const auto dim = std::get<Vec>(first.action).size();
      space = ActionSpace::box(Vec::Constant(dim, -1.0), Vec::Constant(dim, 1.0));
    }
    policy_ = make_policy(cfg_, sdim, space);
    value_ = make_value_net(cfg_, sdim);
  }

  const AwrConfig& config() const { return cfg_; }
  const Variant& variant() const { return variant_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const PolicyHead& policy() const { return policy_; }
  const Mlp& value() const { return value_; }
  long env_steps() const { return env_steps_; }
  long iteration() const { return iteration_; }
  const std::vector<IterationRecord>& records() const { return records_; }

  /// Evaluation of the untrained policy; recorded as iteration 0.
  IterationRecord initial_record() {
    IterationRecord r;
    r.iteration = 0;
    r.env_steps = env_steps_;
    fill_eval(r);
    records_.push_back(r);
    return r;
  }

  IterationRecord iterate() {
    ++iteration_;
    IterationRecord r;
    r.iteration = iteration_;
    try {
      if (env_ != nullptr) collect();
      buffer_.annotate(value_fn(value_), cfg_.returns, AnnotatePhase::returns, annotate_options());
      const Mlp previous = value_;
      r.value_loss = value_update(buffer_, value_, cfg_, rng_);
      const Mlp& baseline = cfg_.baseline == BaselineSource::current ? value_ : previous;
      const WeightStats ws = buffer_.annotate(value_fn(baseline), cfg_.returns, AnnotatePhase::weights, annotate_options());
      r.mean_weight = ws.mean_weight;
      r.clip_fraction = ws.clip_fraction;
      r.policy_loss = policy_update(buffer_, policy_, cfg_, rng_);
    } catch (const DivergenceError& e) {
      throw DivergenceError("iteration " + std::to_string(iteration_) + ": " + e.what());
    }
    r.env_steps = env_steps_;
    fill_eval(r);
    records_.push_back(r);
    return r;
  }

  TrainResult run(const IterationHook& hook = {}) {
    const IterationRecord first = initial_record();
    if (hook) hook(first, policy_, value_);
    for (long k = 0; k < cfg_.max_iters; ++k) {
      const IterationRecord r = iterate();
      if (hook) hook(r, policy_, value_);
    }
    return {records_, policy_, value_};
  }

private:
  AnnotateOptions annotate_options() const { return {variant_.estimator, variant_.weighting}; }

  void collect() {
    if (variant_.on_policy) buffer_.clear();
    long collected = 0;
    while (collected < cfg_.samples_per_iter) {
      Trajectory t = rollout_episode(*env_, [&](const Vec& s) { return policy_.sample(s, rng_); });
      collected += static_cast<long>(t.size());
      buffer_.push_trajectory(std::move(t), iteration_);
    }
    env_steps_ += collected;
  }

  void fill_eval(IterationRecord& r) {
    if (eval_env_ == nullptr) return;
    const EvalResult e = evaluate(*eval_env_, policy_, cfg_.eval_episodes, rng_, true);
    r.eval_return_mean = e.mean;
    r.eval_return_std = e.std;
  }

  AwrConfig cfg_;
  Variant variant_;
  Env* env_ = nullptr;
  Env* eval_env_ = nullptr;
  std::mt19937_64 rng_;
  ReplayBuffer buffer_;
  PolicyHead policy_;
  Mlp value_;
  long env_steps_ = 0;
  long iteration_ = 0;
  std::vector<IterationRecord> records_;
};

inline TrainResult awr_train(const AwrConfig& cfg, Env& env, Env& eval_env, const IterationHook& hook = {}) {
  Trainer t(cfg, env, eval_env);
  return t.run(hook);
}

inline TrainResult awr_train(const AwrConfig& cfg, Env& env, const IterationHook& hook = {}) {
  return awr_train(cfg, env, env, hook);
}

inline TrainResult offline_train(ReplayBuffer dataset, const AwrConfig& cfg, Env* eval_env = nullptr,
                                 const IterationHook& hook = {}) {
  Trainer t(cfg, std::move(dataset), eval_env);
  return t.run(hook);
}

}  // namespace awr
