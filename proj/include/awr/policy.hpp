#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "awr/error.hpp"
#include "awr/mlp.hpp"

namespace awr {

/// A discrete action id or a continuous action vector.
using Action = std::variant<int, Vec>;

inline bool is_discrete(const Action& a) { return std::holds_alternative<int>(a); }

inline bool actions_equal(const Action& a, const Action& b) {
  if (a.index() != b.index()) return false;
  if (is_discrete(a)) return std::get<int>(a) == std::get<int>(b);
  return std::get<Vec>(a) == std::get<Vec>(b);
}

enum class PolicyKind { gaussian, categorical };

inline std::string to_string(PolicyKind k) { return k == PolicyKind::gaussian ? "gaussian" : "categorical"; }

/// Log-softmax of one row of logits, stabilised by the row maximum.
inline Vec log_softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Samples per-row minibatch data for the weighted regression step.
/// Discrete heads read `action_ids`, Gaussian heads read rows of `actions`.
struct WeightedBatch {
  Mat states;
  std::vector<int> action_ids;
  Mat actions;
  Vec weights;

  Eigen::Index size() const { return states.rows(); }
};

struct PolicyGrads {
  ParamGrads net;
  Vec log_std;  // empty unless the standard deviation is learnable
};

struct PolicyLoss {
  double loss = 0.0;
  PolicyGrads grads;
};

/// Action distribution over MLP outputs: a diagonal Gaussian with
/// state-independent standard deviation, or a softmax over logits.
class PolicyHead {
public:
  static constexpr double kDefaultStd = 0.2;

  PolicyHead() = default;

  static PolicyHead gaussian(Mlp net, const Vec& std, bool learn_std = false) {
    if (std.size() != net.output_dim())
      throw ShapeError("policy: std has " + std::to_string(std.size()) + " entries, mean head has " +
                       std::to_string(net.output_dim()));
    if (!(std.array() > 0.0).all() || !std.allFinite())
      throw ConfigError("policy: gaussian std must be strictly positive");
    PolicyHead p;
    p.kind_ = PolicyKind::gaussian;
    p.net_ = std::move(net);
    p.log_std_ = std.array().log().matrix();
    p.learn_std_ = learn_std;
    p.log_std_momentum_ = Vec::Zero(std.size());
    return p;
  }

  static PolicyHead categorical(Mlp net) {
    if (net.output_dim() < 2) throw ConfigError("policy: categorical head needs at least 2 actions");
    PolicyHead p;
    p.kind_ = PolicyKind::categorical;
    p.net_ = std::move(net);
    return p;
  }

  PolicyKind kind() const { return kind_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  bool learn_std() const { return learn_std_; }
  Vec std_dev() const { return log_std_.array().exp().matrix(); }
  const Vec& log_std() const { return log_std_; }
  Vec& log_std() { return log_std_; }
  Vec& log_std_momentum() { return log_std_momentum_; }
  const Vec& log_std_momentum() const { return log_std_momentum_; }
  int state_dim() const { return net_.input_dim(); }
  /// Number of discrete actions, or the continuous action dimension.
  int action_dim() const { return net_.output_dim(); }

  double log_prob(const Vec& state, const Action& action) const {
    const Vec out = net_.forward_one(state);
    return log_prob_from_output(out, action);
  }

  double log_prob_from_output(const Vec& out, const Action& action) const {
    if (kind_ == PolicyKind::categorical) {
      const int* id = std::get_if<int>(&action);
      if (id == nullptr) throw ShapeError("policy: categorical head expects a discrete action");
      if (*id < 0 || *id >= out.size()) throw ShapeError("policy: discrete action out of range");
      return log_softmax(out)(*id);
    }
    const Vec* a = std::get_if<Vec>(&action);
    if (a == nullptr) throw ShapeError("policy: gaussian head expects a continuous action");
    if (a->size() != out.size())
      throw ShapeError("policy: action has " + std::to_string(a->size()) + " dims, expected " +
                       std::to_string(out.size()));
    double lp = 0.0;
    for (Eigen::Index d = 0; d < out.size(); ++d) {
      const double z = ((*a)(d) - out(d)) / std::exp(log_std_(d));
      lp += -0.5 * z * z - log_std_(d) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return lp;
  }

  template <typename Rng>
  Action sample(const Vec& state, Rng& rng) const {
    const Vec out = net_.forward_one(state);
    if (kind_ == PolicyKind::categorical) {
      const Vec probs = log_softmax(out).array().exp().matrix();
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const double u = unif(rng);
      double cum = 0.0;
      for (Eigen::Index i = 0; i < probs.size(); ++i) {
        cum += probs(i);
        if (u < cum) return static_cast<int>(i);
      }
      // Rounding left cum slightly below 1: take the last action with mass.
      for (Eigen::Index i = probs.size(); i-- > 0;)
        if (probs(i) > 0.0) return static_cast<int>(i);
      return 0;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec a(out.size());
    for (Eigen::Index d = 0; d < out.size(); ++d) a(d) = out(d) + std::exp(log_std_(d)) * normal(rng);
    return a;
  }

  /// Mean for Gaussian heads, lowest-index argmax for categorical heads.
  Action mode(const Vec& state) const {
    const Vec out = net_.forward_one(state);
    if (kind_ == PolicyKind::gaussian) return out;
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < out.size(); ++i)
      if (out(i) > out(best)) best = i;
    return static_cast<int>(best);
  }

  /// SGD with momentum on the network and, when learnable, on log-std.
  void apply_gradients(const PolicyGrads& g, double lr, double momentum) {
    if (learn_std_ && kind_ == PolicyKind::gaussian && g.log_std.size() == log_std_.size()) {
      if (!g.log_std.allFinite()) throw DivergenceError("policy: non-finite log-std gradient");
      net_.sgd_momentum_step(g.net, lr, momentum);
      log_std_momentum_ = momentum * log_std_momentum_ + g.log_std;
      log_std_ -= lr * log_std_momentum_;
      return;
    }
    net_.sgd_momentum_step(g.net, lr, momentum);
  }

private:
  PolicyKind kind_ = PolicyKind::categorical;
  Mlp net_;
  Vec log_std_;
  Vec log_std_momentum_;
  bool learn_std_ = false;
};

/// loss = -1/B sum_b w_b log pi(a_b|s_b), with gradients for the network
/// (and log-std when learnable).
inline PolicyLoss weighted_nll_grad(const PolicyHead& p, const WeightedBatch& b) {
  const Eigen::Index n = b.size();
  if (n == 0) throw ShapeError("weighted_nll: empty batch");
  if (b.weights.size() != n) throw ShapeError("weighted_nll: weight count does not match batch");
  const ForwardCache cache = p.net().forward_cached(b.states);
  const Mat& out = cache.output();
  const double inv_n = 1.0 / static_cast<double>(n);
  Mat upstream(out.rows(), out.cols());
  PolicyLoss r;
  double total = 0.0;

  if (p.kind() == PolicyKind::categorical) {
    if (static_cast<Eigen::Index>(b.action_ids.size()) != n)
      throw ShapeError("weighted_nll: action id count does not match batch");
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = b.action_ids[static_cast<std::size_t>(i)];
      if (a < 0 || a >= out.cols()) throw ShapeError("weighted_nll: discrete action out of range");
      const Vec lsm = log_softmax(out.row(i).transpose());
      const double w = b.weights(i);
      total += w * lsm(a);
      // d(-w log softmax_a)/dlogits = w (p - onehot_a)
      upstream.row(i) = (w * inv_n) * lsm.array().exp().matrix().transpose();
      upstream(i, a) -= w * inv_n;
    }
  } else {
    if (b.actions.rows() != n || b.actions.cols() != out.cols())
      throw ShapeError("weighted_nll: continuous action matrix has the wrong shape");
    const Vec inv_var = (-2.0 * p.log_std().array()).exp().matrix();
    const double log_norm = p.log_std().sum() + 0.5 * std::log(2.0 * std::numbers::pi) * out.cols();
    if (p.learn_std()) r.grads.log_std = Vec::Zero(out.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = b.weights(i);
      const Eigen::RowVectorXd diff = b.actions.row(i) - out.row(i);
      const double quad = (diff.array().square() * inv_var.transpose().array()).sum();
      total += w * (-0.5 * quad - log_norm);
      upstream.row(i) = (-w * inv_n) * (diff.array() * inv_var.transpose().array()).matrix();
      if (p.learn_std())
        r.grads.log_std += (-w * inv_n) * ((diff.array().square() * inv_var.transpose().array()) - 1.0)
                                              .matrix()
                                              .transpose();
    }
  }

  r.loss = -total * inv_n;
  if (!std::isfinite(r.loss)) throw DivergenceError("weighted_nll: non-finite loss");
  r.grads.net = p.net().backward(cache, upstream);
  return r;
}

}  // namespace awr
