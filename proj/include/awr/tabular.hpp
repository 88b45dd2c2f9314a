#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "awr/error.hpp"
#include "awr/mlp.hpp"

// Exact finite-MDP machinery. Everything here is a dense direct computation
// and serves as ground truth for the sample-based stack.
namespace awr::tabular {

inline constexpr int kMaxStates = 1000;

/// P[a](s, s') = P(s' | s, a); R(s, a) = r(s, a).
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Mat> P;
  Mat R;
  double gamma = 0.9;
  Vec p0;

  void validate() const {
    if (n_states < 1 || n_actions < 1) throw ConfigError("mdp: need at least one state and one action");
    if (n_states > kMaxStates) throw ConfigError("mdp: oracle is limited to " + std::to_string(kMaxStates) + " states");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("mdp: gamma must lie in [0, 1)");
    if (static_cast<int>(P.size()) != n_actions) throw ShapeError("mdp: need one transition matrix per action");
    for (const auto& Pa : P) {
      if (Pa.rows() != n_states || Pa.cols() != n_states) throw ShapeError("mdp: transition matrix must be S x S");
      if ((Pa.array() < 0.0).any()) throw ConfigError("mdp: negative transition probability");
      if (((Pa.rowwise().sum().array() - 1.0).abs() > 1e-12).any())
        throw ConfigError("mdp: transition rows must sum to 1");
    }
    if (R.rows() != n_states || R.cols() != n_actions) throw ShapeError("mdp: reward matrix must be S x A");
    if (p0.size() != n_states) throw ShapeError("mdp: initial distribution must have S entries");
    if ((p0.array() < 0.0).any() || std::abs(p0.sum() - 1.0) > 1e-12)
      throw ConfigError("mdp: initial distribution must be a probability vector");
  }
};

/// Row-stochastic pi(a|s), stored S x A.
struct TabularPolicy {
  Mat probs;

  static TabularPolicy uniform(int n_states, int n_actions) {
    return {Mat::Constant(n_states, n_actions, 1.0 / n_actions)};
  }

  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions) {
    TabularPolicy p{Mat::Zero(static_cast<Eigen::Index>(actions.size()), n_actions)};
    for (std::size_t s = 0; s < actions.size(); ++s) p.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    return p;
  }

  void validate(const TabularMdp& m) const {
    if (probs.rows() != m.n_states || probs.cols() != m.n_actions) throw ShapeError("policy: must be S x A");
    if ((probs.array() < 0.0).any()) throw ConfigError("policy: negative probability");
    if (((probs.rowwise().sum().array() - 1.0).abs() > 1e-12).any())
      throw ConfigError("policy: rows must sum to 1");
  }
};

struct PolicyValues {
  Vec V;
  Mat Q;
  Mat A;
};

inline Mat policy_transitions(const TabularMdp& m, const TabularPolicy& pi) {
  Mat Ppi = Mat::Zero(m.n_states, m.n_states);
  for (int a = 0; a < m.n_actions; ++a) Ppi += pi.probs.col(a).asDiagonal() * m.P[static_cast<std::size_t>(a)];
  return Ppi;
}

inline Vec policy_rewards(const TabularMdp& m, const TabularPolicy& pi) {
  return (m.R.array() * pi.probs.array()).rowwise().sum().matrix();
}

inline Mat q_from_v(const TabularMdp& m, const Vec& V) {
  Mat Q(m.n_states, m.n_actions);
  for (int a = 0; a < m.n_actions; ++a) Q.col(a) = m.R.col(a) + m.gamma * m.P[static_cast<std::size_t>(a)] * V;
  return Q;
}

/// Solves (I - gamma P_pi) V = r_pi directly, then Q = r + gamma P V and A = Q - V.
inline PolicyValues policy_evaluation(const TabularMdp& m, const TabularPolicy& pi) {
  m.validate();
  pi.validate(m);
  const Mat I = Mat::Identity(m.n_states, m.n_states);
  PolicyValues out;
  out.V = (I - m.gamma * policy_transitions(m, pi)).fullPivLu().solve(policy_rewards(m, pi));
  out.Q = q_from_v(m, out.V);
  out.A = out.Q.colwise() - out.V;
  return out;
}

/// J(pi) = sum_s p0(s) V^pi(s).
inline double expected_return(const TabularMdp& m, const TabularPolicy& pi) {
  return m.p0.dot(policy_evaluation(m, pi).V);
}

/// Greedy policy w.r.t. Q, ties broken towards the lowest action index.
inline TabularPolicy greedy(const Mat& Q) {
  std::vector<int> best(static_cast<std::size_t>(Q.rows()), 0);
  for (Eigen::Index s = 0; s < Q.rows(); ++s)
    for (Eigen::Index a = 1; a < Q.cols(); ++a)
      if (Q(s, a) > Q(s, best[static_cast<std::size_t>(s)])) best[static_cast<std::size_t>(s)] = static_cast<int>(a);
  return TabularPolicy::deterministic(best, static_cast<int>(Q.cols()));
}

struct ValueIterationResult {
  Vec V;
  TabularPolicy policy;
  double residual = 0.0;
  int iterations = 0;
};

inline ValueIterationResult value_iteration(const TabularMdp& m, double tol, int max_iters = 1'000'000) {
  m.validate();
  if (!(tol > 0.0)) throw ConfigError("value_iteration: tol must be positive");
  Vec V = Vec::Zero(m.n_states);
  ValueIterationResult r;
  for (r.iterations = 0; r.iterations < max_iters; ++r.iterations) {
    const Vec next = q_from_v(m, V).rowwise().maxCoeff();
    const double change = (next - V).cwiseAbs().maxCoeff();
    V = next;
    if (change * m.gamma <= tol) break;
  }
  const Mat Q = q_from_v(m, V);
  r.residual = (Q.rowwise().maxCoeff() - V).cwiseAbs().maxCoeff();
  r.V = V;
  r.policy = greedy(Q);
  return r;
}

/// d_pi = (I - gamma P_pi^T)^{-1} p0: unnormalised, sums to 1 / (1 - gamma).
inline Vec discounted_state_distribution(const TabularMdp& m, const TabularPolicy& pi) {
  m.validate();
  pi.validate(m);
  const Mat I = Mat::Identity(m.n_states, m.n_states);
  return (I - m.gamma * policy_transitions(m, pi).transpose()).fullPivLu().solve(m.p0);
}

/// eta(pi) = sum_s d_pi(s) sum_a pi(a|s) A^mu(s, a).
inline double expected_improvement(const TabularMdp& m, const TabularPolicy& pi, const TabularPolicy& mu) {
  const Mat A = policy_evaluation(m, mu).A;
  const Vec d = discounted_state_distribution(m, pi);
  return d.dot((pi.probs.array() * A.array()).rowwise().sum().matrix());
}

/// eta-hat(pi): the same expectation under the sampling policy's state distribution d_mu.
inline double surrogate_improvement(const TabularMdp& m, const TabularPolicy& pi, const TabularPolicy& mu) {
  pi.validate(m);
  const Mat A = policy_evaluation(m, mu).A;
  const Vec d = discounted_state_distribution(m, mu);
  return d.dot((pi.probs.array() * A.array()).rowwise().sum().matrix());
}

/// pi*(a|s) = mu(a|s) exp(A(s,a) / beta) / Z(s) for an arbitrary advantage
/// table (any per-state shift of A cancels in Z). Computed in log space.
inline TabularPolicy exponentiated_reweighting(const TabularPolicy& mu, const Mat& A, double beta) {
  if (!(beta > 0.0)) throw ConfigError("closed_form_awr: beta must be positive");
  if (A.rows() != mu.probs.rows() || A.cols() != mu.probs.cols()) throw ShapeError("closed_form_awr: shape mismatch");
  TabularPolicy out{Mat::Zero(mu.probs.rows(), mu.probs.cols())};
  for (Eigen::Index s = 0; s < A.rows(); ++s) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < A.cols(); ++a)
      if (mu.probs(s, a) > 0.0) m = std::max(m, std::log(mu.probs(s, a)) + A(s, a) / beta);
    double log_z = 0.0;
    for (Eigen::Index a = 0; a < A.cols(); ++a)
      if (mu.probs(s, a) > 0.0) log_z += std::exp(std::log(mu.probs(s, a)) + A(s, a) / beta - m);
    log_z = m + std::log(log_z);
    for (Eigen::Index a = 0; a < A.cols(); ++a)
      if (mu.probs(s, a) > 0.0) out.probs(s, a) = std::exp(std::log(mu.probs(s, a)) + A(s, a) / beta - log_z);
    out.probs.row(s) /= out.probs.row(s).sum();
  }
  return out;
}

/// Closed-form solution of the KL-regularised improvement problem, using the
/// exact advantage Q^mu - V^mu in the exponent.
inline TabularPolicy closed_form_awr(const TabularMdp& m, const TabularPolicy& mu, double beta) {
  return exponentiated_reweighting(mu, policy_evaluation(m, mu).A, beta);
}

/// KL(p(.|s) || q(.|s)) per state.
inline Vec row_kl(const TabularPolicy& p, const TabularPolicy& q) {
  Vec kl = Vec::Zero(p.probs.rows());
  for (Eigen::Index s = 0; s < p.probs.rows(); ++s)
    for (Eigen::Index a = 0; a < p.probs.cols(); ++a)
      if (p.probs(s, a) > 0.0) kl(s) += p.probs(s, a) * (std::log(p.probs(s, a)) - std::log(q.probs(s, a)));
  return kl;
}

/// Undiscounted expected return over a fixed horizon by backward induction.
/// Absorbing zero-reward states model episode termination.
inline double finite_horizon_return(const TabularMdp& m, const TabularPolicy& pi, int horizon) {
  const Mat Ppi = policy_transitions(m, pi);
  const Vec rpi = policy_rewards(m, pi);
  Vec V = Vec::Zero(m.n_states);
  for (int h = 0; h < horizon; ++h) V = rpi + Ppi * V;
  return m.p0.dot(V);
}

// ---------------------------------------------------------------------------
// JSON fixture format: {"gamma", "p0":[S], "R":[S][A], "P":[A][S][S]}

inline nlohmann::json to_json(const TabularMdp& m) {
  nlohmann::json j;
  j["gamma"] = m.gamma;
  j["p0"] = std::vector<double>(m.p0.data(), m.p0.data() + m.p0.size());
  auto rows = [](const Mat& M) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(M.rows()));
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index k = 0; k < M.cols(); ++k) out[static_cast<std::size_t>(i)].push_back(M(i, k));
    return out;
  };
  j["R"] = rows(m.R);
  j["P"] = nlohmann::json::array();
  for (const auto& Pa : m.P) j["P"].push_back(rows(Pa));
  return j;
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    TabularMdp m;
    m.gamma = j.at("gamma").get<double>();
    const auto p0 = j.at("p0").get<std::vector<double>>();
    m.n_states = static_cast<int>(p0.size());
    m.p0 = Eigen::Map<const Vec>(p0.data(), static_cast<Eigen::Index>(p0.size()));
    const auto R = j.at("R").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(R.size()) != m.n_states || R.empty()) throw ShapeError("mdp json: R must have S rows");
    m.n_actions = static_cast<int>(R.front().size());
    m.R.resize(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) {
      if (static_cast<int>(R[static_cast<std::size_t>(s)].size()) != m.n_actions) throw ShapeError("mdp json: ragged R");
      for (int a = 0; a < m.n_actions; ++a) m.R(s, a) = R[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    }
    for (const auto& Pa : j.at("P")) {
      const auto rows = Pa.get<std::vector<std::vector<double>>>();
      Mat M(m.n_states, m.n_states);
      if (static_cast<int>(rows.size()) != m.n_states) throw ShapeError("mdp json: P[a] must have S rows");
      for (int s = 0; s < m.n_states; ++s) {
        if (static_cast<int>(rows[static_cast<std::size_t>(s)].size()) != m.n_states)
          throw ShapeError("mdp json: P[a] rows must have S entries");
        for (int t = 0; t < m.n_states; ++t) M(s, t) = rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
      }
      m.P.push_back(std::move(M));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mdp json: ") + e.what(), 0);
  }
}

}  // namespace awr::tabular
