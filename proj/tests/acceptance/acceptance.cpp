// Acceptance suite: one PASS/FAIL line per criterion.
//
//   awr_acceptance [--cache DIR] [criterion ...]
//
// With no criteria every criterion runs in order. Learning curves for the
// cart-pole experiments are shared between criteria 6, 7 and 8; when --cache
// is given they are stored there so separate invocations reuse them.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "awr/algorithm.hpp"
#include "awr/cli.hpp"
#include "awr/config.hpp"
#include "awr/dataset.hpp"
#include "awr/runtime.hpp"
#include "awr/tabular.hpp"
#include "oracles.hpp"

using namespace awr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Learning runs

struct Curve {
  std::vector<IterationRecord> records;
  bool diverged = false;

  std::vector<double> returns() const {
    std::vector<double> r;
    for (const auto& rec : records) r.push_back(rec.eval_return_mean);
    return r;
  }
  bool reaches(double threshold) const {
    return std::any_of(records.begin(), records.end(),
                       [&](const IterationRecord& r) { return r.eval_return_mean >= threshold; });
  }
  double best() const {
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& r : records) b = std::max(b, r.eval_return_mean);
    return b;
  }
};

struct RunSpec {
  std::string env;
  AwrConfig cfg;
  long step_budget = 0;                 // stop once this many env steps are used
  std::optional<double> stop_at;        // stop early once evaluation reaches this
};

class RunCache {
public:
  explicit RunCache(std::optional<fs::path> dir) : dir_(std::move(dir)) {
    if (dir_) fs::create_directories(*dir_);
  }

  Curve get(const RunSpec& spec) {
    const std::string key = key_of(spec);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (auto c = load(key)) return memo_[key] = *c;
    Curve c = train(spec);
    store(key, c);
    return memo_[key] = c;
  }

private:
  static std::string key_of(const RunSpec& s) {
    RunConfig rc;
    rc.train = s.cfg;
    rc.env = s.env;
    nlohmann::json j = to_json(rc);
    j["step_budget"] = s.step_budget;
    j["stop_at"] = s.stop_at ? nlohmann::json(*s.stop_at) : nlohmann::json(nullptr);
    return j.dump();
  }

  fs::path file_of(const std::string& key) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : key) h = (h ^ ch) * 1099511628211ULL;
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.json", static_cast<unsigned long long>(h));
    return *dir_ / name;
  }

  std::optional<Curve> load(const std::string& key) const {
    if (!dir_) return std::nullopt;
    std::ifstream is(file_of(key));
    if (!is) return std::nullopt;
    const nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || j.value("key", "") != key) return std::nullopt;
    Curve c;
    c.diverged = j.at("diverged").get<bool>();
    for (const auto& r : j.at("records")) {
      IterationRecord rec;
      rec.iteration = r.at(0).get<long>();
      rec.env_steps = r.at(1).get<long>();
      rec.eval_return_mean = r.at(2).get<double>();
      rec.eval_return_std = r.at(3).get<double>();
      rec.mean_weight = r.at(4).get<double>();
      rec.clip_fraction = r.at(5).get<double>();
      c.records.push_back(rec);
    }
    return c;
  }

  void store(const std::string& key, const Curve& c) const {
    if (!dir_) return;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : c.records)
      recs.push_back({r.iteration, r.env_steps, r.eval_return_mean, r.eval_return_std, r.mean_weight, r.clip_fraction});
    const nlohmann::json j{{"key", key}, {"diverged", c.diverged}, {"records", recs}};
    std::ofstream(file_of(key)) << j.dump() << '\n';
  }

  static Curve train(const RunSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    auto env = make_env(spec.env, derive_seed(spec.cfg.seed, 10));
    auto eval_env = make_env(spec.env, derive_seed(spec.cfg.seed, 11));
    Trainer trainer(spec.cfg, *env, *eval_env);
    Curve c;
    c.records.push_back(trainer.initial_record());
    try {
      while (trainer.env_steps() < spec.step_budget) {
        const IterationRecord r = trainer.iterate();
        if (r.env_steps > spec.step_budget) break;
        c.records.push_back(r);
        if (spec.stop_at && r.eval_return_mean >= *spec.stop_at) break;
      }
    } catch (const DivergenceError& e) {
      c.diverged = true;
      progress(std::string("diverged: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    progress(spec.env + " " + to_string(spec.cfg.mode) + " buffer=" + std::to_string(spec.cfg.buffer_capacity) +
             " seed=" + std::to_string(spec.cfg.seed) + ": best " + fmt("%.1f", c.best()) + " final " +
             fmt("%.1f", c.records.back().eval_return_mean) + " after " + std::to_string(c.records.back().env_steps) +
             " steps (" + fmt("%.0f", secs) + " s)");
    return c;
  }

  std::optional<fs::path> dir_;
  std::map<std::string, Curve> memo_;
};

constexpr int kSeeds = 5;
constexpr long kCartpoleBudget = 200000;
constexpr long kPendulumBudget = 300000;

AwrConfig default_config(std::uint64_t seed) {
  AwrConfig cfg;
  cfg.seed = seed;
  return cfg;
}

// Per-environment settings for the continuous task; mirrored in configs/pendulum.json.
AwrConfig pendulum_config(std::uint64_t seed) {
  AwrConfig cfg = default_config(seed);
  cfg.returns.beta = 0.5;
  cfg.lr_policy = 1e-4;
  cfg.policy_std = 0.4;
  return cfg;
}

RunSpec cartpole_run(Mode mode, long buffer, std::uint64_t seed) {
  AwrConfig cfg = default_config(seed);
  cfg.mode = mode;
  cfg.buffer_capacity = buffer;
  return {"cartpole", cfg, kCartpoleBudget, std::nullopt};
}

// Seed-averaged curve over the iterations every seed completed.
std::vector<double> mean_curve(const std::vector<Curve>& runs) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : runs) n = std::min(n, c.records.size());
  std::vector<double> m(n, 0.0);
  for (const auto& c : runs)
    for (std::size_t i = 0; i < n; ++i) m[i] += c.records[i].eval_return_mean / static_cast<double>(runs.size());
  return m;
}

double final_return(const std::vector<double>& curve, std::size_t window = 10) {
  const std::size_t k = std::min(window, curve.size());
  return mean(std::vector<double>(curve.end() - static_cast<long>(k), curve.end()));
}

// ---------------------------------------------------------------------------
// Criteria

Outcome gradient_correctness(RunCache&) {
  constexpr int kGradSeeds = 100;
  constexpr double kTol = 1e-4;
  constexpr double kNllStep = 1e-4;
  struct Case {
    std::string name;
    std::vector<int> dims;
    std::function<GradientCheckReport(const Mlp&, std::mt19937_64&)> check;
  };
  auto random_mat = [](std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  // Wide networks get a smaller batch to keep the sweep affordable.
  auto rows_for = [](const Mlp& net) { return net.layer_dims().size() > 2 && net.layer_dims()[1] >= 128 ? 2 : 6; };
  auto batch_for = [&](std::mt19937_64& rng, const Mlp& net, bool discrete) {
    const int rows = rows_for(net);
    WeightedBatch b;
    b.states = random_mat(rng, rows, net.input_dim());
    b.weights.resize(rows);
    for (int i = 0; i < rows; ++i) b.weights(i) = std::uniform_real_distribution<double>(1e-3, 20.0)(rng);
    if (discrete) {
      for (int i = 0; i < rows; ++i)
        b.action_ids.push_back(std::uniform_int_distribution<int>(0, net.output_dim() - 1)(rng));
    } else {
      b.actions = random_mat(rng, rows, net.output_dim());
    }
    return b;
  };

  const auto value_mse = [&](const Mlp& net, std::mt19937_64& rng) {
    const Mat x = random_mat(rng, rows_for(net), net.input_dim());
    const Mat y = 5.0 * random_mat(rng, rows_for(net), 1);
    // The loss is exactly quadratic in each parameter between ReLU kinks.
    GradientCheckOptions opt;
    opt.step = 1e-3;
    opt.kink_probe = &x;
    return gradient_check(net, [&](const Mlp& m) { return mse_loss(m, x, y); }, kTol, opt);
  };
  const auto categorical_nll = [&](const Mlp& net, std::mt19937_64& rng) {
    const WeightedBatch b = batch_for(rng, net, true);
    GradientCheckOptions opt;
    opt.step = kNllStep;
    opt.kink_probe = &b.states;
    return gradient_check(
        net,
        [&](const Mlp& m) {
          const PolicyLoss l = weighted_nll_grad(PolicyHead::categorical(m), b);
          return LossAndGrad{l.loss, l.grads.net};
        },
        kTol, opt);
  };
  const auto gaussian_nll = [&](bool learn_std) {
    return [&, learn_std](const Mlp& net, std::mt19937_64& rng) {
      const WeightedBatch b = batch_for(rng, net, false);
      Vec sd(net.output_dim());
      for (Eigen::Index i = 0; i < sd.size(); ++i) sd(i) = std::uniform_real_distribution<double>(0.1, 1.5)(rng);
      GradientCheckOptions opt;
      opt.step = kNllStep;
      opt.kink_probe = &b.states;
      GradientCheckReport rep = gradient_check(
          net,
          [&](const Mlp& m) {
            const PolicyLoss l = weighted_nll_grad(PolicyHead::gaussian(m, sd, learn_std), b);
            return LossAndGrad{l.loss, l.grads.net};
          },
          kTol, opt);
      if (learn_std) {
        const PolicyHead p = PolicyHead::gaussian(net, sd, true);
        const Vec analytic = weighted_nll_grad(p, b).grads.log_std;
        for (Eigen::Index d = 0; d < sd.size(); ++d) {
          const double h = kNllStep;
          PolicyHead plus = p, minus = p;
          plus.log_std()(d) += h;
          minus.log_std()(d) -= h;
          const double fd = (weighted_nll_grad(plus, b).loss - weighted_nll_grad(minus, b).loss) / (2.0 * h);
          const double rel = std::abs(analytic(d) - fd) / std::max({std::abs(analytic(d)), std::abs(fd), 1e-6});
          ++rep.checked;
          if (!(rel < kTol)) ++rep.flagged;
          rep.max_rel_error = std::max(rep.max_rel_error, rel);
        }
      }
      return rep;
    };
  };

  const std::vector<Case> cases{
      {"value-mse small", {3, 16, 8, 1}, value_mse},
      {"value-mse default", {4, 128, 64, 1}, value_mse},
      {"categorical-nll small", {5, 12, 4}, categorical_nll},
      {"categorical-nll default", {4, 128, 64, 2}, categorical_nll},
      {"gaussian-nll fixed std", {3, 16, 8, 2}, gaussian_nll(false)},
      {"gaussian-nll default", {3, 128, 64, 1}, gaussian_nll(false)},
      {"gaussian-nll learned std", {3, 10, 3}, gaussian_nll(true)},
      {"linear categorical", {25, 4}, categorical_nll},
  };

  bool ok = true;
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  std::string failures;
  for (const auto& c : cases) {
    for (int seed = 0; seed < kGradSeeds; ++seed) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + c.dims.size());
      const Mlp net = Mlp::init(c.dims, static_cast<std::uint64_t>(seed), 0.5);
      const GradientCheckReport rep = c.check(net, rng);
      checked += rep.checked;
      skipped += rep.skipped_kinks;
      worst = std::max(worst, rep.max_rel_error);
      if (!rep.passed()) {
        ok = false;
        failures += " " + c.name + "@seed" + std::to_string(seed);
      }
    }
  }
  return {ok, std::to_string(cases.size()) + " cases x " + std::to_string(kGradSeeds) + " seeds, " +
                  std::to_string(checked) + " params checked (" + std::to_string(skipped) +
                  " skipped at ReLU kinks), max rel err " + fmt("%.2e", worst) + " (< 1e-4)" + failures};
}

Outcome return_estimators(RunCache&) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_mc = 0.0, worst_td0 = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 1 + rng() % 200;
    const double gamma = std::uniform_real_distribution<double>(0.5, 0.999)(rng);
    std::vector<double> r(n), next_v(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = 3.0 * g(rng);
      next_v[i] = 10.0 * g(rng);
    }
    const bool terminal = true;
    const auto mc = monte_carlo_returns(r, terminal, gamma);
    const auto td1 = td_lambda_returns(r, next_v, terminal, gamma, 1.0);
    const auto td0 = td_lambda_returns(r, next_v, terminal, gamma, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      worst_mc = std::max(worst_mc, std::abs(td1[i] - mc[i]) / std::max(1.0, std::abs(mc[i])));
      const double target = r[i] + (i + 1 == n ? 0.0 : gamma * next_v[i]);
      worst_td0 = std::max(worst_td0, std::abs(td0[i] - target));
    }
  }
  return {worst_mc <= 1e-12 && worst_td0 <= 1e-12,
          "1000 trajectories: |TD(1) - MC| max " + fmt("%.1e", worst_mc) + " (<= 1e-12), |TD(0) - one-step| max " +
              fmt("%.1e", worst_td0)};
}

Outcome closed_form_bridge(RunCache&) {
  std::mt19937_64 rng(77);
  constexpr int kMdps = 24;
  double worst_kl = 0.0;
  int converged = 0;
  for (int k = 0; k < kMdps; ++k) {
    const int S = 2 + static_cast<int>(rng() % 9);
    const int A = 2 + static_cast<int>(rng() % 3);
    const auto m = oracle::random_mdp(S, A, 0.9, rng);
    const auto mu = oracle::random_policy(S, A, rng);
    const double beta = std::array<double, 3>{0.2, 0.5, 1.0}[static_cast<std::size_t>(k % 3)];
    const tabular::TabularPolicy target = tabular::closed_form_awr(m, mu, beta);
    const Mat adv = tabular::policy_evaluation(m, mu).A;

    // Exhaustive data: every (s, a) pair once, carrying its sampling
    // probability under mu times the exponentiated advantage.
    WeightedBatch batch;
    batch.states = Mat::Zero(S * A, S);
    batch.weights.resize(S * A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const int row = s * A + a;
        batch.states(row, s) = 1.0;
        batch.action_ids.push_back(a);
        batch.weights(row) = mu.probs(s, a) * std::exp(adv(s, a) / beta);
      }
    PolicyHead pi = PolicyHead::categorical(Mlp::from_params({Mat::Zero(S, A)}, {Vec::Zero(A)}));
    double max_state_weight = 0.0;
    for (int s = 0; s < S; ++s) max_state_weight = std::max(max_state_weight, batch.weights.segment(s * A, A).sum());
    const double lr = 0.5 * static_cast<double>(S * A) / max_state_weight;

    auto learned = [&] {
      tabular::TabularPolicy p{Mat(S, A)};
      for (int s = 0; s < S; ++s) p.probs.row(s) = log_softmax(pi.net().forward_one(Vec::Unit(S, s))).array().exp().matrix().transpose();
      return p;
    };
    double kl = std::numeric_limits<double>::infinity();
    for (int step = 1; step <= 200000; ++step) {
      pi.apply_gradients(weighted_nll_grad(pi, batch).grads, lr, 0.9);
      if (step % 1000 == 0) {
        kl = tabular::row_kl(target, learned()).maxCoeff();
        if (kl <= 1e-6) break;
      }
    }
    worst_kl = std::max(worst_kl, kl);
    converged += kl <= 1e-3;
  }
  return {converged == kMdps, std::to_string(converged) + "/" + std::to_string(kMdps) +
                                  " random MDPs within row-wise KL 1e-3 of the closed form (worst " + fmt("%.2e", worst_kl) +
                                  ")"};
}

Outcome improvement_identity(RunCache&) {
  std::mt19937_64 rng(4242);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int S = 2 + static_cast<int>(rng() % 9), A = 2 + static_cast<int>(rng() % 3);
    const auto m = oracle::random_mdp(S, A, 0.95, rng);
    const auto pi = oracle::random_policy(S, A, rng), mu = oracle::random_policy(S, A, rng);
    const double gap = tabular::expected_improvement(m, pi, mu) -
                       (tabular::expected_return(m, pi) - tabular::expected_return(m, mu));
    worst = std::max(worst, std::abs(gap));
  }
  bool sweep_ok = true;
  double worst_ratio = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto m = oracle::random_mdp(6, 3, 0.9, rng);
    const auto mu = oracle::random_policy(6, 3, rng);
    const Mat delta = oracle::random_policy(6, 3, rng).probs - mu.probs;
    std::vector<double> ratios;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
      const tabular::TabularPolicy pi{mu.probs + eps * delta};
      const double gap = tabular::expected_improvement(m, pi, mu) - tabular::surrogate_improvement(m, pi, mu);
      ratios.push_back(std::abs(gap) / (eps * eps));
    }
    const double bound = 10.0 * std::max(ratios[0], 1e-6);
    for (double r : ratios) {
      worst_ratio = std::max(worst_ratio, r);
      sweep_ok = sweep_ok && std::isfinite(r) && r <= bound;
    }
  }
  return {worst <= 1e-9 && sweep_ok, "100 MDPs: |eta - (J(pi) - J(mu))| max " + fmt("%.1e", worst) +
                                         " (<= 1e-9); eta-hat gap/eps^2 bounded over eps in {1e-1,1e-2,1e-3}: " +
                                         (sweep_ok ? "yes" : "no") + " (max ratio " + fmt("%.3g", worst_ratio) + ")"};
}

Outcome discrete_learning(RunCache&) {
  const std::map<std::string, int> horizon{{"chain5", 50}, {"gridworld", 100}};
  std::string detail;
  bool ok = true;
  for (const auto& [name, h] : horizon) {
    const auto m = tabular_model(name, 0.99);
    const double j_star = tabular::finite_horizon_return(m, tabular::value_iteration(m, 1e-12).policy, h);
    int hits = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      AwrConfig cfg = default_config(static_cast<std::uint64_t>(seed));
      cfg.samples_per_iter = 500;
      cfg.buffer_capacity = 5000;
      auto env = make_env(name, derive_seed(cfg.seed, 10));
      auto eval_env = make_env(name, derive_seed(cfg.seed, 11));
      Trainer t(cfg, *env, *eval_env);
      t.initial_record();
      bool hit = false;
      long it = 0;
      for (; it < 50 && !hit; ++it) hit = t.iterate().eval_return_mean >= 0.99 * j_star;
      progress(name + " seed " + std::to_string(seed) + (hit ? " reached at iteration " : " missed after ") +
               std::to_string(it));
      hits += hit;
    }
    ok = ok && hits == kSeeds;
    detail += name + " J*=" + fmt("%.4f", j_star) + ": " + std::to_string(hits) + "/5 seeds >= 0.99 J* within 50 iters; ";
  }
  return {ok, detail};
}

Outcome control_learning(RunCache& cache) {
  int cart_hits = 0, pend_hits = 0;
  std::string cart_best, pend_best;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Curve c = cache.get(cartpole_run(Mode::awr, 50000, static_cast<std::uint64_t>(seed)));
    cart_hits += c.reaches(190.0);
    cart_best += " " + fmt("%.0f", c.best());
  }
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Curve c = cache.get({"pendulum", pendulum_config(static_cast<std::uint64_t>(seed)), kPendulumBudget, -300.0});
    pend_hits += c.reaches(-300.0);
    pend_best += " " + fmt("%.0f", c.best());
  }
  return {cart_hits >= 4 && pend_hits >= 3,
          "cartpole " + std::to_string(cart_hits) + "/5 seeds >= 190 within 200k steps (need 4; best" + cart_best +
              "); pendulum " + std::to_string(pend_hits) + "/5 seeds >= -300 within 300k steps (need 3; best" +
              pend_best + ")"};
}

std::vector<Curve> cartpole_seeds(RunCache& cache, Mode mode, long buffer) {
  std::vector<Curve> runs;
  for (int seed = 0; seed < kSeeds; ++seed) runs.push_back(cache.get(cartpole_run(mode, buffer, static_cast<std::uint64_t>(seed))));
  return runs;
}

Outcome ablation_ordering(RunCache& cache) {
  const double awr = final_return(mean_curve(cartpole_seeds(cache, Mode::awr, 50000)));
  const double rwr = final_return(mean_curve(cartpole_seeds(cache, Mode::rwr, 50000)));
  const std::vector<std::pair<std::string, Mode>> middle{
      {"no-baseline", Mode::awr_no_baseline}, {"on-policy", Mode::awr_on_policy}, {"no-TD(lambda)", Mode::awr_monte_carlo}};
  bool ok = awr - rwr >= 50.0;
  std::string detail = "AWR " + fmt("%.1f", awr);
  for (const auto& [name, mode] : middle) {
    const double v = final_return(mean_curve(cartpole_seeds(cache, mode, 50000)));
    ok = ok && awr >= v && v >= rwr;
    detail += ", " + name + " " + fmt("%.1f", v);
  }
  detail += ", RWR " + fmt("%.1f", rwr) + "; AWR - RWR = " + fmt("%.1f", awr - rwr) +
            " (>= 50); final = mean of last 10 iterations of the 5-seed mean curve";
  return {ok, detail};
}

Outcome buffer_stability(RunCache& cache) {
  auto across_seed_variance = [](const std::vector<Curve>& runs) {
    std::size_t n = std::numeric_limits<std::size_t>::max();
    for (const auto& c : runs) n = std::min(n, c.records.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> xs;
      for (const auto& c : runs) xs.push_back(c.records[i].eval_return_mean);
      const double m = mean(xs);
      double v = 0.0;
      for (double x : xs) v += (x - m) * (x - m);
      total += v / static_cast<double>(xs.size() - 1);
    }
    return total / static_cast<double>(n);
  };
  std::string detail;
  std::map<long, double> variance;
  for (long buffer : {2000L, 10000L, 50000L}) {
    variance[buffer] = across_seed_variance(cartpole_seeds(cache, Mode::awr, buffer));
    detail += "var(" + std::to_string(buffer / 1000) + "k) " + fmt("%.1f", variance[buffer]) + ", ";
  }
  int collapsed = 0;
  double worst_fraction = std::numeric_limits<double>::infinity();
  for (const Curve& c : cartpole_seeds(cache, Mode::awr, 50000)) {
    const auto r = c.returns();
    const auto peak = std::max_element(r.begin(), r.end());
    const double after = *std::min_element(peak, r.end());
    worst_fraction = std::min(worst_fraction, after / *peak);
    collapsed += after < 0.5 * *peak;
  }
  detail += "50k seeds dropping below 50% of peak after reaching it: " + std::to_string(collapsed) +
            " (lowest post-peak/peak " + fmt("%.2f", worst_fraction) + ")";
  return {variance[50000] <= variance[2000] && collapsed == 0, detail};
}

Outcome offline_learning(RunCache&) {
  int wins = 0;
  std::string detail;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto useed = static_cast<std::uint64_t>(seed);
    auto env = make_env("gridworld", derive_seed(useed, 10));
    const auto space = env->action_space();
    const auto vi = tabular::value_iteration(tabular_model("gridworld", 0.99), 1e-10);
    std::mt19937_64 rng(derive_seed(useed, 20));
    const Dataset demo = collect_dataset(
        *env,
        [&](const Vec& s) -> Action {
          if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.3)
            return std::uniform_int_distribution<int>(0, space.n - 1)(rng);
          Eigen::Index a = 0;
          vi.policy.probs.row(cli::one_hot_index(s)).maxCoeff(&a);
          return static_cast<int>(a);
        },
        50000, "oracle epsilon-greedy(0.3)");

    auto final_eval = [&](Mode mode) {
      AwrConfig cfg = default_config(useed);
      cfg.mode = mode;
      cfg.max_iters = 20;
      auto eval_env = make_env("gridworld", derive_seed(useed, 11));
      const TrainResult r = offline_train(to_buffer(demo), cfg, eval_env.get());
      std::mt19937_64 eval_rng(derive_seed(useed, 12));
      return evaluate(*eval_env, r.policy, 100, eval_rng, true).mean;
    };
    const double awr = final_eval(Mode::offline_awr), bc = final_eval(Mode::offline_bc);
    const double demo_return = demo.mean_episode_return();
    const bool win = awr >= demo_return && awr >= bc;
    wins += win;
    detail += "seed " + std::to_string(seed) + ": AWR " + fmt("%.3f", awr) + " demo " + fmt("%.3f", demo_return) +
              " BC " + fmt("%.3f", bc) + (win ? "" : " (miss)") + "; ";
    progress("offline seed " + std::to_string(seed) + " done");
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds with AWR >= demo and >= BC (need 4). " + detail};
}

Outcome determinism(RunCache&) {
  const fs::path dir = fs::temp_directory_path() / "awr_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "cfg.json") << R"({"env": "cartpole", "max_iters": 4, "samples_per_iter": 500,
      "value_steps": 50, "policy_steps": 100, "log_verbosity": "quiet", "seed": 9})";
  }
  auto run_cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "awr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  const int a = run_cli({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "a").string()});
  const int b = run_cli({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "b").string()});
  const std::string ca = slurp(dir / "a" / "curve.csv"), cb = slurp(dir / "b" / "curve.csv");
  const bool curves_equal = a == 0 && b == 0 && !ca.empty() && ca == cb;

  bool datasets_ok = true;
  std::size_t total = 0;
  for (const std::string name : {"cartpole", "pendulum", "gridworld"}) {
    const int rc = run_cli({"collect", "--policy", "random", "--env", name, "--n", "10000", "--seed", "3", "--out",
                            (dir / (name + ".jsonl")).string()});
    const Dataset d = load_dataset((dir / (name + ".jsonl")).string());
    save_dataset(d, (dir / (name + "_again.jsonl")).string());
    const Dataset again = load_dataset((dir / (name + "_again.jsonl")).string());
    total += d.size();
    datasets_ok = datasets_ok && rc == 0 && d.size() >= 10000 && again == d &&
                  slurp(dir / (name + ".jsonl")) == slurp(dir / (name + "_again.jsonl"));
  }
  fs::remove_all(dir);
  return {curves_equal && datasets_ok,
          std::string("curve.csv byte-identical across two runs: ") + (curves_equal ? "yes" : "no") +
              "; 10k-transition datasets (cartpole, pendulum, gridworld; " + std::to_string(total) +
              " transitions) lossless through save/load/save: " + (datasets_ok ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)(RunCache&);
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_correctness},
      {2, "return estimators", return_estimators},
      {3, "closed-form projection", closed_form_bridge},
      {4, "improvement identity", improvement_identity},
      {5, "chain/gridworld learning", discrete_learning},
      {6, "cartpole/pendulum learning", control_learning},
      {7, "ablation ordering", ablation_ordering},
      {8, "buffer-size stability", buffer_stability},
      {9, "offline learning", offline_learning},
      {10, "determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  flush_subnormals();
  CLI::App app{"AWR acceptance suite"};
  std::string cache_dir;
  std::vector<int> selected;
  app.add_option("--cache", cache_dir, "Directory for shared learning-curve results");
  app.add_option("criteria", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (const auto& c : criteria()) selected.push_back(c.id);

  RunCache cache(cache_dir.empty() ? std::nullopt : std::optional<fs::path>(cache_dir));
  int failed = 0;
  for (int id : selected) {
    const Criterion& c = criteria()[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(cache);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
