#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "awr/algorithm.hpp"
#include "awr/checkpoint.hpp"
#include "awr/config.hpp"
#include "awr/dataset.hpp"
#include "awr/envs.hpp"
#include "awr/error.hpp"
#include "awr/tabular.hpp"

namespace awr::cli {

// Exit codes are part of the interface.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDivergence = 3;
inline constexpr int kContract = 4;

inline const char* kCurveHeader =
    "iter,env_steps,eval_return_mean,eval_return_std,value_loss,policy_loss,mean_weight,clip_fraction";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string curve_row(const IterationRecord& r) {
  std::ostringstream os;
  os << r.iteration << ',' << r.env_steps << ',' << format_double(r.eval_return_mean) << ','
     << format_double(r.eval_return_std) << ',' << format_double(r.value_loss) << ','
     << format_double(r.policy_loss) << ',' << format_double(r.mean_weight) << ','
     << format_double(r.clip_fraction);
  return os.str();
}

/// {"iteration", "env", "policy": {...}, "value": {...}}
inline nlohmann::json checkpoint_json(long iteration, const std::string& env, const PolicyHead& pi, const Mlp& v) {
  return {{"iteration", iteration}, {"env", env}, {"policy", to_json(pi)}, {"value", to_json(v)}};
}

/// Accepts either a full training checkpoint or a bare policy object.
inline PolicyHead load_policy_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }
  if (j.is_object() && j.contains("policy")) return policy_from_json(j.at("policy"));
  return policy_from_json(j);
}

/// Runs the training loop for a resolved config and owns the run directory:
/// config.json echo, curve.csv (one row per trained iteration) and
/// checkpoints/ (atomic writes every checkpoint_interval iterations plus
/// latest.json after every iteration).
class RunWriter {
public:
  RunWriter(const RunConfig& rc, std::ostream& log) : rc_(rc), log_(log), dir_(rc.output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "checkpoints", ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    write_file_atomic(dir_ / "config.json", to_json(rc_).dump(2) + "\n");
    curve_ = std::string(kCurveHeader) + "\n";
    write_file_atomic(dir_ / "curve.csv", curve_);
  }

  IterationHook hook() {
    return [this](const IterationRecord& r, const PolicyHead& pi, const Mlp& v) {
      if (r.iteration > 0) {
        curve_ += curve_row(r) + "\n";
        write_file_atomic(dir_ / "curve.csv", curve_);
      }
      const std::string ckpt = checkpoint_json(r.iteration, rc_.env, pi, v).dump();
      write_file_atomic(dir_ / "checkpoints" / "latest.json", ckpt);
      if (r.iteration > 0 && (r.iteration % rc_.checkpoint_interval == 0 || r.iteration == rc_.train.max_iters)) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%06ld.json", r.iteration);
        write_file_atomic(dir_ / "checkpoints" / name, ckpt);
      }
      if (rc_.log_verbosity != "quiet")
        log_ << "iter " << r.iteration << " steps " << r.env_steps << " return " << r.eval_return_mean << " +/- "
             << r.eval_return_std << " value_loss " << r.value_loss << " policy_loss " << r.policy_loss
             << " mean_w " << r.mean_weight << " clip " << r.clip_fraction << '\n';
    };
  }

private:
  const RunConfig& rc_;
  std::ostream& log_;
  std::filesystem::path dir_;
  std::string curve_;
};

/// Maps library exceptions to the documented exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const ContractError& e) {
    err << "error: contract violation: " << e.what() << '\n';
    return kContract;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig rc = load_run_config(config_path, overrides);
    if (!out_dir.empty()) rc.output_dir = out_dir;
    if (is_offline(rc.train.mode))
      throw ContractError("mode " + to_string(rc.train.mode) + " needs a dataset; use the offline command");
    auto env = make_env(rc.env, derive_seed(rc.train.seed, 10));
    auto eval_env = make_env(rc.env, derive_seed(rc.train.seed, 11));
    RunWriter writer(rc, err);
    const TrainResult res = awr_train(rc.train, *env, *eval_env, writer.hook());
    const auto& last = res.records.back();
    out << nlohmann::json{{"output_dir", rc.output_dir},
                          {"iterations", last.iteration},
                          {"env_steps", last.env_steps},
                          {"eval_return_mean", last.eval_return_mean}}
               .dump()
        << '\n';
    return kOk;
  });
}

inline int cmd_offline(const std::string& config_path, const std::string& dataset_path,
                       const std::vector<std::string>& overrides, const std::string& out_dir, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    RunConfig rc = load_run_config(config_path, overrides);
    if (!out_dir.empty()) rc.output_dir = out_dir;
    if (!std::filesystem::exists(dataset_path)) throw ConfigError("dataset '" + dataset_path + "' does not exist");
    const Dataset d = load_dataset(dataset_path);
    if (d.env != rc.env) throw ConfigError("dataset was collected on '" + d.env + "' but config names '" + rc.env + "'");
    auto eval_env = make_env(rc.env, derive_seed(rc.train.seed, 11));
    RunWriter writer(rc, err);
    const TrainResult res = offline_train(to_buffer(d), rc.train, eval_env.get(), writer.hook());
    const auto& last = res.records.back();
    out << nlohmann::json{{"output_dir", rc.output_dir},
                          {"iterations", last.iteration},
                          {"dataset_size", d.size()},
                          {"eval_return_mean", last.eval_return_mean}}
               .dump()
        << '\n';
    return kOk;
  });
}

inline int cmd_eval(const std::string& checkpoint, const std::string& env_name, long episodes, std::uint64_t seed,
                    std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (episodes < 1) throw ConfigError("--episodes must be at least 1");
    const PolicyHead pi = load_policy_checkpoint(checkpoint);
    auto env = make_env(env_name, seed);
    if (env->state_dim() != pi.state_dim()) throw ConfigError("checkpoint does not match environment '" + env_name + "'");
    std::mt19937_64 rng(seed);
    const EvalResult r = evaluate(*env, pi, episodes, rng, true);
    out << nlohmann::json{{"env", env_name}, {"episodes", episodes}, {"mean", r.mean}, {"std", r.std}}.dump() << '\n';
    return kOk;
  });
}

/// Index of the hot entry of a one-hot observation.
inline int one_hot_index(const Vec& s) {
  Eigen::Index i = 0;
  s.maxCoeff(&i);
  return static_cast<int>(i);
}

inline int cmd_collect(const std::string& policy_spec, const std::string& env_name, long n, double epsilon,
                       const std::string& out_path, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (n < 1) throw ConfigError("--n must be at least 1");
    auto env = make_env(env_name, seed);
    std::mt19937_64 rng(derive_seed(seed, 20));
    Dataset d;
    const auto space = env->action_space();
    if (policy_spec == "random") {
      d = collect_dataset(
          *env,
          [&](const Vec&) -> Action {
            if (space.discrete) return std::uniform_int_distribution<int>(0, space.n - 1)(rng);
            Vec a(space.dim);
            for (int k = 0; k < space.dim; ++k)
              a(k) = std::uniform_real_distribution<double>(space.low(k), space.high(k))(rng);
            return a;
          },
          static_cast<std::size_t>(n), "random");
    } else if (policy_spec == "oracle") {
      if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("--epsilon must lie in [0, 1]");
      const auto mdp = tabular_model(env_name, 0.99);
      const auto vi = tabular::value_iteration(mdp, 1e-10);
      d = collect_dataset(
          *env,
          [&](const Vec& s) -> Action {
            if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
              return std::uniform_int_distribution<int>(0, space.n - 1)(rng);
            Eigen::Index a = 0;
            vi.policy.probs.row(one_hot_index(s)).maxCoeff(&a);
            return static_cast<int>(a);
          },
          static_cast<std::size_t>(n), "oracle epsilon-greedy(" + format_double(epsilon) + ")");
    } else {
      const PolicyHead pi = load_policy_checkpoint(policy_spec);
      if (pi.state_dim() != env->state_dim()) throw ConfigError("checkpoint does not match environment");
      d = collect_dataset(*env, pi, static_cast<std::size_t>(n), rng, false, "checkpoint " + policy_spec);
    }
    std::ostringstream os;
    write_dataset(os, d);
    try {
      write_file_atomic(out_path, os.str());
    } catch (const std::filesystem::filesystem_error& e) {
      throw ConfigError(e.what());
    }
    out << nlohmann::json{{"path", out_path}, {"size", d.size()}, {"episodes", d.episodes.size()},
                          {"mean_episode_return", d.mean_episode_return()}}
               .dump()
        << '\n';
    return kOk;
  });
}

struct CurveTable {
  std::vector<std::vector<double>> rows;
};

inline CurveTable read_curve(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("no curve.csv in '" + path.parent_path().string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != kCurveHeader) throw ParseError("curve.csv: unexpected header", 1);
  CurveTable t;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size()) throw ParseError("curve.csv row " + std::to_string(lineno - 1) + ": bad number '" + cell + "'", lineno);
      row.push_back(v);
    }
    if (row.size() != 8)
      throw ParseError("curve.csv row " + std::to_string(lineno - 1) + ": expected 8 columns, got " +
                           std::to_string(row.size()),
                       lineno);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline int cmd_export(const std::string& run_dir, const std::string& format, const std::string& out_path,
                      std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (format != "csv" && format != "json") throw ConfigError("--format must be csv or json");
    const CurveTable t = read_curve(std::filesystem::path(run_dir) / "curve.csv");
    std::ostringstream os;
    if (format == "csv") {
      os << kCurveHeader << '\n';
      for (const auto& r : t.rows) {
        IterationRecord rec{static_cast<long>(r[0]), static_cast<long>(r[1]), r[2], r[3], r[4], r[5], r[6], r[7]};
        os << curve_row(rec) << '\n';
      }
    } else {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : t.rows)
        arr.push_back({{"iter", static_cast<long>(r[0])}, {"env_steps", static_cast<long>(r[1])},
                       {"eval_return_mean", r[2]}, {"eval_return_std", r[3]}, {"value_loss", r[4]},
                       {"policy_loss", r[5]}, {"mean_weight", r[6]}, {"clip_fraction", r[7]}});
      os << arr.dump(2) << '\n';
    }
    if (out_path.empty())
      out << os.str();
    else
      write_file_atomic(out_path, os.str());
    return kOk;
  });
}

inline int cmd_describe(const std::string& env_name, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    out << make_env(env_name, 0)->describe().dump(2) << '\n';
    return kOk;
  });
}

/// Parses argv and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Advantage-weighted regression training toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir, dataset, checkpoint, env_name, policy = "random", run_dir, format = "csv", out_path;
  std::vector<std::string> overrides;
  long episodes = 10, n = 1000;
  std::uint64_t seed = 0;
  double epsilon = 0.0;

  auto* train = app.add_subcommand("train", "Run online training");
  train->add_option("--config", config, "JSON run config")->required();
  train->add_option("--set", overrides, "Override key.path=value (repeatable)");
  train->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  auto* offline = app.add_subcommand("offline", "Train from a static dataset");
  offline->add_option("--config", config, "JSON run config")->required();
  offline->add_option("--dataset", dataset, "Dataset JSON-lines file")->required();
  offline->add_option("--set", overrides, "Override key.path=value (repeatable)");
  offline->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint deterministically");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--env", env_name, "Environment name")->required();
  eval->add_option("--episodes", episodes, "Number of episodes");
  eval->add_option("--seed", seed, "Environment seed");

  auto* collect = app.add_subcommand("collect", "Roll out a policy and save a dataset");
  collect->add_option("--policy", policy, "random, oracle, or a checkpoint path");
  collect->add_option("--env", env_name, "Environment name")->required();
  collect->add_option("--n", n, "Minimum number of transitions");
  collect->add_option("--epsilon", epsilon, "Random-action probability for the oracle policy");
  collect->add_option("--out", out_path, "Output dataset path")->required();
  collect->add_option("--seed", seed, "Seed");

  auto* exp = app.add_subcommand("export", "Validate and export a learning curve");
  exp->add_option("--run-dir", run_dir, "Run directory containing curve.csv")->required();
  exp->add_option("--format", format, "csv or json");
  exp->add_option("--out", out_path, "Output file (default stdout)");

  auto* describe = app.add_subcommand("describe", "Print environment constants as JSON");
  describe->add_option("--env", env_name, "Environment name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  if (*train) return cmd_train(config, overrides, out_dir, out, err);
  if (*offline) return cmd_offline(config, dataset, overrides, out_dir, out, err);
  if (*eval) return cmd_eval(checkpoint, env_name, episodes, seed, out, err);
  if (*collect) return cmd_collect(policy, env_name, n, epsilon, out_path, seed, out, err);
  if (*exp) return cmd_export(run_dir, format, out_path, out, err);
  if (*describe) return cmd_describe(env_name, out, err);
  return kUsage;
}

}  // namespace awr::cli
