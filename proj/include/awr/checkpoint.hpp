#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "awr/error.hpp"
#include "awr/mlp.hpp"
#include "awr/policy.hpp"

namespace awr {

namespace detail {

inline nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Mat json_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw ShapeError("checkpoint: matrix row count");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto r = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ShapeError("checkpoint: matrix column count");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

inline Vec json_vector(const nlohmann::json& j, Eigen::Index n) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n) throw ShapeError("checkpoint: vector length");
  return Eigen::Map<const Vec>(v.data(), n);
}

inline nlohmann::json vector_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace detail

/// {"layer_dims", "weights" (row-major, fan_in x fan_out), "biases",
///  "momentum": {"weights", "biases"}}. Doubles are written in shortest
/// round-trip form, so reloading reproduces the network bit for bit.
inline nlohmann::json to_json(const Mlp& m) {
  nlohmann::json j;
  j["layer_dims"] = m.layer_dims();
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  nlohmann::json mw = nlohmann::json::array(), mb = nlohmann::json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    j["weights"].push_back(detail::matrix_json(m.weights()[l]));
    j["biases"].push_back(detail::vector_json(m.biases()[l]));
    mw.push_back(detail::matrix_json(m.momentum().weights[l]));
    mb.push_back(detail::vector_json(m.momentum().biases[l]));
  }
  j["momentum"] = {{"weights", mw}, {"biases", mb}};
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("layer_dims").get<std::vector<int>>();
    if (dims.size() < 2) throw ShapeError("checkpoint: layer_dims too short");
    const std::size_t n = dims.size() - 1;
    const auto& W = j.at("weights");
    const auto& B = j.at("biases");
    if (W.size() != n || B.size() != n) throw ShapeError("checkpoint: layer count does not match layer_dims");
    std::vector<Mat> ws;
    std::vector<Vec> bs;
    for (std::size_t l = 0; l < n; ++l) {
      ws.push_back(detail::json_matrix(W.at(l), dims[l], dims[l + 1]));
      bs.push_back(detail::json_vector(B.at(l), dims[l + 1]));
    }
    Mlp m = Mlp::from_params(std::move(ws), std::move(bs));
    if (j.contains("momentum")) {
      const auto& mw = j.at("momentum").at("weights");
      const auto& mb = j.at("momentum").at("biases");
      if (mw.size() != n || mb.size() != n) throw ShapeError("checkpoint: momentum layer count");
      for (std::size_t l = 0; l < n; ++l) {
        m.momentum().weights[l] = detail::json_matrix(mw.at(l), dims[l], dims[l + 1]);
        m.momentum().biases[l] = detail::json_vector(mb.at(l), dims[l + 1]);
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  } catch (const ShapeError& e) {
    throw ParseError(e.what(), 0);
  }
}

/// Mlp fields plus {"kind", "std", "learn_std"}.
inline nlohmann::json to_json(const PolicyHead& p) {
  nlohmann::json j = to_json(p.net());
  j["kind"] = to_string(p.kind());
  if (p.kind() == PolicyKind::gaussian) {
    j["std"] = detail::vector_json(p.std_dev());
    j["learn_std"] = p.learn_std();
  }
  return j;
}

inline PolicyHead policy_from_json(const nlohmann::json& j) {
  try {
    Mlp net = mlp_from_json(j);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "categorical") return PolicyHead::categorical(std::move(net));
    if (kind != "gaussian") throw ParseError("checkpoint: unknown policy kind '" + kind + "'", 0);
    const Vec std = detail::json_vector(j.at("std"), net.output_dim());
    return PolicyHead::gaussian(std::move(net), std, j.value("learn_std", false));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  } catch (const ShapeError& e) {
    throw ParseError(e.what(), 0);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }
}

/// Writes to a sibling temporary file, then renames over the target, so a
/// reader never observes a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write '" + tmp.string() + "'");
    os << contents;
    os.flush();
    if (!os) throw ConfigError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace awr
