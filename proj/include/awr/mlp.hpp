#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "awr/error.hpp"

namespace awr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Gradients (or any other per-parameter quantity) shaped like an Mlp.
struct ParamGrads {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  ParamGrads& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }
};

/// Activations recorded by a training forward pass; consumed by Mlp::backward.
struct ForwardCache {
  std::vector<Mat> pre;   // pre-activations per layer
  std::vector<Mat> post;  // post[0] is the input, post[l+1] the output of layer l
  const Mat& output() const { return post.back(); }
};

/// Fully-connected network: ReLU on hidden layers, identity on the output.
/// Weight matrices are stored (fan_in x fan_out) and batches are row-major in
/// the sense that each row of an input matrix is one sample.
class Mlp {
public:
  static std::vector<int> default_hidden() { return {128, 64}; }

  Mlp() = default;

  /// Hidden layers use He-uniform weights (bound sqrt(6 / fan_in)); the last
  /// layer uses the same bound times output_scale. Biases start at zero.
  static Mlp init(const std::vector<int>& layer_dims, std::uint64_t seed, double output_scale = 1.0) {
    validate_dims(layer_dims);
    if (!(output_scale > 0.0) || !std::isfinite(output_scale))
      throw ConfigError("mlp: output_scale must be positive and finite");
    Mlp m;
    m.dims_ = layer_dims;
    std::mt19937_64 rng(seed);
    const std::size_t n = layer_dims.size() - 1;
    for (std::size_t l = 0; l < n; ++l) {
      const int in = layer_dims[l];
      const int out = layer_dims[l + 1];
      double bound = std::sqrt(6.0 / static_cast<double>(in));
      if (l + 1 == n) bound *= output_scale;
      std::uniform_real_distribution<double> dist(-bound, bound);
      Mat w(in, out);
      // Fill row by row so the draw order is independent of Eigen's storage order.
      for (int i = 0; i < in; ++i)
        for (int j = 0; j < out; ++j) w(i, j) = dist(rng);
      m.weights_.push_back(std::move(w));
      m.biases_.push_back(Vec::Zero(out));
    }
    m.reset_momentum();
    return m;
  }

  /// Builds a network from explicit parameters (checkpoint loading, tests).
  static Mlp from_params(std::vector<Mat> weights, std::vector<Vec> biases) {
    if (weights.empty() || weights.size() != biases.size())
      throw ShapeError("mlp: need one bias per weight matrix and at least one layer");
    Mlp m;
    m.dims_.push_back(static_cast<int>(weights.front().rows()));
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != m.dims_.back() || biases[l].size() != weights[l].cols())
        throw ShapeError("mlp: parameter shapes of layer " + std::to_string(l) + " are inconsistent");
      m.dims_.push_back(static_cast<int>(weights[l].cols()));
    }
    validate_dims(m.dims_);
    m.weights_ = std::move(weights);
    m.biases_ = std::move(biases);
    m.reset_momentum();
    return m;
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  std::size_t num_layers() const { return weights_.size(); }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }
  std::vector<Mat>& weights() { return weights_; }
  std::vector<Vec>& biases() { return biases_; }
  const ParamGrads& momentum() const { return momentum_; }
  ParamGrads& momentum() { return momentum_; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  ParamGrads zero_grads() const {
    ParamGrads g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.weights.push_back(Mat::Zero(weights_[l].rows(), weights_[l].cols()));
      g.biases.push_back(Vec::Zero(biases_[l].size()));
    }
    return g;
  }

  void reset_momentum() { momentum_ = zero_grads(); }

  Mat forward(const Mat& inputs) const {
    check_input(inputs);
    Mat h = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat z = h * weights_[l];
      z.rowwise() += biases_[l].transpose();
      if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    return h;
  }

  Vec forward_one(const Vec& input) const {
    Mat row = input.transpose();
    return forward(row).row(0).transpose();
  }

  ForwardCache forward_cached(const Mat& inputs) const {
    check_input(inputs);
    ForwardCache c;
    c.post.reserve(weights_.size() + 1);
    c.pre.reserve(weights_.size());
    c.post.push_back(inputs);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat z = c.post.back() * weights_[l];
      z.rowwise() += biases_[l].transpose();
      c.pre.push_back(z);
      if (l + 1 < weights_.size())
        c.post.push_back(z.cwiseMax(0.0));
      else
        c.post.push_back(std::move(z));
    }
    return c;
  }

  /// Gradient of sum_rows(upstream . output) w.r.t. every parameter.
  ParamGrads backward(const ForwardCache& cache, const Mat& upstream) const {
    const Mat& out = cache.output();
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
      throw ShapeError("mlp: upstream gradient shape (" + std::to_string(upstream.rows()) + "x" +
                       std::to_string(upstream.cols()) + ") does not match output shape (" +
                       std::to_string(out.rows()) + "x" + std::to_string(out.cols()) + ")");
    ParamGrads g;
    const std::size_t n = weights_.size();
    g.weights.resize(n);
    g.biases.resize(n);
    Mat delta = upstream;
    for (std::size_t l = n; l-- > 0;) {
      g.weights[l].noalias() = cache.post[l].transpose() * delta;
      g.biases[l] = delta.colwise().sum().transpose();
      if (l > 0) {
        Mat up = delta * weights_[l].transpose();
        delta = (cache.pre[l - 1].array() > 0.0).select(up, 0.0);
      }
    }
    return g;
  }

  ParamGrads backward(const Mat& inputs, const Mat& upstream) const {
    return backward(forward_cached(inputs), upstream);
  }

  /// buffer <- momentum * buffer + g;  param <- param - lr * buffer.
  void sgd_momentum_step(const ParamGrads& g, double lr, double momentum) {
    if (!(lr > 0.0)) throw ConfigError("sgd: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
    check_grads(g);
    if (!g.all_finite()) throw DivergenceError("sgd: non-finite gradient, update rejected");
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      momentum_.weights[l] = momentum * momentum_.weights[l] + g.weights[l];
      momentum_.biases[l] = momentum * momentum_.biases[l] + g.biases[l];
      weights_[l] -= lr * momentum_.weights[l];
      biases_[l] -= lr * momentum_.biases[l];
    }
  }

  /// Visits every scalar parameter in a fixed order (layer, weights row-major, then bias).
  template <typename F>
  void for_each_param(F&& f) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) f(l, false, weights_[l](i, j), i, j);
      for (Eigen::Index j = 0; j < biases_[l].size(); ++j) f(l, true, biases_[l](j), j, Eigen::Index{0});
    }
  }

  bool operator==(const Mlp& o) const {
    if (dims_ != o.dims_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
    return true;
  }

private:
  static void validate_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ConfigError("mlp: layer_dims needs at least an input and an output size");
    for (int d : dims)
      if (d <= 0) throw ConfigError("mlp: layer sizes must be positive");
  }

  void check_input(const Mat& inputs) const {
    if (weights_.empty()) throw ShapeError("mlp: network has no layers");
    if (inputs.cols() != dims_.front())
      throw ShapeError("mlp: input has " + std::to_string(inputs.cols()) + " columns, expected " +
                       std::to_string(dims_.front()));
  }

  void check_grads(const ParamGrads& g) const {
    if (g.weights.size() != weights_.size() || g.biases.size() != biases_.size())
      throw ShapeError("sgd: gradient layer count does not match network");
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (g.weights[l].rows() != weights_[l].rows() || g.weights[l].cols() != weights_[l].cols() ||
          g.biases[l].size() != biases_[l].size())
        throw ShapeError("sgd: gradient shape mismatch at layer " + std::to_string(l));
  }

  std::vector<int> dims_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  ParamGrads momentum_;
};

/// Loss value plus its analytic gradient, as produced by any differentiable
/// objective over an Mlp.
struct LossAndGrad {
  double loss = 0.0;
  ParamGrads grads;
};

struct LayerCheck {
  double max_rel_error_weights = 0.0;
  double max_rel_error_biases = 0.0;
};

struct GradientCheckReport {
  std::vector<LayerCheck> layers;
  std::size_t checked = 0;
  std::size_t flagged = 0;
  std::size_t skipped_kinks = 0;
  double max_rel_error = 0.0;
  bool passed() const { return flagged == 0; }
};

struct GradientCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error; below it the error is absolute.
  double abs_floor = 1e-6;
  // When set, parameters whose +/- step perturbation flips any ReLU on these
  // inputs are skipped: central differences are meaningless across a kink.
  const Mat* kink_probe = nullptr;
};

/// Compares the analytic gradient of `loss` against central differences.
/// A parameter is flagged unless its relative error is strictly below tol.
template <typename LossFn>
GradientCheckReport gradient_check(const Mlp& m, LossFn&& loss, double tol, GradientCheckOptions opt = {}) {
  Mlp probe = m;
  const LossAndGrad analytic = loss(static_cast<const Mlp&>(probe));
  GradientCheckReport rep;
  rep.layers.resize(m.num_layers());

  auto relu_mask = [&](const Mlp& net) {
    std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> masks;
    if (opt.kink_probe == nullptr) return masks;
    ForwardCache c = net.forward_cached(*opt.kink_probe);
    for (std::size_t l = 0; l + 1 < c.pre.size(); ++l) masks.push_back(c.pre[l].array() > 0.0);
    return masks;
  };
  auto same_masks = [](const auto& a, const auto& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if ((a[i] != b[i]).any()) return false;
    return true;
  };

  probe.for_each_param([&](std::size_t layer, bool is_bias, double& p, Eigen::Index i, Eigen::Index j) {
    const double saved = p;
    p = saved + opt.step;
    const double plus = loss(static_cast<const Mlp&>(probe)).loss;
    auto mask_plus = relu_mask(probe);
    p = saved - opt.step;
    const double minus = loss(static_cast<const Mlp&>(probe)).loss;
    auto mask_minus = relu_mask(probe);
    p = saved;
    if (opt.kink_probe != nullptr && !same_masks(mask_plus, mask_minus)) {
      ++rep.skipped_kinks;
      return;
    }
    const double numeric = (plus - minus) / (2.0 * opt.step);
    const double a = is_bias ? analytic.grads.biases[layer](i) : analytic.grads.weights[layer](i, j);
    const double denom = std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    ++rep.checked;
    if (!(rel < tol)) ++rep.flagged;
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    auto& slot = is_bias ? rep.layers[layer].max_rel_error_biases : rep.layers[layer].max_rel_error_weights;
    slot = std::max(slot, rel);
  });
  return rep;
}

/// Mean squared error 1/B sum_b ||out_b - target_b||^2 and its gradient.
inline LossAndGrad mse_loss(const Mlp& m, const Mat& inputs, const Mat& targets) {
  ForwardCache c = m.forward_cached(inputs);
  if (targets.rows() != c.output().rows() || targets.cols() != c.output().cols())
    throw ShapeError("mse: target shape does not match network output");
  const Mat diff = c.output() - targets;
  const double b = static_cast<double>(inputs.rows());
  LossAndGrad r;
  r.loss = diff.squaredNorm() / b;
  r.grads = m.backward(c, (2.0 / b) * diff);
  return r;
}

}  // namespace awr
