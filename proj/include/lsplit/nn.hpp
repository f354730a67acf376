#pragma once

// Small feed-forward classifier engine: ReLU hidden layers, raw logits out,
// inverted dropout on hidden units, softmax cross-entropy, exact backprop and
// Adam. Both the splitter and the predictor networks are built from this.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lsplit/errors.hpp"
#include "lsplit/rng.hpp"

namespace lsplit {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  bool operator==(const Matrix&) const = default;
};

struct Layer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }

  bool operator==(const Layer&) const = default;
};

// Parameters of an MLP. The same shape doubles as a gradient container and as
// the Adam moment accumulators.
struct MlpParams {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(in_dim());
    for (const auto& l : layers) d.push_back(l.out_dim());
    return d;
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
  }

  // Applies f(value&) to every scalar in a fixed order.
  template <typename F>
  void for_each_value(F&& f) {
    for (auto& l : layers) {
      for (auto& w : l.weight.data) f(w);
      for (auto& b : l.bias) f(b);
    }
  }
  template <typename F>
  void for_each_value(F&& f) const {
    for (const auto& l : layers) {
      for (double w : l.weight.data) f(w);
      for (double b : l.bias) f(b);
    }
  }

  bool operator==(const MlpParams&) const = default;
};

using Gradients = MlpParams;

inline bool same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const auto& la = a.layers[k];
    const auto& lb = b.layers[k];
    if (la.weight.rows != lb.weight.rows || la.weight.cols != lb.weight.cols ||
        la.bias.size() != lb.bias.size()) {
      return false;
    }
  }
  return true;
}

// Checks the chaining and finiteness invariants; throws ShapeError/NumericError.
inline void validate(const MlpParams& p) {
  if (p.layers.empty()) throw ShapeError("MLP has no layers");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    if (l.weight.rows == 0 || l.weight.cols == 0 ||
        l.weight.data.size() != l.weight.rows * l.weight.cols ||
        l.bias.size() != l.weight.rows) {
      throw ShapeError("layer " + std::to_string(k) + " has inconsistent shape");
    }
    if (k > 0 && p.layers[k - 1].out_dim() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(k) + " input dim " +
                       std::to_string(l.in_dim()) + " does not match previous output dim " +
                       std::to_string(p.layers[k - 1].out_dim()));
    }
  }
  bool finite = true;
  p.for_each_value([&](double v) { finite = finite && std::isfinite(v); });
  if (!finite) throw NumericError("MLP parameters contain non-finite values");
}

inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    z.layers.push_back(Layer{Matrix(l.weight.rows, l.weight.cols),
                             std::vector<double>(l.bias.size(), 0.0)});
  }
  return z;
}

// He (fan-in scaled) normal weights, zero biases.
inline MlpParams init_params(std::span<const std::size_t> layer_dims,
                             std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw ConfigError("an MLP needs at least an input and an output dimension");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("layer dimensions must be positive");
  }
  Rng rng(seed);
  MlpParams p;
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    const std::size_t in = layer_dims[k];
    const std::size_t out = layer_dims[k + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    Layer l{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (auto& w : l.weight.data) w = dist(rng);
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline MlpParams init_params(std::initializer_list<std::size_t> layer_dims,
                             std::uint64_t seed) {
  return init_params(std::span<const std::size_t>(layer_dims.begin(), layer_dims.size()),
                     seed);
}

enum class Mode { kTrain, kEval };

struct DropoutSpec {
  double rate = 0.0;

  void validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1)");
    }
  }
};

// Everything backward() needs: the input to every layer (post-ReLU and
// post-dropout for hidden layers), the hidden pre-activations, and the dropout
// multipliers that were applied.
struct ForwardCache {
  std::vector<std::vector<double>> layer_inputs;
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<double>> dropout_scale;  // empty when no mask applied
  std::vector<std::size_t> dims;
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardCache cache;
};

namespace detail {

inline void affine(const Layer& l, std::span<const double> x, std::vector<double>& out) {
  out.assign(l.bias.begin(), l.bias.end());
  const std::size_t in = l.in_dim();
  for (std::size_t r = 0; r < l.out_dim(); ++r) {
    const double* w = l.weight.data.data() + r * in;
    double acc = out[r];
    for (std::size_t c = 0; c < in; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

inline void check_input(const MlpParams& params, std::size_t n) {
  if (params.layers.empty()) throw ShapeError("MLP has no layers");
  if (n != params.in_dim()) {
    throw ShapeError("input length " + std::to_string(n) +
                     " does not match network input dimension " +
                     std::to_string(params.in_dim()));
  }
}

}  // namespace detail

inline ForwardResult forward(const MlpParams& params, std::span<const double> input,
                             Mode mode, const DropoutSpec& dropout, Rng& rng) {
  detail::check_input(params, input.size());
  const bool use_mask = mode == Mode::kTrain && dropout.rate > 0.0;
  const double keep_scale = use_mask ? 1.0 / (1.0 - dropout.rate) : 1.0;
  std::bernoulli_distribution drop(use_mask ? dropout.rate : 0.0);

  ForwardResult res;
  auto& cache = res.cache;
  cache.dims = params.dims();
  const std::size_t n_layers = params.layers.size();
  cache.layer_inputs.resize(n_layers);
  cache.pre_activations.resize(n_layers > 0 ? n_layers - 1 : 0);
  cache.dropout_scale.resize(n_layers > 0 ? n_layers - 1 : 0);
  cache.layer_inputs[0].assign(input.begin(), input.end());

  for (std::size_t k = 0; k < n_layers; ++k) {
    const Layer& l = params.layers[k];
    if (k + 1 == n_layers) {
      detail::affine(l, cache.layer_inputs[k], res.logits);
      break;
    }
    auto& pre = cache.pre_activations[k];
    detail::affine(l, cache.layer_inputs[k], pre);
    auto& next = cache.layer_inputs[k + 1];
    next.resize(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) next[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    if (use_mask) {
      auto& scale = cache.dropout_scale[k];
      scale.resize(next.size());
      for (std::size_t j = 0; j < next.size(); ++j) {
        scale[j] = drop(rng) ? 0.0 : keep_scale;
        next[j] *= scale[j];
      }
    }
  }
  return res;
}

// Evaluation-mode logits without keeping a cache.
inline std::vector<double> predict_logits(const MlpParams& params,
                                          std::span<const double> input) {
  detail::check_input(params, input.size());
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    detail::affine(params.layers[k], cur, next);
    if (k + 1 < params.layers.size()) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
  }
  return cur;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> dlogits;
};

inline LossAndGrad softmax_cross_entropy(std::span<const double> logits,
                                         std::size_t target) {
  if (target >= logits.size()) {
    throw ContractError("target class " + std::to_string(target) +
                        " out of range for " + std::to_string(logits.size()) +
                        " logits");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double log_z = m + std::log(sum);
  LossAndGrad out;
  out.loss = log_z - logits[target];
  out.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.dlogits[i] = std::exp(logits[i] - log_z);
  }
  out.dlogits[target] -= 1.0;
  return out;
}

// Accumulates `scale` times the gradient of the loss into `grads`.
inline void backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                                std::span<const double> dlogits, double scale,
                                Gradients& grads) {
  if (cache.dims != params.dims() || cache.layer_inputs.size() != params.layers.size()) {
    throw ContractError("forward cache does not match network shape");
  }
  if (dlogits.size() != params.out_dim()) {
    throw ShapeError("dlogits length does not match network output dimension");
  }
  if (!same_shape(params, grads)) {
    throw ShapeError("gradient container does not match network shape");
  }
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (double& d : delta) d *= scale;
  std::vector<double> prev;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Layer& l = params.layers[k];
    Layer& g = grads.layers[k];
    const auto& x = cache.layer_inputs[k];
    const std::size_t in = l.in_dim();
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      const double d = delta[r];
      g.bias[r] += d;
      if (d == 0.0) continue;
      double* gw = g.weight.data.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) gw[c] += d * x[c];
    }
    if (k == 0) break;
    prev.assign(in, 0.0);
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* w = l.weight.data.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += d * w[c];
    }
    const auto& pre = cache.pre_activations[k - 1];
    const auto& mask = cache.dropout_scale[k - 1];
    for (std::size_t c = 0; c < in; ++c) {
      double d = pre[c] > 0.0 ? prev[c] : 0.0;
      if (!mask.empty()) d *= mask[c];
      prev[c] = d;
    }
    delta.swap(prev);
  }
}

inline Gradients backward(const MlpParams& params, const ForwardCache& cache,
                          std::span<const double> dlogits) {
  Gradients g = zeros_like(params);
  backward_accumulate(params, cache, dlogits, 1.0, g);
  return g;
}

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& p) {
    AdamState s;
    s.first_moment = zeros_like(p);
    s.second_moment = zeros_like(p);
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

// In-place Adam update with bias correction. A nonzero weight_decay adds the
// L2 term weight_decay * param to the gradient before the moment updates.
inline void adam_update(MlpParams& params, const Gradients& grads, AdamState& state,
                        double lr, double weight_decay = 0.0) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!same_shape(params, grads) || !same_shape(params, state.first_moment) ||
      !same_shape(params, state.second_moment)) {
    throw ShapeError("Adam: parameter, gradient and moment shapes differ");
  }
  bool finite = true;
  grads.for_each_value([&](double v) { finite = finite && std::isfinite(v); });
  if (!finite) throw NumericError("Adam: non-finite gradient");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto apply = [&](std::vector<double>& p, const std::vector<double>& g,
                     std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + weight_decay * p[i];
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
      }
    };
    auto& pl = params.layers[k];
    const auto& gl = grads.layers[k];
    apply(pl.weight.data, gl.weight.data, state.first_moment.layers[k].weight.data,
          state.second_moment.layers[k].weight.data);
    apply(pl.bias, gl.bias, state.first_moment.layers[k].bias,
          state.second_moment.layers[k].bias);
  }
}

struct AdamStepResult {
  MlpParams params;
  AdamState state;
};

inline AdamStepResult adam_step(const MlpParams& params, const Gradients& grads,
                                const AdamState& state, double lr,
                                double weight_decay = 0.0) {
  AdamStepResult r{params, state};
  adam_update(r.params, grads, r.state, lr, weight_decay);
  return r;
}

}  // namespace lsplit
