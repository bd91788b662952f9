#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "vba/rng.hpp"

namespace vba {

inline constexpr double kStdFloor = 1e-4;

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Diagonal Gaussian produced by a model head.
struct GaussianHead {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
};

inline double gaussian_log_density(const GaussianHead& head, std::span<const double> value) {
  if (value.size() != head.dim())
    throw std::invalid_argument("gaussian_log_density: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < head.dim(); ++k) {
    const double d = (value[k] - head.mean[k]) / head.stddev[k];
    acc += -0.5 * std::log(2.0 * std::numbers::pi) - std::log(head.stddev[k]) - 0.5 * d * d;
  }
  return acc;
}

// Accumulates gradients of (scale * log N(value; head)) into dmean/dstddev/dvalue.
// Any of the outputs may be empty to skip it.
inline void gaussian_log_density_grad(const GaussianHead& head, std::span<const double> value,
                                      double scale, std::span<double> dmean,
                                      std::span<double> dstddev, std::span<double> dvalue) {
  for (std::size_t k = 0; k < head.dim(); ++k) {
    const double s = head.stddev[k];
    const double r = (value[k] - head.mean[k]) / (s * s);
    if (!dmean.empty()) dmean[k] += scale * r;
    if (!dstddev.empty()) dstddev[k] += scale * ((value[k] - head.mean[k]) * r / s - 1.0 / s);
    if (!dvalue.empty()) dvalue[k] += scale * -r;
  }
}

// mean + stddev * noise; the pathwise gradient carrier.
inline std::vector<double> reparameterized_sample(const GaussianHead& head,
                                                  std::span<const double> noise) {
  std::vector<double> out(head.dim());
  for (std::size_t k = 0; k < head.dim(); ++k)
    out[k] = head.mean[k] + head.stddev[k] * noise[k];
  return out;
}

enum class Activation { ReLU, Tanh };

// Fully connected net with a flat parameter vector. The raw output is split by
// head_from_raw into a mean half and a softplus-floored stddev half.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> sizes, Activation act)
      : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(total);
      total += (sizes_[l] + 1) * sizes_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void init(rng::Stream& stream) {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t fan_in = sizes_[l], fan_out = sizes_[l + 1];
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      double* w = params_.data() + offsets_[l];
      for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[i] = stream.uniform(-a, a);
      for (std::size_t i = 0; i < fan_out; ++i) w[fan_in * fan_out + i] = 0.0;
    }
  }

  struct Trace {
    // input copy followed by each layer's post-activation (raw for the last layer)
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> pre;
  };

  // Raw outputs (last layer is linear). If trace is given, caches activations
  // for backward().
  std::vector<double> forward_raw(std::span<const double> input, Trace* trace = nullptr) const {
    if (input.size() != input_dim())
      throw std::invalid_argument("Mlp::forward_raw: input width mismatch");
    const std::size_t nlayers = sizes_.size() - 1;
    if (trace) {
      trace->act.assign(1, std::vector<double>(input.begin(), input.end()));
      trace->pre.clear();
    }
    std::vector<double> cur(input.begin(), input.end());
    for (std::size_t l = 0; l < nlayers; ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + in * out;
      std::vector<double> next(out);
      for (std::size_t j = 0; j < out; ++j) {
        double acc = b[j];
        const double* row = w + j * in;
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * cur[i];
        next[j] = acc;
      }
      if (trace) trace->pre.push_back(next);
      if (l + 1 < nlayers) {
        for (double& v : next) v = act_ == Activation::ReLU ? (v > 0.0 ? v : 0.0) : std::tanh(v);
      }
      if (trace) trace->act.push_back(next);
      cur = std::move(next);
    }
    return cur;
  }

  // Reverse pass. grad_out is dL/d(raw outputs); parameter gradients are
  // accumulated into grad_params (length param_count). Returns dL/d(input).
  std::vector<double> backward(const Trace& trace, std::span<const double> grad_out,
                               std::span<double> grad_params) const {
    const std::size_t nlayers = sizes_.size() - 1;
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = nlayers; l-- > 0;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      if (l + 1 < nlayers) {
        // chain through the activation of this layer's output
        for (std::size_t j = 0; j < out; ++j) {
          const double pre = trace.pre[l][j];
          if (act_ == Activation::ReLU) {
            if (pre <= 0.0) delta[j] = 0.0;
          } else {
            const double t = std::tanh(pre);
            delta[j] *= 1.0 - t * t;
          }
        }
      }
      const std::vector<double>& a = trace.act[l];
      if (!grad_params.empty()) {
        double* gw = grad_params.data() + offsets_[l];
        double* gb = gw + in * out;
        for (std::size_t j = 0; j < out; ++j) {
          const double dj = delta[j];
          double* grow = gw + j * in;
          for (std::size_t i = 0; i < in; ++i) grow[i] += dj * a[i];
          gb[j] += dj;
        }
      }
      std::vector<double> prev(in, 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        const double dj = delta[j];
        const double* row = w + j * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += dj * row[i];
      }
      delta = std::move(prev);
    }
    return delta;
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation act_ = Activation::ReLU;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Split a raw output vector (width 2d) into mean and softplus-floored stddev.
inline GaussianHead head_from_raw(std::span<const double> raw) {
  if (raw.size() % 2 != 0) throw std::invalid_argument("head_from_raw: odd raw width");
  const std::size_t d = raw.size() / 2;
  GaussianHead head;
  head.mean.assign(raw.begin(), raw.begin() + d);
  head.stddev.resize(d);
  for (std::size_t k = 0; k < d; ++k) head.stddev[k] = softplus(raw[d + k]) + kStdFloor;
  return head;
}

// Chain dL/dmean, dL/dstddev back to dL/d(raw outputs).
inline void head_backward(std::span<const double> raw, std::span<const double> dmean,
                          std::span<const double> dstddev, std::span<double> draw) {
  const std::size_t d = raw.size() / 2;
  for (std::size_t k = 0; k < d; ++k) {
    draw[k] += dmean[k];
    draw[d + k] += dstddev[k] * sigmoid(raw[d + k]);
  }
}

// Learnable diagonal Gaussian with free mean and raw-stddev parameters.
struct GaussianPrior {
  std::size_t dim = 0;
  std::vector<double> params;  // [mean_0..mean_{d-1}, raw_0..raw_{d-1}]

  explicit GaussianPrior(std::size_t d = 0) : dim(d), params(2 * d, 0.0) {
    // start at unit stddev
    const double raw = std::log(std::expm1(1.0 - kStdFloor));
    for (std::size_t k = 0; k < d; ++k) params[d + k] = raw;
  }

  GaussianHead head() const { return head_from_raw(params); }

  void accumulate_grad(std::span<const double> dmean, std::span<const double> dstddev,
                       std::span<double> grad_params) const {
    head_backward(params, dmean, dstddev, grad_params);
  }
};

// Adaptive-moment stochastic gradient state.
struct OptimizerState {
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;

  explicit OptimizerState(std::size_t n = 0, double learning_rate = 1e-3)
      : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

inline void optimizer_step(OptimizerState& state, std::span<double> params,
                           std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("optimizer_step: length mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace vba
