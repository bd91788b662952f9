#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "vba/rng.hpp"

namespace vba {

inline double gaussian_logpdf(double value, double mean, double stddev) {
  const double d = (value - mean) / stddev;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(stddev) - 0.5 * d * d;
}

// One dimension of the linear-Gaussian SCM:
//   z ~ N(0,1),  x = c1 z + N(0, sigma1),  y = c2 x + c3 z + N(0, sigma2)
struct ScmDim {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

struct ScmConfig {
  std::vector<ScmDim> dims;
  std::uint64_t seed = 0;

  std::size_t dim() const { return dims.size(); }

  void validate() const {
    if (dims.empty()) throw std::invalid_argument("ScmConfig: dim must be >= 1");
    for (const auto& d : dims)
      if (!(d.sigma1 > 0.0) || !(d.sigma2 > 0.0))
        throw std::invalid_argument("ScmConfig: noise stddevs must be positive");
  }
};

using Fingerprint = std::array<std::uint8_t, 32>;

// 32-byte fingerprint of a config, from chained mixing of its bit patterns.
inline Fingerprint fingerprint(const ScmConfig& config) {
  std::uint64_t h = rng::mix64(config.seed ^ 0x5851f42d4c957f2dULL);
  h = rng::mix64(h ^ config.dims.size());
  for (const auto& d : config.dims) {
    for (double v : {d.c1, d.c2, d.c3, d.sigma1, d.sigma2}) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      h = rng::mix64(h ^ bits);
    }
  }
  Fingerprint fp{};
  for (int block = 0; block < 4; ++block) {
    h = rng::mix64(h + 0x9e3779b97f4a7c15ULL);
    std::memcpy(fp.data() + 8 * block, &h, 8);
  }
  return fp;
}

enum class Origin : std::uint8_t {
  Observational = 0,
  OutOfDistribution = 1,
  Interventional = 2,
};

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  // row-major n x d
  std::vector<double> x, y, z;
  Origin origin = Origin::Observational;
  Fingerprint config_fingerprint{};

  std::span<const double> x_row(std::size_t i) const { return {x.data() + i * d, d}; }
  std::span<const double> y_row(std::size_t i) const { return {y.data() + i * d, d}; }
  std::span<const double> z_row(std::size_t i) const { return {z.data() + i * d, d}; }
};

// Hyperparameter sampling: c1 ~ U(0,5), c2 ~ U(0,3), c3 ~ U(-10,-5),
// sigma1 ~ U(0,1), sigma2 ~ U(0,3), independently per dimension.
inline ScmConfig sample_config(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("sample_config: dim must be >= 1");
  ScmConfig config;
  config.seed = seed;
  config.dims.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    auto s = rng::substream(seed, /*tag=*/0xc0f1ULL, k);
    ScmDim& d = config.dims[k];
    d.c1 = s.uniform(0.0, 5.0);
    d.c2 = s.uniform(0.0, 3.0);
    d.c3 = s.uniform(-10.0, -5.0);
    do { d.sigma1 = s.uniform(0.0, 1.0); } while (d.sigma1 == 0.0);
    do { d.sigma2 = s.uniform(0.0, 3.0); } while (d.sigma2 == 0.0);
  }
  return config;
}

namespace detail {

enum VarTag : std::uint64_t { kZ = 1, kXNoise = 2, kYNoise = 3 };

template <typename ZDraw>
Dataset generate_impl(const ScmConfig& config, std::size_t n, std::uint64_t seed,
                      Origin origin, ZDraw&& draw_z) {
  config.validate();
  if (n == 0) throw std::invalid_argument("generate: n must be >= 1");
  const std::size_t d = config.dim();
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.x.resize(n * d);
  ds.y.resize(n * d);
  ds.z.resize(n * d);
  ds.origin = origin;
  ds.config_fingerprint = fingerprint(config);
  for (std::size_t k = 0; k < d; ++k) {
    auto sz = rng::substream(seed, k, kZ);
    auto sx = rng::substream(seed, k, kXNoise);
    auto sy = rng::substream(seed, k, kYNoise);
    const ScmDim& c = config.dims[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double z = draw_z(sz);
      const double x = c.c1 * z + c.sigma1 * sx.normal();
      const double y = c.c2 * x + c.c3 * z + c.sigma2 * sy.normal();
      ds.z[i * d + k] = z;
      ds.x[i * d + k] = x;
      ds.y[i * d + k] = y;
    }
  }
  return ds;
}

}  // namespace detail

// Observational data per the structural equations.
inline Dataset generate(const ScmConfig& config, std::size_t n, std::uint64_t seed) {
  return detail::generate_impl(config, n, seed, Origin::Observational,
                               [](rng::Stream& s) { return s.normal(); });
}

// Out-of-distribution data: intervene on z, drawing it from U(-7, 7).
inline Dataset generate_ood(const ScmConfig& config, std::size_t n, std::uint64_t seed) {
  return detail::generate_impl(config, n, seed, Origin::OutOfDistribution,
                               [](rng::Stream& s) { return s.uniform(-7.0, 7.0); });
}

// Ground truth log p(y | do(x)): per dimension y | do(x) ~ N(c2 x, sqrt(c3^2 + sigma2^2)).
inline double log_interventional(const ScmConfig& config, std::span<const double> x,
                                 std::span<const double> y) {
  const std::size_t d = config.dim();
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const ScmDim& c = config.dims[k];
    acc += gaussian_logpdf(y[k], c.c2 * x[k],
                           std::sqrt(c.c3 * c.c3 + c.sigma2 * c.sigma2));
  }
  return acc;
}

// Analytic log p(y | x):
//   y | x ~ N((c1 c3 / (c1^2 + sigma1^2) + c2) x,
//             sqrt(c3^2 sigma1^2 / (c1^2 + sigma1^2) + sigma2^2))
inline double log_observational(const ScmConfig& config, std::span<const double> x,
                                std::span<const double> y) {
  const std::size_t d = config.dim();
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const ScmDim& c = config.dims[k];
    const double denom = c.c1 * c.c1 + c.sigma1 * c.sigma1;
    const double mean_coeff = c.c1 * c.c3 / denom + c.c2;
    const double var = c.c3 * c.c3 * c.sigma1 * c.sigma1 / denom + c.sigma2 * c.sigma2;
    acc += gaussian_logpdf(y[k], mean_coeff * x[k], std::sqrt(var));
  }
  return acc;
}

// Conjugate posterior of z given x: z | x ~ N(c1 x / (c1^2 + sigma1^2),
// sqrt(sigma1^2 / (c1^2 + sigma1^2))), per dimension.
inline void posterior_z_given_x(const ScmDim& c, double x, double& mean, double& stddev) {
  const double denom = c.c1 * c.c1 + c.sigma1 * c.sigma1;
  mean = c.c1 * x / denom;
  stddev = std::sqrt(c.sigma1 * c.sigma1 / denom);
}

struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// The encoder that makes the variational bound exactly tight:
// per dimension, the normalized product of N(z; 0, 1) and N(y; c2 x + c3 z, sigma2)
// viewed as a density in z.
inline DiagonalGaussian optimal_encoder_params(const ScmConfig& config,
                                               std::span<const double> x,
                                               std::span<const double> y) {
  const std::size_t d = config.dim();
  DiagonalGaussian g;
  g.mean.resize(d);
  g.stddev.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    const ScmDim& c = config.dims[k];
    const double s2sq = c.sigma2 * c.sigma2;
    const double precision = 1.0 + c.c3 * c.c3 / s2sq;
    g.mean[k] = c.c3 * (y[k] - c.c2 * x[k]) / s2sq / precision;
    g.stddev[k] = std::sqrt(1.0 / precision);
  }
  return g;
}

// Mean of log p(y | do(x)) over dataset rows (the ground-truth reference for MAE).
inline double expected_log_interventional(const ScmConfig& config, const Dataset& ds) {
  if (ds.d != config.dim())
    throw std::invalid_argument("expected_log_interventional: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.n; ++i)
    acc += log_interventional(config, ds.x_row(i), ds.y_row(i));
  return acc / static_cast<double>(ds.n);
}

// Closed-form E_{p(x,y)} log p(y|x) under observational data: per dimension the
// negative differential entropy of the observational conditional.
inline double analytic_expected_log_observational(const ScmConfig& config) {
  double acc = 0.0;
  for (const ScmDim& c : config.dims) {
    const double denom = c.c1 * c.c1 + c.sigma1 * c.sigma1;
    const double var = c.c3 * c.c3 * c.sigma1 * c.sigma1 / denom + c.sigma2 * c.sigma2;
    acc += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5;
  }
  return acc;
}

// Closed-form E_{p(x,y)} log p(y|do(x)) under observational data. Per dimension,
// with m_c, v_c the observational conditional mean coefficient and variance and
// v_i = c3^2 + sigma2^2 the interventional variance:
//   E = -1/2 log(2 pi v_i) - (v_c + (m_c - c2)^2 E[x^2]) / (2 v_i),  E[x^2] = c1^2 + sigma1^2.
inline double analytic_expected_log_interventional(const ScmConfig& config) {
  double acc = 0.0;
  for (const ScmDim& c : config.dims) {
    const double ex2 = c.c1 * c.c1 + c.sigma1 * c.sigma1;
    const double mean_coeff = c.c1 * c.c3 / ex2 + c.c2;
    const double vc = c.c3 * c.c3 * c.sigma1 * c.sigma1 / ex2 + c.sigma2 * c.sigma2;
    const double vi = c.c3 * c.c3 + c.sigma2 * c.sigma2;
    const double bias = mean_coeff - c.c2;
    acc += -0.5 * std::log(2.0 * std::numbers::pi * vi) -
           (vc + bias * bias * ex2) / (2.0 * vi);
  }
  return acc;
}

}  // namespace vba
