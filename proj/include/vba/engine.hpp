#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vba/nn.hpp"
#include "vba/rng.hpp"
#include "vba/scm_gaussian.hpp"

namespace vba {

// The three-component estimator: prior p_theta(z), decoder p_gamma(y|x,z) on
// input [x; z], encoder q_phi(z|x,y) on input [x; y].
struct VbaModel {
  std::size_t dim = 0;
  GaussianPrior prior;
  Mlp decoder;
  Mlp encoder;
  bool freeze_prior = false;
  bool freeze_decoder = false;
};

inline VbaModel make_model(std::size_t dim, std::uint64_t seed,
                           std::vector<std::size_t> hidden = {64, 64},
                           Activation act = Activation::ReLU) {
  VbaModel m;
  m.dim = dim;
  m.prior = GaussianPrior(dim);
  std::vector<std::size_t> dec_sizes{2 * dim};
  dec_sizes.insert(dec_sizes.end(), hidden.begin(), hidden.end());
  dec_sizes.push_back(2 * dim);
  std::vector<std::size_t> enc_sizes = dec_sizes;
  m.decoder = Mlp(dec_sizes, act);
  m.encoder = Mlp(enc_sizes, act);
  auto sd = rng::substream(seed, /*tag=*/0xdecaULL);
  auto se = rng::substream(seed, /*tag=*/0xe9c0ULL);
  m.decoder.init(sd);
  m.encoder.init(se);
  return m;
}

inline std::uint64_t param_fingerprint(std::span<const double> params) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (double p : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &p, sizeof(bits));
    h = rng::mix64(h ^ bits);
  }
  return h;
}

struct ElboEstimate {
  double value = 0.0;
  double term_prior = 0.0;            // E_q log p_theta(z)
  double term_decoder = 0.0;          // E_q log p_gamma(y|x,z)
  double term_encoder_entropy = 0.0;  // -E_q log q_phi(z|x,y)
  std::size_t k = 0;
};

struct TrainReport {
  std::string mode;  // separate | finetune | fully-joint
  std::vector<double> loss_prior_curve;
  std::vector<double> loss_decoder_curve;
  std::vector<double> loss_encoder_curve;
  std::vector<double> elbo_curve;
  double wall_seconds = 0.0;
  std::uint64_t prior_fingerprint = 0;
  std::uint64_t decoder_fingerprint = 0;
  std::uint64_t encoder_fingerprint = 0;
};

namespace detail {

inline void check_batch(std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("loss: empty batch");
}

inline std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace detail

// Eq-style MLE losses: batch means of the negated component log-likelihoods.
// Gradients (if a non-empty span is given) are accumulated for that component
// only.

inline double loss_prior(const VbaModel& m, const Dataset& ds, std::span<const std::size_t> rows,
                         std::span<double> grad = {}) {
  detail::check_batch(rows);
  const GaussianHead head = m.prior.head();
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  std::vector<double> dmean(m.dim, 0.0), dstd(m.dim, 0.0);
  for (std::size_t i : rows) {
    const auto z = ds.z_row(i);
    loss += -gaussian_log_density(head, z);
    if (!grad.empty()) gaussian_log_density_grad(head, z, -inv, dmean, dstd, {});
  }
  if (!grad.empty()) m.prior.accumulate_grad(dmean, dstd, grad);
  return loss * inv;
}

inline double loss_decoder(const VbaModel& m, const Dataset& ds,
                           std::span<const std::size_t> rows, std::span<double> grad = {}) {
  detail::check_batch(rows);
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  Mlp::Trace trace;
  for (std::size_t i : rows) {
    const auto input = detail::concat(ds.x_row(i), ds.z_row(i));
    const auto raw = m.decoder.forward_raw(input, grad.empty() ? nullptr : &trace);
    const GaussianHead head = head_from_raw(raw);
    loss += -gaussian_log_density(head, ds.y_row(i));
    if (!grad.empty()) {
      std::vector<double> dmean(m.dim, 0.0), dstd(m.dim, 0.0), draw(raw.size(), 0.0);
      gaussian_log_density_grad(head, ds.y_row(i), -inv, dmean, dstd, {});
      head_backward(raw, dmean, dstd, draw);
      m.decoder.backward(trace, draw, grad);
    }
  }
  return loss * inv;
}

inline double loss_encoder_mle(const VbaModel& m, const Dataset& ds,
                               std::span<const std::size_t> rows, std::span<double> grad = {}) {
  detail::check_batch(rows);
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  Mlp::Trace trace;
  for (std::size_t i : rows) {
    const auto input = detail::concat(ds.x_row(i), ds.y_row(i));
    const auto raw = m.encoder.forward_raw(input, grad.empty() ? nullptr : &trace);
    const GaussianHead head = head_from_raw(raw);
    loss += -gaussian_log_density(head, ds.z_row(i));
    if (!grad.empty()) {
      std::vector<double> dmean(m.dim, 0.0), dstd(m.dim, 0.0), draw(raw.size(), 0.0);
      gaussian_log_density_grad(head, ds.z_row(i), -inv, dmean, dstd, {});
      head_backward(raw, dmean, dstd, draw);
      m.encoder.backward(trace, draw, grad);
    }
  }
  return loss * inv;
}

// Monte-Carlo estimate of the variational bound at one (x, y), k encoder
// samples. When gradient spans are given, d(mean elbo)/d(params) scaled by
// grad_scale is accumulated into them; the encoder gradient is the full
// pathwise derivative (sample path plus the direct dependence of log q).
inline ElboEstimate elbo_point(const VbaModel& m, std::span<const double> x,
                               std::span<const double> y, std::size_t k, rng::Stream& noise,
                               std::span<double> grad_enc = {}, std::span<double> grad_prior = {},
                               std::span<double> grad_dec = {}, double grad_scale = 1.0) {
  if (k == 0) throw std::invalid_argument("elbo_point: k must be >= 1");
  const std::size_t d = m.dim;
  const bool want_grad = !grad_enc.empty() || !grad_prior.empty() || !grad_dec.empty();

  Mlp::Trace enc_trace;
  const auto enc_input = detail::concat(x, y);
  const auto enc_raw = m.encoder.forward_raw(enc_input, want_grad ? &enc_trace : nullptr);
  const GaussianHead q = head_from_raw(enc_raw);
  const GaussianHead prior_head = m.prior.head();

  ElboEstimate est;
  est.k = k;
  const double inv_k = 1.0 / static_cast<double>(k);
  const double s = grad_scale * inv_k;

  std::vector<double> q_dmean(d, 0.0), q_dstd(d, 0.0);
  std::vector<double> prior_dmean(d, 0.0), prior_dstd(d, 0.0);
  std::vector<double> eps(d), gz(d);
  Mlp::Trace dec_trace;

  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t t = 0; t < d; ++t) eps[t] = noise.normal();
    const auto z = reparameterized_sample(q, eps);

    const double lp = gaussian_log_density(prior_head, z);
    const auto dec_input = detail::concat(x, z);
    const auto dec_raw = m.decoder.forward_raw(dec_input, want_grad ? &dec_trace : nullptr);
    const GaussianHead p_dec = head_from_raw(dec_raw);
    const double ld = gaussian_log_density(p_dec, y);
    const double lq = gaussian_log_density(q, z);

    est.term_prior += lp * inv_k;
    est.term_decoder += ld * inv_k;
    est.term_encoder_entropy += -lq * inv_k;

    if (!want_grad) continue;

    // dE/dz from the prior term
    std::fill(gz.begin(), gz.end(), 0.0);
    gaussian_log_density_grad(prior_head, z, 1.0, {}, {}, gz);
    // dE/dtheta (joint mode only)
    if (!grad_prior.empty()) gaussian_log_density_grad(prior_head, z, s, prior_dmean, prior_dstd, {});

    // decoder term: head grads, then back through the net to params and input
    {
      std::vector<double> dmean(d, 0.0), dstd(d, 0.0), draw(dec_raw.size(), 0.0);
      gaussian_log_density_grad(p_dec, y, 1.0, dmean, dstd, {});
      head_backward(dec_raw, dmean, dstd, draw);
      if (!grad_dec.empty()) {
        // param grads carry the scale; input grads are rescaled below
        std::vector<double> draw_scaled(draw);
        for (double& v : draw_scaled) v *= s;
        const auto din = m.decoder.backward(dec_trace, draw_scaled, grad_dec);
        for (std::size_t t = 0; t < d; ++t) gz[t] += din[d + t] / s;
      } else {
        const auto din = m.decoder.backward(dec_trace, draw, {});
        for (std::size_t t = 0; t < d; ++t) gz[t] += din[d + t];
      }
    }

    if (!grad_enc.empty()) {
      // -log q: pathwise dependence through z plus direct dependence on (mu, sigma)
      for (std::size_t t = 0; t < d; ++t) {
        const double sd = q.stddev[t];
        const double r = (z[t] - q.mean[t]) / (sd * sd);
        const double gzt = gz[t] - (-r);  // d(A+B-C)/dz
        const double dC_dmu = r;
        const double dC_dsd = (z[t] - q.mean[t]) * r / sd - 1.0 / sd;
        q_dmean[t] += s * (gzt - dC_dmu);
        q_dstd[t] += s * (gzt * eps[t] - dC_dsd);
      }
    }
  }
  if (!grad_enc.empty()) {
    std::vector<double> draw(enc_raw.size(), 0.0);
    head_backward(enc_raw, q_dmean, q_dstd, draw);
    m.encoder.backward(enc_trace, draw, grad_enc);
  }
  if (!grad_prior.empty()) m.prior.accumulate_grad(prior_dmean, prior_dstd, grad_prior);
  est.value = est.term_prior + est.term_decoder + est.term_encoder_entropy;
  return est;
}

inline ElboEstimate elbo_estimate(const VbaModel& m, std::span<const double> x,
                                  std::span<const double> y, std::size_t k, std::uint64_t seed) {
  auto noise = rng::substream(seed, 0xe1b0ULL);
  return elbo_point(m, x, y, k, noise);
}

// Baseline: log-mean-exp over k prior samples of log p_gamma(y|x,z).
inline double naive_mc_estimate(const VbaModel& m, std::span<const double> x,
                                std::span<const double> y, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("naive_mc_estimate: k must be >= 1");
  auto noise = rng::substream(seed, 0x3a1eULL);
  const GaussianHead prior_head = m.prior.head();
  const std::size_t d = m.dim;
  std::vector<double> eps(d), logs(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t t = 0; t < d; ++t) eps[t] = noise.normal();
    const auto z = reparameterized_sample(prior_head, eps);
    const auto raw = m.decoder.forward_raw(detail::concat(x, z));
    logs[j] = gaussian_log_density(head_from_raw(raw), y);
  }
  const double mx = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - mx);
  return mx + std::log(acc / static_cast<double>(k));
}

namespace detail {

inline void check_model_data(const VbaModel& m, const Dataset& ds) {
  if (ds.d != m.dim) throw std::invalid_argument("train: model/dataset dimension mismatch");
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, rng::Stream& s) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = s.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void finalize_report(const VbaModel& m, TrainReport& report, const Timer& timer) {
  report.wall_seconds = timer.seconds();
  report.prior_fingerprint = param_fingerprint(m.prior.params);
  report.decoder_fingerprint = param_fingerprint(m.decoder.params());
  report.encoder_fingerprint = param_fingerprint(m.encoder.params());
}

}  // namespace detail

// Phase 1: independent maximum-likelihood fits of the three components.
inline TrainReport train_separate(VbaModel& m, const Dataset& ds, std::size_t epochs,
                                  std::size_t batch_size, std::uint64_t seed, double lr = 1e-3) {
  detail::check_model_data(m, ds);
  if (batch_size == 0) throw std::invalid_argument("train_separate: batch_size must be >= 1");
  detail::Timer timer;
  TrainReport report;
  report.mode = "separate";
  OptimizerState opt_prior(m.prior.params.size(), lr);
  OptimizerState opt_dec(m.decoder.param_count(), lr);
  OptimizerState opt_enc(m.encoder.param_count(), lr);
  std::vector<double> gp(m.prior.params.size()), gd(m.decoder.param_count()),
      ge(m.encoder.param_count());
  auto shuffle_stream = rng::substream(seed, 0x5eedULL);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto idx = detail::shuffled_indices(ds.n, shuffle_stream);
    double ep = 0.0, ed = 0.0, ee = 0.0;
    std::size_t nbatches = 0;
    for (std::size_t start = 0; start < ds.n; start += batch_size) {
      const std::size_t len = std::min(batch_size, ds.n - start);
      std::span<const std::size_t> rows(idx.data() + start, len);
      std::fill(gp.begin(), gp.end(), 0.0);
      std::fill(gd.begin(), gd.end(), 0.0);
      std::fill(ge.begin(), ge.end(), 0.0);
      ep += loss_prior(m, ds, rows, gp);
      ed += loss_decoder(m, ds, rows, gd);
      ee += loss_encoder_mle(m, ds, rows, ge);
      optimizer_step(opt_prior, m.prior.params, gp);
      optimizer_step(opt_dec, m.decoder.params(), gd);
      optimizer_step(opt_enc, m.encoder.params(), ge);
      ++nbatches;
    }
    const double inv = 1.0 / static_cast<double>(nbatches);
    report.loss_prior_curve.push_back(ep * inv);
    report.loss_decoder_curve.push_back(ed * inv);
    report.loss_encoder_curve.push_back(ee * inv);
  }
  detail::finalize_report(m, report, timer);
  return report;
}

// Phase 2: maximize the bound over encoder parameters only; prior and decoder
// stay bit-identical.
inline TrainReport finetune_encoder(VbaModel& m, const Dataset& ds, std::size_t epochs,
                                    std::size_t batch_size, std::size_t k, std::uint64_t seed,
                                    double lr = 1e-3) {
  detail::check_model_data(m, ds);
  if (!m.freeze_prior || !m.freeze_decoder)
    throw std::logic_error("finetune_encoder: prior and decoder must be frozen");
  if (batch_size == 0 || k == 0)
    throw std::invalid_argument("finetune_encoder: batch_size and k must be >= 1");
  detail::Timer timer;
  TrainReport report;
  report.mode = "finetune";
  OptimizerState opt_enc(m.encoder.param_count(), lr);
  std::vector<double> ge(m.encoder.param_count());
  auto shuffle_stream = rng::substream(seed, 0x5eedULL);
  auto noise = rng::substream(seed, 0x9015eULL);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto idx = detail::shuffled_indices(ds.n, shuffle_stream);
    double elbo_sum = 0.0;
    for (std::size_t start = 0; start < ds.n; start += batch_size) {
      const std::size_t len = std::min(batch_size, ds.n - start);
      std::fill(ge.begin(), ge.end(), 0.0);
      const double scale = -1.0 / static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = idx[start + t];
        const auto est = elbo_point(m, ds.x_row(i), ds.y_row(i), k, noise, ge, {}, {}, scale);
        elbo_sum += est.value;
      }
      optimizer_step(opt_enc, m.encoder.params(), ge);
    }
    report.elbo_curve.push_back(elbo_sum / static_cast<double>(ds.n));
  }
  detail::finalize_report(m, report, timer);
  return report;
}

// The deliberate pitfall: optimize the bound over all three components at once.
inline TrainReport train_fully_joint(VbaModel& m, const Dataset& ds, std::size_t epochs,
                                     std::size_t batch_size, std::size_t k, std::uint64_t seed,
                                     double lr = 1e-3) {
  detail::check_model_data(m, ds);
  if (m.freeze_prior || m.freeze_decoder)
    throw std::logic_error("train_fully_joint: freeze flags must be unset");
  if (batch_size == 0 || k == 0)
    throw std::invalid_argument("train_fully_joint: batch_size and k must be >= 1");
  detail::Timer timer;
  TrainReport report;
  report.mode = "fully-joint";
  OptimizerState opt_prior(m.prior.params.size(), lr);
  OptimizerState opt_dec(m.decoder.param_count(), lr);
  OptimizerState opt_enc(m.encoder.param_count(), lr);
  std::vector<double> gp(m.prior.params.size()), gd(m.decoder.param_count()),
      ge(m.encoder.param_count());
  auto shuffle_stream = rng::substream(seed, 0x5eedULL);
  auto noise = rng::substream(seed, 0x9015eULL);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto idx = detail::shuffled_indices(ds.n, shuffle_stream);
    double elbo_sum = 0.0;
    for (std::size_t start = 0; start < ds.n; start += batch_size) {
      const std::size_t len = std::min(batch_size, ds.n - start);
      std::fill(gp.begin(), gp.end(), 0.0);
      std::fill(gd.begin(), gd.end(), 0.0);
      std::fill(ge.begin(), ge.end(), 0.0);
      const double scale = -1.0 / static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = idx[start + t];
        const auto est = elbo_point(m, ds.x_row(i), ds.y_row(i), k, noise, ge, gp, gd, scale);
        elbo_sum += est.value;
      }
      optimizer_step(opt_prior, m.prior.params, gp);
      optimizer_step(opt_dec, m.decoder.params(), gd);
      optimizer_step(opt_enc, m.encoder.params(), ge);
    }
    report.elbo_curve.push_back(elbo_sum / static_cast<double>(ds.n));
  }
  detail::finalize_report(m, report, timer);
  return report;
}

struct Metrics {
  double elbo_mean = 0.0;
  double term_prior = 0.0;
  double term_decoder = 0.0;
  double term_encoder_entropy = 0.0;
  double encoder_data_loglik = 0.0;
  double naive_mc_mean = 0.0;
  double ground_truth_mae = 0.0;
  std::string mode;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

// Table-style evaluation on one dataset: mean bound with its decomposition,
// encoder data log-likelihood, equal-budget naive MC mean, and MAE against the
// analytic interventional log-density.
inline Metrics evaluate(const VbaModel& m, const Dataset& ds, const ScmConfig& config,
                        std::size_t k, std::uint64_t seed, const std::string& mode = "") {
  detail::check_model_data(m, ds);
  if (ds.config_fingerprint != fingerprint(config))
    throw std::invalid_argument("evaluate: dataset/config fingerprint mismatch");
  Metrics out;
  out.mode = mode;
  out.k = k;
  out.seed = seed;
  const double inv = 1.0 / static_cast<double>(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    auto noise = rng::substream(seed, 0xe1b0ULL, i);
    const auto est = elbo_point(m, ds.x_row(i), ds.y_row(i), k, noise);
    out.elbo_mean += est.value * inv;
    out.term_prior += est.term_prior * inv;
    out.term_decoder += est.term_decoder * inv;
    out.term_encoder_entropy += est.term_encoder_entropy * inv;
    out.naive_mc_mean +=
        naive_mc_estimate(m, ds.x_row(i), ds.y_row(i), k, rng::derive(seed, 0x3a1eULL, i)) * inv;
    out.ground_truth_mae +=
        std::abs(est.value - log_interventional(config, ds.x_row(i), ds.y_row(i))) * inv;
    const auto raw = m.encoder.forward_raw(detail::concat(ds.x_row(i), ds.y_row(i)));
    out.encoder_data_loglik += gaussian_log_density(head_from_raw(raw), ds.z_row(i)) * inv;
  }
  return out;
}

}  // namespace vba
