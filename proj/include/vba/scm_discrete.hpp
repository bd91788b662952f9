#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace vba {

// Bernoulli SCM over binary (x, y, z): z ~ B(p_z), x | z, y | (x, z).
struct DiscreteScm {
  double p_z = 0.5;
  // p(x = 1 | z), indexed by z
  std::array<double, 2> p_x_given_z{0.5, 0.75};
  // p(y = 1 | x, z), indexed by 2*x + z
  std::array<double, 4> p_y_given_xz{0.75, 0.5, 0.5, 0.5};

  void validate() const {
    auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!ok(p_z)) throw std::invalid_argument("DiscreteScm: p_z out of [0,1]");
    for (double p : p_x_given_z)
      if (!ok(p)) throw std::invalid_argument("DiscreteScm: p_x_given_z out of [0,1]");
    for (double p : p_y_given_xz)
      if (!ok(p)) throw std::invalid_argument("DiscreteScm: p_y_given_xz out of [0,1]");
  }
};

namespace detail {
inline double bern(double p1, int v) { return v ? p1 : 1.0 - p1; }
// x * log(p) with the 0 * log 0 = 0 convention
inline double xlogp(double x, double p) { return x == 0.0 ? 0.0 : x * std::log(p); }
}  // namespace detail

// Joint p(x, y, z) over the 8 binary outcomes, indexed by 4*x + 2*y + z.
inline std::array<double, 8> exact_joint(const DiscreteScm& scm) {
  scm.validate();
  std::array<double, 8> joint{};
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z)
        joint[4 * x + 2 * y + z] = detail::bern(scm.p_z, z) *
                                   detail::bern(scm.p_x_given_z[z], x) *
                                   detail::bern(scm.p_y_given_xz[2 * x + z], y);
  return joint;
}

// E_{p(x,y)} log p(y | x), by exact enumeration.
inline double expected_log_observational(const DiscreteScm& scm) {
  const auto joint = exact_joint(scm);
  double acc = 0.0;
  for (int x = 0; x < 2; ++x) {
    double px = 0.0;
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) px += joint[4 * x + 2 * y + z];
    for (int y = 0; y < 2; ++y) {
      double pxy = joint[4 * x + 2 * y + 0] + joint[4 * x + 2 * y + 1];
      if (pxy > 0.0) acc += detail::xlogp(pxy, pxy / px);
    }
  }
  return acc;
}

// E_{p(x,y)} log p(y | do(x)), with p(y|do(x)) = sum_z p(z) p(y|x,z).
inline double expected_log_interventional(const DiscreteScm& scm) {
  const auto joint = exact_joint(scm);
  double acc = 0.0;
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 2; ++y) {
      double pxy = joint[4 * x + 2 * y + 0] + joint[4 * x + 2 * y + 1];
      double p_do = 0.0;
      for (int z = 0; z < 2; ++z)
        p_do += detail::bern(scm.p_z, z) * detail::bern(scm.p_y_given_xz[2 * x + z], y);
      if (pxy > 0.0) acc += detail::xlogp(pxy, p_do);
    }
  }
  return acc;
}

}  // namespace vba
