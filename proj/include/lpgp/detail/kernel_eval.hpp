#ifndef LPGP_DETAIL_KERNEL_EVAL_HPP
#define LPGP_DETAIL_KERNEL_EVAL_HPP

// Rounding-policy templated kernel evaluation shared by the dense assembly,
// the matrix-free operators and the gradient path.

#include <cmath>
#include <numbers>
#include <vector>

#include "lpgp/kernels.hpp"

namespace lpgp::detail {

// Per-format constants of a kernel, each already rounded into the format.
struct KernelConstants {
  KernelFamily family;
  double outputscale_sq;
  double noise_sq;
  double sqrt3;
  double sqrt5;
  double third;
  double inv_two_alpha;
  double neg_alpha;
  double neg_alpha_minus_one;
  double pi_over_period;
  double neg_two_over_lambda;
  // Lengthscale-derivative constants.
  double two_pi_over_lambda_period;
  double two_pi_over_period;
};

template <typename Round>
KernelConstants make_constants(const KernelSpec &spec, Round round) {
  KernelConstants c{};
  c.family = spec.family;
  c.outputscale_sq = round(spec.outputscale_sq);
  c.noise_sq = round(spec.noise_sq);
  c.sqrt3 = round(std::numbers::sqrt3);
  c.sqrt5 = round(std::sqrt(5.0));
  c.third = round(1.0 / 3.0);
  c.inv_two_alpha = round(1.0 / (2.0 * spec.rq_alpha));
  c.neg_alpha = -spec.rq_alpha;
  c.neg_alpha_minus_one = -spec.rq_alpha - 1.0;
  c.pi_over_period = round(std::numbers::pi / spec.period);
  c.neg_two_over_lambda = round(-2.0 / spec.periodic_lambda);
  c.two_pi_over_lambda_period =
      round(2.0 * std::numbers::pi / (spec.periodic_lambda * spec.period));
  c.two_pi_over_period = round(2.0 * std::numbers::pi / spec.period);
  return c;
}

// Coordinates divided by their lengthscales, rounded, one point per row
// (row-major, dim entries per point).
template <typename Round>
std::vector<double> scale_points(const KernelSpec &spec, const Points &X, Round round) {
  const Index n = X.rows();
  const Index dim = X.cols();
  std::vector<double> out(static_cast<std::size_t>(n * dim));
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) {
      out[static_cast<std::size_t>(i * dim + d)] = round(X(i, d) / round(spec.lengthscale(d)));
    }
  }
  return out;
}

template <typename Round>
inline double scaled_sq_distance(const double *u, const double *v, Index dim, Round round) {
  double r2 = 0.0;
  for (Index d = 0; d < dim; ++d) {
    const double diff = round(u[d] - v[d]);
    r2 = round(r2 + round(diff * diff));
  }
  return r2;
}

// k(r) for the unit-outputscale kernel, given r^2 in the format.
template <typename Round>
inline double kernel_profile(const KernelConstants &c, double r2, Round round) {
  switch (c.family) {
    case KernelFamily::Rbf:
      return round(std::exp(round(-0.5 * r2)));
    case KernelFamily::Matern12: {
      const double r = round(std::sqrt(r2));
      return round(std::exp(-r));
    }
    case KernelFamily::Matern32: {
      const double t = round(c.sqrt3 * round(std::sqrt(r2)));
      return round(round(1.0 + t) * round(std::exp(-t)));
    }
    case KernelFamily::Matern52: {
      const double t = round(c.sqrt5 * round(std::sqrt(r2)));
      const double poly = round(round(1.0 + t) + round(round(t * t) * c.third));
      return round(poly * round(std::exp(-t)));
    }
    case KernelFamily::RationalQuadratic: {
      const double base = round(1.0 + round(r2 * c.inv_two_alpha));
      return round(std::pow(base, c.neg_alpha));
    }
    case KernelFamily::Periodic: {
      const double r = round(std::sqrt(r2));
      const double s = round(std::sin(round(r * c.pi_over_period)));
      return round(std::exp(round(round(s * s) * c.neg_two_over_lambda)));
    }
  }
  return 0.0;
}

// a^2 k(r).
template <typename Round>
inline double scaled_kernel(const KernelConstants &c, double r2, Round round) {
  return round(c.outputscale_sq * kernel_profile(c, r2, round));
}

/*
 * g(r) with d k / d log l_d = g(r) * ((x_d - x'_d) / l_d)^2 for the
 * unit-outputscale kernel. k is the value returned by kernel_profile.
 */
template <typename Round>
inline double lengthscale_factor(const KernelConstants &c, double r2, double k, Round round) {
  switch (c.family) {
    case KernelFamily::Rbf:
      return k;
    case KernelFamily::Matern12: {
      if (r2 == 0.0) return 0.0;
      return round(k / round(std::sqrt(r2)));
    }
    case KernelFamily::Matern32: {
      const double t = round(c.sqrt3 * round(std::sqrt(r2)));
      return round(3.0 * round(std::exp(-t)));
    }
    case KernelFamily::Matern52: {
      const double t = round(c.sqrt5 * round(std::sqrt(r2)));
      const double five_thirds = round(5.0 / 3.0);
      return round(round(five_thirds * round(1.0 + t)) * round(std::exp(-t)));
    }
    case KernelFamily::RationalQuadratic: {
      const double base = round(1.0 + round(r2 * c.inv_two_alpha));
      return round(std::pow(base, c.neg_alpha_minus_one));
    }
    case KernelFamily::Periodic: {
      if (r2 == 0.0) return round(round(c.two_pi_over_lambda_period * c.two_pi_over_period) * k);
      const double r = round(std::sqrt(r2));
      const double s = round(std::sin(round(r * c.two_pi_over_period)));
      return round(round(round(c.two_pi_over_lambda_period * k) * s) / r);
    }
  }
  return 0.0;
}

}  // namespace lpgp::detail

#endif
