#include "lpgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "lpgp/detail/kernel_eval.hpp"
#include "lpgp/errors.hpp"

namespace lpgp {

std::string family_name(KernelFamily family) {
  switch (family) {
    case KernelFamily::Rbf:
      return "rbf";
    case KernelFamily::Matern12:
      return "matern12";
    case KernelFamily::Matern32:
      return "matern32";
    case KernelFamily::Matern52:
      return "matern52";
    case KernelFamily::RationalQuadratic:
      return "rq";
    case KernelFamily::Periodic:
      return "periodic";
  }
  return "unknown";
}

KernelFamily parse_family(std::string_view name) {
  if (name == "rbf") return KernelFamily::Rbf;
  if (name == "matern12") return KernelFamily::Matern12;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  if (name == "rq") return KernelFamily::RationalQuadratic;
  if (name == "periodic") return KernelFamily::Periodic;
  throw ConfigError("unknown kernel family '" + std::string(name) + "'");
}

double KernelSpec::mean_lengthscale() const {
  return std::accumulate(lengthscales.begin(), lengthscales.end(), 0.0) /
         static_cast<double>(lengthscales.size());
}

void KernelSpec::validate(Index dim) const {
  if (lengthscales.empty()) throw ConfigError("kernel needs at least one lengthscale");
  if (is_ard() && static_cast<Index>(lengthscales.size()) != dim) {
    throw DimensionMismatch("kernel has " + std::to_string(lengthscales.size()) +
                            " lengthscales but data has dimension " + std::to_string(dim));
  }
  for (double l : lengthscales) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("lengthscales must be positive");
  }
  if (!(outputscale_sq >= 0.0) || !std::isfinite(outputscale_sq)) {
    throw ConfigError("outputscale_sq must be non-negative");
  }
  if (!(noise_sq > 0.0)) throw ConfigError("noise_sq must be positive");
  if (family == KernelFamily::RationalQuadratic && !(rq_alpha > 0.0)) {
    throw ConfigError("rational quadratic alpha must be positive");
  }
  if (family == KernelFamily::Periodic && (!(period > 0.0) || !(periodic_lambda > 0.0))) {
    throw ConfigError("periodic kernel needs positive period and lambda");
  }
}

double eval_kernel(const KernelSpec &spec, const Eigen::Ref<const Vector> &x,
                   const Eigen::Ref<const Vector> &x_prime, const FloatFormat &fmt) {
  if (x.size() != x_prime.size()) throw DimensionMismatch("eval_kernel: point dimensions differ");
  spec.validate(x.size());
  Points both(2, x.size());
  both.row(0) = x.transpose();
  both.row(1) = x_prime.transpose();
  return with_rounding(fmt, [&](auto round) {
    const auto c = detail::make_constants(spec, round);
    const auto u = detail::scale_points(spec, both, round);
    const double r2 = detail::scaled_sq_distance(u.data(), u.data() + x.size(), x.size(), round);
    return detail::scaled_kernel(c, r2, round);
  });
}

Matrix assemble_cross_kernel(const KernelSpec &spec, const Points &A, const Points &B,
                             const FloatFormat &fmt) {
  if (A.cols() != B.cols()) throw DimensionMismatch("cross kernel: point dimensions differ");
  spec.validate(A.cols());
  const Index dim = A.cols();
  Matrix K(A.rows(), B.rows());
  with_rounding(fmt, [&](auto round) {
    const auto c = detail::make_constants(spec, round);
    const auto ua = detail::scale_points(spec, A, round);
    const auto ub = detail::scale_points(spec, B, round);
    for (Index j = 0; j < B.rows(); ++j) {
      for (Index i = 0; i < A.rows(); ++i) {
        const double r2 = detail::scaled_sq_distance(ua.data() + i * dim, ub.data() + j * dim, dim, round);
        K(i, j) = detail::scaled_kernel(c, r2, round);
      }
    }
    return 0;
  });
  return K;
}

Matrix assemble_kernel_matrix(const KernelSpec &spec, const Points &X, const FloatFormat &fmt,
                              bool with_noise) {
  if (X.rows() < 1) throw DimensionMismatch("assemble_kernel_matrix: no points");
  spec.validate(X.cols());
  const Index n = X.rows();
  const Index dim = X.cols();
  Matrix K(n, n);
  with_rounding(fmt, [&](auto round) {
    const auto c = detail::make_constants(spec, round);
    const auto u = detail::scale_points(spec, X, round);
    for (Index j = 0; j < n; ++j) {
      for (Index i = j; i < n; ++i) {
        const double r2 = detail::scaled_sq_distance(u.data() + i * dim, u.data() + j * dim, dim, round);
        const double k = detail::scaled_kernel(c, r2, round);
        K(i, j) = k;
        K(j, i) = k;
      }
      if (with_noise) K(j, j) = round(K(j, j) + c.noise_sq);
    }
    return 0;
  });
  return K;
}

SupportRadius max_representable_distance(const KernelSpec &spec, double lengthscale,
                                         const FloatFormat &fmt, ZeroThreshold threshold) {
  if (!(lengthscale > 0.0)) throw DomainError("lengthscale must be positive");
  const double eps = threshold == ZeroThreshold::MinNormal ? fmt.min_positive_normal()
                                                           : fmt.underflow_threshold();
  const double log_eps = std::log(eps);
  double d = 0.0;
  switch (spec.family) {
    case KernelFamily::Matern12:
      d = -lengthscale * log_eps;
      break;
    case KernelFamily::Rbf:
      d = lengthscale * std::sqrt(-2.0 * log_eps);
      break;
    case KernelFamily::RationalQuadratic: {
      const double alpha = spec.rq_alpha;
      d = lengthscale * std::sqrt(2.0 * alpha * (std::pow(eps, -1.0 / alpha) - 1.0));
      break;
    }
    case KernelFamily::Periodic: {
      const double arg = std::sqrt(-log_eps * spec.periodic_lambda / 2.0);
      d = arg <= 1.0 ? lengthscale * spec.period / std::numbers::pi * std::asin(arg)
                     : std::numeric_limits<double>::infinity();
      break;
    }
    case KernelFamily::Matern32:
    case KernelFamily::Matern52:
      throw UnsupportedFamily("no closed-form support radius for " + family_name(spec.family));
  }
  return {spec.family, lengthscale, fmt, d};
}

SupportRadius max_representable_distance(KernelFamily family, double lengthscale,
                                         const FloatFormat &fmt, ZeroThreshold threshold) {
  KernelSpec spec;
  spec.family = family;
  return max_representable_distance(spec, lengthscale, fmt, threshold);
}

std::vector<Index> support_mask(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                const Points &X, const FloatFormat &fmt) {
  if (x_star.size() != X.cols()) throw DimensionMismatch("support_mask: point dimensions differ");
  Points star(1, x_star.size());
  star.row(0) = x_star.transpose();
  const Matrix row = assemble_cross_kernel(spec, star, X, fmt);
  std::vector<Index> mask;
  for (Index i = 0; i < X.rows(); ++i) {
    if (row(0, i) != 0.0) mask.push_back(i);
  }
  return mask;
}

}  // namespace lpgp
