#ifndef LPGP_KERNELS_HPP
#define LPGP_KERNELS_HPP

#include <string>
#include <string_view>
#include <vector>

#include "lpgp/precision.hpp"
#include "lpgp/types.hpp"

namespace lpgp {

enum class KernelFamily { Rbf, Matern12, Matern32, Matern52, RationalQuadratic, Periodic };

std::string family_name(KernelFamily family);
// "rbf", "matern12", "matern32", "matern52", "rq", "periodic".
KernelFamily parse_family(std::string_view name);

/*
 * Stationary kernel with ARD lengthscales:
 *
 *   K~(x, x') = a^2 k(r) + sigma^2 [x == x'],  r^2 = sum_d ((x_d - x'_d) / l_d)^2
 *
 * A single lengthscale is shared across every input dimension.
 */
struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  std::vector<double> lengthscales{1.0};
  double outputscale_sq = 1.0;
  double noise_sq = 0.1;
  // RationalQuadratic shape.
  double rq_alpha = 5.0;
  // Periodic: k = exp(-(2 / lambda) sin^2(pi r / period)).
  double period = 1.0;
  double periodic_lambda = 1.0;

  bool is_ard() const { return lengthscales.size() > 1; }
  double lengthscale(Index dim) const {
    return is_ard() ? lengthscales[static_cast<std::size_t>(dim)] : lengthscales.front();
  }
  double mean_lengthscale() const;

  // Throws ConfigError / DimensionMismatch.
  void validate(Index dim) const;
};

// a^2 k(x, x') rounded through fmt (noise excluded).
double eval_kernel(const KernelSpec &spec, const Eigen::Ref<const Vector> &x,
                   const Eigen::Ref<const Vector> &x_prime, const FloatFormat &fmt);

// Dense K (optionally + sigma^2 I) with every entry produced in fmt.
Matrix assemble_kernel_matrix(const KernelSpec &spec, const Points &X, const FloatFormat &fmt,
                              bool with_noise);

// Dense cross-covariance a^2 k(A_i, B_j), no noise.
Matrix assemble_cross_kernel(const KernelSpec &spec, const Points &A, const Points &B,
                             const FloatFormat &fmt);

enum class ZeroThreshold {
  // Smallest normal of the format, whether or not subnormals exist.
  MinNormal,
  // The exact magnitude below which quantize() returns zero.
  Underflow,
};

struct SupportRadius {
  KernelFamily family;
  double lengthscale;
  FloatFormat format;
  // +inf when the kernel never drops below the threshold.
  double d_max;
};

// Distance beyond which k(d) < eps in closed form. Matern32/52 have no
// closed form and throw UnsupportedFamily.
SupportRadius max_representable_distance(const KernelSpec &spec, double lengthscale,
                                         const FloatFormat &fmt,
                                         ZeroThreshold threshold = ZeroThreshold::MinNormal);
SupportRadius max_representable_distance(KernelFamily family, double lengthscale,
                                         const FloatFormat &fmt,
                                         ZeroThreshold threshold = ZeroThreshold::MinNormal);

// Indices i with eval_kernel(spec, x_star, X_i, fmt) != 0, ascending.
std::vector<Index> support_mask(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                const Points &X, const FloatFormat &fmt);

}  // namespace lpgp

#endif
