#ifndef LPGP_SPECTRAL_HPP
#define LPGP_SPECTRAL_HPP

#include <cstdint>
#include <string>

#include "lpgp/kernels.hpp"
#include "lpgp/precision.hpp"

namespace lpgp {

struct SpectrumReport {
  // Descending.
  Vector eigenvalues;
  FloatFormat format;
  Index n = 0;
};

// Eigenvalues of the noise-free kernel matrix assembled in fmt, computed in
// fp64 after symmetrizing (K + K^T) / 2.
SpectrumReport quantized_spectrum(const KernelSpec &spec, const Points &X, const FloatFormat &fmt);

// sum_i lambda_i / (lambda_i + s). Negative eigenvalues, which a matrix
// assembled in low precision can have, count as zero.
double effective_dimension(const Vector &eigenvalues, double s);

struct EdBound {
  // sum_i 1 - s / c_i - delta s / c_i^2 with c_i = lambda_i + s + delta. The
  // series it truncates has only negative remaining terms, so this sits
  // above `exact`, not below.
  double closed_form_lower = 0.0;
  double mc_estimate = 0.0;
  double mc_stderr = 0.0;
  // sum_i 1 + (s / 2 delta) log((lambda_i + s - delta) / (lambda_i + s + delta)),
  // the expectation the Monte Carlo estimate targets.
  double exact = 0.0;
};

struct EdBoundOptions {
  Index samples = 10000;
  std::uint64_t seed = 0;
};

/*
 * Expected effective dimension when every eigenvalue is perturbed by
 * independent U(lambda - delta, lambda + delta) noise. Requires
 * lambda_i - delta + s > 0 for every i; throws DomainError otherwise.
 */
EdBound quantized_ed_bound(const Vector &eigenvalues, double s, double delta,
                           const EdBoundOptions &options = {});

// Smallest integer k >= (log delta + log(A / (2a)) / 2) / log B.
Index rbf_eigen_cutoff(double a, double A, double B, double delta);

// "index,eigenvalue" rows with a header line.
void write_spectrum_csv(const std::string &path, const SpectrumReport &report);

}  // namespace lpgp

#endif
