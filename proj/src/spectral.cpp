#include "lpgp/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "lpgp/errors.hpp"

namespace lpgp {

SpectrumReport quantized_spectrum(const KernelSpec &spec, const Points &X, const FloatFormat &fmt) {
  const Matrix K = assemble_kernel_matrix(spec, X, fmt, false);
  const Matrix sym = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw EigFailure("eigensolver did not converge");
  SpectrumReport report;
  report.eigenvalues = solver.eigenvalues().reverse();
  report.format = fmt;
  report.n = X.rows();
  return report;
}

double effective_dimension(const Vector &eigenvalues, double s) {
  if (!(s > 0.0)) throw DomainError("effective_dimension: s must be positive");
  double total = 0.0;
  for (double lambda : eigenvalues) {
    const double l = std::max(lambda, 0.0);
    total += l / (l + s);
  }
  return total;
}

EdBound quantized_ed_bound(const Vector &eigenvalues, double s, double delta,
                           const EdBoundOptions &options) {
  if (!(s > 0.0) || !(delta > 0.0)) throw DomainError("ed bound: s and delta must be positive");
  if (options.samples < 2) throw ConfigError("ed bound: need at least two samples");
  for (double lambda : eigenvalues) {
    if (!(lambda - delta + s > 0.0)) {
      throw DomainError("ed bound: lambda - delta + s must be positive for every eigenvalue");
    }
  }
  EdBound bound;
  for (double lambda : eigenvalues) {
    const double c = lambda + s + delta;
    bound.closed_form_lower += 1.0 - s / c - delta * s / (c * c);
    bound.exact += 1.0 + s / (2.0 * delta) * std::log((lambda + s - delta) / c);
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double mean = 0.0;
  double m2 = 0.0;
  for (Index k = 0; k < options.samples; ++k) {
    double sample = 0.0;
    for (double lambda : eigenvalues) {
      const double q = lambda + delta * unit(rng);
      sample += q / (q + s);
    }
    // Welford update.
    const double diff = sample - mean;
    mean += diff / static_cast<double>(k + 1);
    m2 += diff * (sample - mean);
  }
  const double var = m2 / static_cast<double>(options.samples - 1);
  bound.mc_estimate = mean;
  bound.mc_stderr = std::sqrt(var / static_cast<double>(options.samples));
  return bound;
}

Index rbf_eigen_cutoff(double a, double A, double B, double delta) {
  if (!(a > 0.0) || !(A > 0.0)) throw DomainError("rbf_eigen_cutoff: a and A must be positive");
  if (!(B > 0.0 && B < 1.0)) throw DomainError("rbf_eigen_cutoff: B must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("rbf_eigen_cutoff: delta must lie in (0, 1)");
  const double x = (std::log(delta) + 0.5 * std::log(A / (2.0 * a))) / std::log(B);
  // Values within rounding noise of an integer count as that integer.
  return static_cast<Index>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

void write_spectrum_csv(const std::string &path, const SpectrumReport &report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "index,eigenvalue\n";
  for (Index i = 0; i < report.eigenvalues.size(); ++i) out << i << ',' << report.eigenvalues(i) << '\n';
}

}  // namespace lpgp
