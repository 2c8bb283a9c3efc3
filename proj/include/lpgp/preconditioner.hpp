#ifndef LPGP_PRECONDITIONER_HPP
#define LPGP_PRECONDITIONER_HPP

#include <functional>
#include <string>
#include <vector>

#include "lpgp/kernels.hpp"
#include "lpgp/precision.hpp"
#include "lpgp/types.hpp"

namespace lpgp {

// K ~= L L^T with L of size N x k; every entry of L is representable in the
// format the factorization ran in.
struct PivotedCholeskyFactor {
  Matrix L;
  std::vector<Index> pivots;
  double sigma_sq = 1.0;

  Index size() const { return L.rows(); }
  Index rank() const { return L.cols(); }
};

using RowProvider = std::function<Vector(Index)>;

struct PivotedCholeskyOptions {
  FloatFormat format = FloatFormat::fp32();
  // Stop once the largest remaining diagonal residual drops below
  // stop_tolerance * max(diag).
  double stop_tolerance = 1e-10;
};

/*
 * Greedy pivoted Cholesky. Each step takes the largest remaining diagonal
 * residual as pivot, builds the column of L from the pivot row and downdates
 * the diagonal. Ties go to the smallest index. The factor may have fewer
 * than `rank` columns when the residual is exhausted.
 */
PivotedCholeskyFactor pivoted_cholesky(const RowProvider &row, const Vector &diag, Index rank,
                                       double sigma_sq, const PivotedCholeskyOptions &options = {});

// Factor of the noise-free kernel matrix; rows are generated in options.format.
PivotedCholeskyFactor kernel_pivoted_cholesky(const KernelSpec &spec, const Points &X, Index rank,
                                              const PivotedCholeskyOptions &options = {});

/*
 * P^{-1} w = s^{-2} w - s^{-4} L (I + s^{-2} L^T L)^{-1} L^T w  for P = L L^T + s^2 I.
 *
 * The k x k inner matrix is formed and Cholesky-factored once, at
 * construction. All arithmetic runs in `format`.
 */
class WoodburyPreconditioner {
 public:
  explicit WoodburyPreconditioner(PivotedCholeskyFactor factor,
                                  FloatFormat format = FloatFormat::fp32());

  const PivotedCholeskyFactor &factor() const { return factor_; }
  const FloatFormat &format() const { return format_; }
  Index size() const { return factor_.size(); }

  Vector apply(const Vector &w) const;
  Matrix apply(const Matrix &W) const;

 private:
  PivotedCholeskyFactor factor_;
  FloatFormat format_;
  // Lower Cholesky factor of I + s^{-2} L^T L, entries in format_.
  Matrix inner_chol_;
};

Vector precond_apply(const PivotedCholeskyFactor &factor, const Vector &w,
                     FloatFormat format = FloatFormat::fp32());

struct DirectSolveResult {
  Vector x;
  // ||K~ x - b|| / ||b|| against the exact fp64 K~; +inf when x is not finite.
  double residual_norm = 0.0;
};

// Treats L L^T + s^2 I as the system and applies the Woodbury formula as a
// solver, factorization included, entirely in fmt.
DirectSolveResult direct_woodbury_solve(const KernelSpec &spec, const Points &X, const Vector &b,
                                        Index rank, const FloatFormat &fmt);

/*
 * .npy (version 1.0) with little-endian float64 payload in column-major
 * order ("fortran_order": True), readable with numpy.load.
 */
void save_npy(const std::string &path, const Matrix &M);
Matrix load_npy(const std::string &path);

}  // namespace lpgp

#endif
