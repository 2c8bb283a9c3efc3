#ifndef LPGP_CG_HPP
#define LPGP_CG_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lpgp/mvm.hpp"
#include "lpgp/preconditioner.hpp"

namespace lpgp {

enum class CgStatus { Converged, MaxIters, Breakdown };

std::string status_name(CgStatus status);

enum class ReorthInnerProduct {
  // Project against past residuals in the P^{-1} inner product, the one in
  // which preconditioned CG residuals are mutually orthogonal.
  Preconditioned,
  // Plain Euclidean Gram-Schmidt on the raw residuals.
  Euclidean,
};

struct CgConfig {
  double tolerance = 1.0;
  Index max_iters = 50;
  bool reorthogonalize = true;
  bool log_scale_steps = true;
  FloatFormat compute_format = FloatFormat::fp32();
  std::shared_ptr<const WoodburyPreconditioner> preconditioner;
  ReorthInnerProduct reorth_inner = ReorthInnerProduct::Preconditioned;
  // Keep the normalized residual basis of each column in the report.
  bool record_basis = false;
  // Called after every iteration with the current (unscaled) iterates.
  std::function<void(Index iteration, const Matrix &x)> observer;

  void validate() const;
};

struct ColumnReport {
  // ||r_k||_2 in fp64 for the unscaled system, k = 0..iterations.
  std::vector<double> residual_history;
  std::vector<double> alphas;
  std::vector<double> betas;
  Index iterations = 0;
  CgStatus status = CgStatus::MaxIters;
  std::string breakdown_reason;
  // Unit-norm residual directions, one per column of the matrix, when requested.
  Matrix basis;
};

struct SolveReport {
  Matrix solution;
  std::vector<ColumnReport> columns;

  // Aggregates: largest iteration count, worst status, first column history.
  Index iterations() const;
  CgStatus status() const;
  const std::vector<double> &residual_history() const { return columns.front().residual_history; }
  double final_residual() const { return residual_history().back(); }
};

// Classic preconditioned CG with every dot product and update in the compute
// format. cfg.reorthogonalize and cfg.log_scale_steps are ignored.
SolveReport cg_standard(const LinearOperator &A, const Vector &b, const Vector &x0,
                        const CgConfig &cfg);

// Log-scale step sizes and residual re-orthogonalization, as enabled in cfg.
SolveReport cg_stable(const LinearOperator &A, const Vector &b, const Vector &x0,
                      const CgConfig &cfg);

// Independent right-hand sides sharing each MVM; columns stop individually.
// x0 defaults to zero.
SolveReport cg_batched(const LinearOperator &A, const Matrix &B, const CgConfig &cfg,
                       const Matrix &x0 = Matrix());

}  // namespace lpgp

#endif
