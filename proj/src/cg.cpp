#include "lpgp/cg.hpp"

#include <cmath>

#include "lpgp/errors.hpp"

namespace lpgp {

std::string status_name(CgStatus status) {
  switch (status) {
    case CgStatus::Converged:
      return "converged";
    case CgStatus::MaxIters:
      return "max_iters";
    case CgStatus::Breakdown:
      return "breakdown";
  }
  return "unknown";
}

void CgConfig::validate() const {
  if (!(tolerance > 0.0)) throw ConfigError("CG tolerance must be positive");
  if (max_iters < 1) throw ConfigError("CG max_iters must be >= 1");
}

Index SolveReport::iterations() const {
  Index most = 0;
  for (const auto &c : columns) most = std::max(most, c.iterations);
  return most;
}

CgStatus SolveReport::status() const {
  CgStatus worst = CgStatus::Converged;
  for (const auto &c : columns) {
    if (c.status == CgStatus::Breakdown) return CgStatus::Breakdown;
    if (c.status == CgStatus::MaxIters) worst = CgStatus::MaxIters;
  }
  return worst;
}

namespace {

struct Mode {
  bool log_steps;
  bool reorthogonalize;
};

struct ColumnState {
  bool active = true;
  double gamma = 0.0;
  double log_gamma = 0.0;
  std::vector<Vector> u;
  std::vector<Vector> w;
  std::vector<Vector> unit;
};

template <typename Round>
class CgRun {
 public:
  CgRun(const LinearOperator &A, const CgConfig &cfg, Mode mode, Round round)
      : A_(A), cfg_(cfg), mode_(mode), round_(round), scale_(A.output_scale()) {}

  SolveReport run(const Matrix &B, const Matrix &X0) {
    const Index n = A_.size();
    const Index m = B.cols();
    SolveReport report;
    report.columns.resize(static_cast<std::size_t>(m));
    states_.assign(static_cast<std::size_t>(m), ColumnState{});

    X_ = X0.size() == 0 ? Matrix::Zero(n, m) : quantized(X0);
    const Matrix Bs = B.unaryExpr([&](double v) { return round_(round_(v) * scale_); });
    if (X_.isZero(0.0)) {
      R_ = -Bs;
    } else {
      Matrix AX;
      try {
        A_.apply(X_, AX);
      } catch (const OverflowDetected &e) {
        for (auto &c : report.columns) break_column(c, e.what());
        report.solution = X_;
        return report;
      }
      R_ = (AX - Bs).unaryExpr([&](double v) { return round_(v); });
    }
    Z_ = Matrix::Zero(n, m);
    D_ = Matrix::Zero(n, m);

    for (Index c = 0; c < m; ++c) {
      auto &col = report.columns[c];
      const double norm = residual_norm(c);
      col.residual_history.push_back(norm);
      if (!std::isfinite(norm)) {
        break_column(col, "non-finite initial residual");
        states_[c].active = false;
      } else if (norm <= cfg_.tolerance) {
        col.status = CgStatus::Converged;
        states_[c].active = false;
      } else if (!start_direction(c, col)) {
        states_[c].active = false;
      }
    }

    for (Index iter = 0;; ++iter) {
      std::vector<Index> active;
      for (Index c = 0; c < m; ++c) {
        if (states_[c].active) active.push_back(c);
      }
      if (active.empty()) break;

      Matrix D(n, static_cast<Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) D.col(j) = D_.col(active[j]);
      Matrix AD;
      try {
        A_.apply(D, AD);
      } catch (const OverflowDetected &e) {
        for (Index c : active) {
          break_column(report.columns[c], e.what());
          states_[c].active = false;
        }
        break;
      }
      for (std::size_t j = 0; j < active.size(); ++j) {
        step(active[j], AD.col(static_cast<Index>(j)), report.columns[active[j]]);
      }
      if (cfg_.observer) cfg_.observer(iter + 1, X_);
    }

    report.solution = X_;
    if (cfg_.record_basis) {
      for (Index c = 0; c < m; ++c) {
        const auto &unit = states_[c].unit;
        Matrix basis(n, static_cast<Index>(unit.size()));
        for (std::size_t j = 0; j < unit.size(); ++j) basis.col(j) = unit[j];
        report.columns[c].basis = basis;
      }
    }
    return report;
  }

 private:
  Matrix quantized(const Matrix &M) const {
    return M.unaryExpr([&](double v) { return round_(v); });
  }

  double residual_norm(Index c) const { return R_.col(c).norm() / scale_; }

  double format_dot(const Eigen::Ref<const Vector> &a, const Eigen::Ref<const Vector> &b) const {
    double acc = 0.0;
    for (Index i = 0; i < a.size(); ++i) acc = round_(acc + round_(a(i) * b(i)));
    return acc;
  }

  Vector precondition(Index c) const {
    if (!cfg_.preconditioner) return R_.col(c);
    return cfg_.preconditioner->apply(Vector(R_.col(c))).unaryExpr([&](double v) { return round_(v); });
  }

  static void break_column(ColumnReport &col, const std::string &reason) {
    col.status = CgStatus::Breakdown;
    col.breakdown_reason = reason;
  }

  // gamma = r^T z for the current residual; false (and Breakdown) when it is
  // not a positive finite number.
  bool update_gamma(Index c, ColumnReport &col, double &gamma, double &log_gamma) {
    if (mode_.log_steps) {
      const SignedLogValue g = lse_dot(span_of(R_, c), span_of(Z_, c));
      if (g.sign != LogSign::Positive || !std::isfinite(g.log_magnitude)) {
        break_column(col, "log r^T z has non-positive sign");
        return false;
      }
      log_gamma = g.log_magnitude;
      gamma = std::exp(log_gamma);
      return true;
    }
    gamma = format_dot(R_.col(c), Z_.col(c));
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      break_column(col, "r^T z is not positive and finite");
      return false;
    }
    return true;
  }

  static std::span<const double> span_of(const Matrix &M, Index c) {
    return {M.col(c).data(), static_cast<std::size_t>(M.rows())};
  }

  void remember_residual(Index c) {
    if (!mode_.reorthogonalize && !cfg_.record_basis) return;
    auto &st = states_[c];
    const Vector r = R_.col(c);
    const double rnorm = r.norm();
    if (cfg_.record_basis && rnorm > 0.0) st.unit.push_back(r / rnorm);
    if (!mode_.reorthogonalize) return;
    if (cfg_.reorth_inner == ReorthInnerProduct::Euclidean || !cfg_.preconditioner) {
      if (rnorm > 0.0) {
        st.u.push_back(r / rnorm);
        st.w.push_back(st.u.back());
      }
      return;
    }
    const Vector z = Z_.col(c);
    const double g = r.dot(z);
    if (g > 0.0 && std::isfinite(g)) {
      const double root = std::sqrt(g);
      st.u.push_back(r / root);
      st.w.push_back(z / root);
    }
  }

  bool start_direction(Index c, ColumnReport &col) {
    Z_.col(c) = precondition(c);
    D_.col(c) = -Z_.col(c);
    auto &st = states_[c];
    if (!update_gamma(c, col, st.gamma, st.log_gamma)) return false;
    remember_residual(c);
    return true;
  }

  void step(Index c, const Eigen::Ref<const Vector> &ad, ColumnReport &col) {
    auto &st = states_[c];
    auto stop = [&](const std::string &reason) {
      break_column(col, reason);
      st.active = false;
    };

    double alpha;
    if (mode_.log_steps) {
      const SignedLogValue dad =
          lse_dot(span_of(D_, c), {ad.data(), static_cast<std::size_t>(ad.size())});
      if (dad.sign != LogSign::Positive) return stop("log d^T A d has non-positive sign");
      alpha = round_(std::exp(st.log_gamma - dad.log_magnitude));
    } else {
      const double dad = format_dot(D_.col(c), ad);
      if (!(dad > 0.0) || !std::isfinite(dad)) return stop("d^T A d is not positive and finite");
      alpha = round_(st.gamma / dad);
    }
    if (!std::isfinite(alpha)) return stop("step size is not finite");
    col.alphas.push_back(alpha);

    for (Index i = 0; i < X_.rows(); ++i) {
      X_(i, c) = round_(X_(i, c) + round_(alpha * D_(i, c)));
      R_(i, c) = round_(R_(i, c) + round_(alpha * ad(i)));
    }
    if (mode_.reorthogonalize) {
      Vector r = R_.col(c);
      for (std::size_t j = 0; j < st.u.size(); ++j) r -= st.w[j].dot(r) * st.u[j];
      R_.col(c) = r.unaryExpr([&](double v) { return round_(v); });
    }
    ++col.iterations;

    const double norm = residual_norm(c);
    col.residual_history.push_back(norm);
    if (!std::isfinite(norm) || !X_.col(c).allFinite()) return stop("non-finite iterate");
    if (norm <= cfg_.tolerance) {
      col.status = CgStatus::Converged;
      st.active = false;
      return;
    }
    if (col.iterations >= cfg_.max_iters) {
      col.status = CgStatus::MaxIters;
      st.active = false;
      return;
    }

    Z_.col(c) = precondition(c);
    double gamma_new = 0.0;
    double log_gamma_new = 0.0;
    if (!update_gamma(c, col, gamma_new, log_gamma_new)) {
      st.active = false;
      return;
    }
    const double beta = mode_.log_steps ? round_(std::exp(log_gamma_new - st.log_gamma))
                                        : round_(gamma_new / st.gamma);
    if (!std::isfinite(beta)) return stop("beta is not finite");
    col.betas.push_back(beta);
    for (Index i = 0; i < D_.rows(); ++i) {
      D_(i, c) = round_(-Z_(i, c) + round_(beta * D_(i, c)));
    }
    st.gamma = gamma_new;
    st.log_gamma = log_gamma_new;
    remember_residual(c);
  }

  const LinearOperator &A_;
  const CgConfig &cfg_;
  Mode mode_;
  Round round_;
  double scale_;
  Matrix X_, R_, Z_, D_;
  std::vector<ColumnState> states_;
};

SolveReport run_cg(const LinearOperator &A, const Matrix &B, const Matrix &X0, const CgConfig &cfg,
                   Mode mode) {
  cfg.validate();
  if (B.rows() != A.size()) throw DimensionMismatch("CG: right-hand side length mismatch");
  if (B.cols() < 1) throw DimensionMismatch("CG: no right-hand sides");
  if (X0.size() != 0 && (X0.rows() != B.rows() || X0.cols() != B.cols())) {
    throw DimensionMismatch("CG: initial guess shape mismatch");
  }
  if (cfg.preconditioner && cfg.preconditioner->size() != A.size()) {
    throw DimensionMismatch("CG: preconditioner size mismatch");
  }
  return with_rounding(cfg.compute_format, [&](auto round) {
    return CgRun<decltype(round)>(A, cfg, mode, round).run(B, X0);
  });
}

}  // namespace

SolveReport cg_standard(const LinearOperator &A, const Vector &b, const Vector &x0,
                        const CgConfig &cfg) {
  return run_cg(A, b, x0, cfg, {false, false});
}

SolveReport cg_stable(const LinearOperator &A, const Vector &b, const Vector &x0,
                      const CgConfig &cfg) {
  return run_cg(A, b, x0, cfg, {cfg.log_scale_steps, cfg.reorthogonalize});
}

SolveReport cg_batched(const LinearOperator &A, const Matrix &B, const CgConfig &cfg,
                       const Matrix &x0) {
  return run_cg(A, B, x0, cfg, {cfg.log_scale_steps, cfg.reorthogonalize});
}

}  // namespace lpgp
