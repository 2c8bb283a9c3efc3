#include "lpgp/preconditioner.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "lpgp/errors.hpp"

namespace lpgp {

PivotedCholeskyFactor pivoted_cholesky(const RowProvider &row, const Vector &diag, Index rank,
                                       double sigma_sq, const PivotedCholeskyOptions &options) {
  const Index n = diag.size();
  if (rank < 0 || rank > n) throw ConfigError("pivoted_cholesky: rank must lie in [0, N]");
  if (!(sigma_sq > 0.0)) throw ConfigError("pivoted_cholesky: sigma_sq must be positive");

  PivotedCholeskyFactor factor;
  factor.sigma_sq = sigma_sq;
  Matrix L = Matrix::Zero(n, rank);
  if (n == 0 || rank == 0) {
    factor.L = L;
    return factor;
  }

  with_rounding(options.format, [&](auto round) {
    Vector d = diag.unaryExpr([&](double v) { return round(v); });
    const double max_diag = d.maxCoeff();
    const double negative_tol = -1e-8 * std::abs(max_diag);
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    Index m = 0;
    for (; m < rank; ++m) {
      Index p = -1;
      for (Index i = 0; i < n; ++i) {
        if (!taken[i] && (p < 0 || d(i) > d(p))) p = i;
      }
      if (d(p) < negative_tol) {
        throw NotPositiveDefinite("pivoted_cholesky: negative pivot residual " +
                                  std::to_string(d(p)));
      }
      if (!(d(p) > options.stop_tolerance * max_diag)) break;

      const double pivot = round(std::sqrt(d(p)));
      const Vector kp = row(p);
      if (kp.size() != n) throw DimensionMismatch("pivoted_cholesky: row has wrong length");
      for (Index i = 0; i < n; ++i) {
        if (taken[i] || i == p) continue;
        double s = round(kp(i));
        for (Index j = 0; j < m; ++j) s = round(s - round(L(i, j) * L(p, j)));
        const double lij = round(s / pivot);
        L(i, m) = lij;
        d(i) = round(d(i) - round(lij * lij));
      }
      L(p, m) = pivot;
      d(p) = 0.0;
      taken[p] = 1;
      factor.pivots.push_back(p);
    }
    factor.L = L.leftCols(m);
    return 0;
  });
  return factor;
}

PivotedCholeskyFactor kernel_pivoted_cholesky(const KernelSpec &spec, const Points &X, Index rank,
                                              const PivotedCholeskyOptions &options) {
  spec.validate(X.cols());
  const Vector diag = Vector::Constant(X.rows(), spec.outputscale_sq);
  auto row = [&](Index i) -> Vector {
    return assemble_cross_kernel(spec, X.row(i), X, options.format).row(0).transpose();
  };
  return pivoted_cholesky(row, diag, rank, spec.noise_sq, options);
}

WoodburyPreconditioner::WoodburyPreconditioner(PivotedCholeskyFactor factor, FloatFormat format)
    : factor_(std::move(factor)), format_(format) {
  if (!(factor_.sigma_sq > 0.0)) throw ConfigError("preconditioner needs sigma_sq > 0");
  const Index k = factor_.rank();
  const Matrix &L = factor_.L;
  inner_chol_ = Matrix::Zero(k, k);
  with_rounding(format_, [&](auto round) {
    const double inv_s2 = round(1.0 / factor_.sigma_sq);
    Matrix C(k, k);
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b <= a; ++b) {
        double dot = 0.0;
        for (Index i = 0; i < L.rows(); ++i) dot = round(dot + round(L(i, a) * L(i, b)));
        C(a, b) = round((a == b ? 1.0 : 0.0) + round(inv_s2 * dot));
      }
    }
    for (Index j = 0; j < k; ++j) {
      double s = C(j, j);
      for (Index p = 0; p < j; ++p) s = round(s - round(inner_chol_(j, p) * inner_chol_(j, p)));
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw InnerSolveFailed("inner Cholesky failed at column " + std::to_string(j));
      }
      const double piv = round(std::sqrt(s));
      inner_chol_(j, j) = piv;
      for (Index i = j + 1; i < k; ++i) {
        double t = C(i, j);
        for (Index p = 0; p < j; ++p) t = round(t - round(inner_chol_(i, p) * inner_chol_(j, p)));
        inner_chol_(i, j) = round(t / piv);
      }
    }
    return 0;
  });
}

Vector WoodburyPreconditioner::apply(const Vector &w) const {
  if (w.size() != size()) throw DimensionMismatch("preconditioner: input length mismatch");
  const Index n = size();
  const Index k = factor_.rank();
  const Matrix &L = factor_.L;
  Vector out(n);
  with_rounding(format_, [&](auto round) {
    const double inv_s2 = round(1.0 / factor_.sigma_sq);
    const double inv_s4 = round(inv_s2 * inv_s2);
    Vector wq = w.unaryExpr([&](double v) { return round(v); });
    Vector t(k);
    for (Index a = 0; a < k; ++a) {
      double dot = 0.0;
      for (Index i = 0; i < n; ++i) dot = round(dot + round(L(i, a) * wq(i)));
      t(a) = dot;
    }
    for (Index i = 0; i < k; ++i) {
      double s = t(i);
      for (Index p = 0; p < i; ++p) s = round(s - round(inner_chol_(i, p) * t(p)));
      t(i) = round(s / inner_chol_(i, i));
    }
    for (Index i = k - 1; i >= 0; --i) {
      double s = t(i);
      for (Index p = i + 1; p < k; ++p) s = round(s - round(inner_chol_(p, i) * t(p)));
      t(i) = round(s / inner_chol_(i, i));
    }
    for (Index i = 0; i < n; ++i) {
      double u = 0.0;
      for (Index a = 0; a < k; ++a) u = round(u + round(L(i, a) * t(a)));
      out(i) = round(round(inv_s2 * wq(i)) - round(inv_s4 * u));
    }
    return 0;
  });
  return out;
}

Matrix WoodburyPreconditioner::apply(const Matrix &W) const {
  Matrix out(W.rows(), W.cols());
  for (Index c = 0; c < W.cols(); ++c) out.col(c) = apply(Vector(W.col(c)));
  return out;
}

Vector precond_apply(const PivotedCholeskyFactor &factor, const Vector &w, FloatFormat format) {
  return WoodburyPreconditioner(factor, format).apply(w);
}

DirectSolveResult direct_woodbury_solve(const KernelSpec &spec, const Points &X, const Vector &b,
                                        Index rank, const FloatFormat &fmt) {
  if (b.size() != X.rows()) throw DimensionMismatch("direct_woodbury_solve: rhs length mismatch");
  DirectSolveResult result;
  try {
    PivotedCholeskyOptions options;
    options.format = fmt;
    WoodburyPreconditioner solver(kernel_pivoted_cholesky(spec, X, rank, options), fmt);
    result.x = solver.apply(b);
  } catch (const NumericalError &) {
    result.x = Vector::Constant(b.size(), std::numeric_limits<double>::quiet_NaN());
  }
  if (!result.x.allFinite()) {
    result.residual_norm = std::numeric_limits<double>::infinity();
    return result;
  }
  const Matrix K = assemble_kernel_matrix(spec, X, FloatFormat::fp64(), true);
  result.residual_norm = (K * result.x - b).norm() / b.norm();
  return result;
}

void save_npy(const std::string &path, const Matrix &M) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  std::ostringstream header;
  header << "{'descr': '<f8', 'fortran_order': True, 'shape': (" << M.rows() << ", " << M.cols()
         << "), }";
  std::string h = header.str();
  const std::size_t total = 10 + h.size() + 1;
  h.append((64 - total % 64) % 64, ' ');
  h.push_back('\n');
  const char magic[] = "\x93NUMPY\x01\x00";
  out.write(magic, 8);
  const auto len = static_cast<std::uint16_t>(h.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  // Eigen's default storage is column-major, matching fortran_order.
  out.write(reinterpret_cast<const char *>(M.data()),
            static_cast<std::streamsize>(sizeof(double) * M.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

Matrix load_npy(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw ConfigError("'" + path + "' is not .npy");
  unsigned char len_bytes[2];
  in.read(reinterpret_cast<char *>(len_bytes), 2);
  const std::size_t len = len_bytes[0] | (static_cast<std::size_t>(len_bytes[1]) << 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (header.find("'<f8'") == std::string::npos) throw ConfigError("npy: only <f8 is supported");
  const bool fortran = header.find("'fortran_order': True") != std::string::npos;
  std::smatch match;
  static const std::regex shape_re(R"('shape': \((\d+), (\d+)\))");
  if (!std::regex_search(header, match, shape_re)) throw ConfigError("npy: expected a 2-D shape");
  const Index rows = std::stol(match[1]);
  const Index cols = std::stol(match[2]);
  std::vector<double> data(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char *>(data.data()), static_cast<std::streamsize>(sizeof(double) * data.size()));
  if (!in) throw ConfigError("npy: truncated payload");
  if (fortran) return Eigen::Map<Matrix>(data.data(), rows, cols);
  return Eigen::Map<RowMatrix>(data.data(), rows, cols);
}

}  // namespace lpgp
