#ifndef LPGP_MVM_HPP
#define LPGP_MVM_HPP

#include <span>
#include <vector>

#include "lpgp/kernels.hpp"
#include "lpgp/precision.hpp"
#include "lpgp/types.hpp"

namespace lpgp {

enum class Accumulation {
  // In-block partials and the running total both in the compute format.
  BlockSameFormat,
  // In-block partials in the compute format, block partials summed in
  // accumulation_format, result cast back.
  BlockWiderFormat,
  // Kahan-compensated running sum over every term, compute format only.
  KahanSameFormat,
};

std::string accumulation_name(Accumulation acc);
Accumulation parse_accumulation(std::string_view name);

struct MvmPolicy {
  Index block_size = 64;
  FloatFormat compute_format = FloatFormat::fp32();
  Accumulation accumulation = Accumulation::BlockWiderFormat;
  FloatFormat accumulation_format = FloatFormat::fp32();
  // Multiply inputs by N^{-1/2} before the reduction; results stay scaled.
  bool downscale = false;

  void validate() const;

  static MvmPolicy exact() {
    return {64, FloatFormat::fp64(), Accumulation::BlockSameFormat, FloatFormat::fp64(), false};
  }
};

// Square operator seen by the solvers. apply() returns output_scale() * M V
// for the logical matrix M, column by column.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index size() const = 0;
  virtual void apply(const Matrix &in, Matrix &out) const = 0;
  virtual double output_scale() const { return 1.0; }
};

// Explicit matrix; products use a sequential dot per row rounded in fmt.
class DenseOperator : public LinearOperator {
 public:
  explicit DenseOperator(Matrix A, FloatFormat fmt = FloatFormat::fp64());
  Index size() const override { return A_.rows(); }
  void apply(const Matrix &in, Matrix &out) const override;
  const Matrix &matrix() const { return A_; }

 private:
  Matrix A_;
  FloatFormat fmt_;
};

// a^2 dK/dlog(l_p) V for each lengthscale parameter and a^2 K V (the
// outputscale derivative), both for the operator's (possibly downscaled)
// input.
struct DerivativeProducts {
  std::vector<Matrix> lengthscale;
  Matrix outputscale;
};

/*
 * Matrix-free K~ = a^2 K + sigma^2 I over a fixed point set.
 *
 * Each output row is reduced in ascending block order and ascending in-block
 * order, kernel entries are produced in the compute format and exact-zero
 * kernel entries are skipped. Results are bit-reproducible. Up to
 * kCachedPoints points the rounded entries of a^2 K are computed once and
 * reused by apply(); larger operators recompute them on every product.
 */
class KernelOperator : public LinearOperator {
 public:
  static constexpr Index kCachedPoints = 4096;

  KernelOperator(KernelSpec spec, Points X, MvmPolicy policy);

  Index size() const override { return X_.rows(); }
  const KernelSpec &spec() const { return spec_; }
  const Points &points() const { return X_; }
  const MvmPolicy &policy() const { return policy_; }

  // Throws OverflowDetected when any output is non-finite.
  void apply(const Matrix &in, Matrix &out) const override;
  double output_scale() const override { return input_scale_; }

  DerivativeProducts derivative_products(const Matrix &in) const;

  // a^2 K(X_star, X) V, no noise, no downscaling.
  Matrix cross_apply(const Points &X_star, const Matrix &V) const;

 private:
  KernelSpec spec_;
  Points X_;
  MvmPolicy policy_;
  double input_scale_ = 1.0;
  // Coordinates over lengthscales in the compute format, row-major.
  std::vector<double> scaled_;
  // Rounded a^2 k(x_i, x_j), row-major; empty above kCachedPoints.
  std::vector<double> cache_;
};

Vector block_mvm(const KernelOperator &op, const Vector &v);

struct TruncatedDot {
  double value = 0.0;
  // Number of kernel pairs evaluated in the reduction.
  Index evaluated_pairs = 0;
};

/*
 * Predictive-mean contribution sum_i a^2 k(x*, x_i) v_i using only the points
 * inside the support mask, reduced with the same block boundaries as the full
 * product. The first overload computes the mask in the policy's compute
 * format.
 */
TruncatedDot truncated_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                   const Points &X, const Vector &v, const MvmPolicy &policy);
TruncatedDot truncated_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                   const Points &X, const Vector &v, const MvmPolicy &policy,
                                   std::span<const Index> mask);

// Same reduction over every point.
TruncatedDot full_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                              const Points &X, const Vector &v, const MvmPolicy &policy);

}  // namespace lpgp

#endif
