#include "lpgp/mvm.hpp"

#include <cmath>
#include <type_traits>

#include "lpgp/detail/kernel_eval.hpp"
#include "lpgp/errors.hpp"

namespace lpgp {

std::string accumulation_name(Accumulation acc) {
  switch (acc) {
    case Accumulation::BlockSameFormat:
      return "block-same";
    case Accumulation::BlockWiderFormat:
      return "block-wider";
    case Accumulation::KahanSameFormat:
      return "kahan";
  }
  return "unknown";
}

Accumulation parse_accumulation(std::string_view name) {
  if (name == "block-same") return Accumulation::BlockSameFormat;
  if (name == "block-wider") return Accumulation::BlockWiderFormat;
  if (name == "kahan") return Accumulation::KahanSameFormat;
  throw ConfigError("unknown accumulation '" + std::string(name) +
                    "' (expected block-same, block-wider or kahan)");
}

void MvmPolicy::validate() const {
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (accumulation == Accumulation::BlockWiderFormat &&
      (accumulation_format.mantissa_bits < compute_format.mantissa_bits ||
       accumulation_format.exponent_bits < compute_format.exponent_bits)) {
    throw ConfigError("accumulation format " + accumulation_format.name() +
                      " is narrower than compute format " + compute_format.name());
  }
}

namespace {

template <Accumulation kind_, typename Round, typename Wide>
class RowAccumulator {
 public:
  RowAccumulator(Index slots, Round round, Wide wide)
      : round_(round), wide_(wide), partial_(slots, 0.0), total_(slots, 0.0),
        comp_(kind_ == Accumulation::KahanSameFormat ? slots : 0, 0.0) {}

  void add(Index s, double term) {
    if constexpr (kind_ == Accumulation::KahanSameFormat) {
      const double y = round_(term - comp_[s]);
      const double t = round_(total_[s] + y);
      comp_[s] = round_(round_(t - total_[s]) - y);
      total_[s] = t;
    } else {
      partial_[s] = round_(partial_[s] + term);
    }
  }

  void end_block() {
    if constexpr (kind_ == Accumulation::KahanSameFormat) return;
    for (std::size_t s = 0; s < total_.size(); ++s) {
      if constexpr (kind_ == Accumulation::BlockWiderFormat) {
        total_[s] = wide_(total_[s] + partial_[s]);
      } else {
        total_[s] = round_(total_[s] + partial_[s]);
      }
      partial_[s] = 0.0;
    }
  }

  double result(Index s) const { return round_(total_[s]); }

 private:
  Round round_;
  Wide wide_;
  std::vector<double> partial_;
  std::vector<double> total_;
  std::vector<double> comp_;
};

// Visits the column indices of one row in block order, calling
// end_block() whenever a block boundary is crossed.
template <typename Visit, typename EndBlock>
void for_each_column(Index ncols, std::span<const Index> subset, Index block_size, Visit &&visit,
                     EndBlock &&end_block) {
  if (subset.empty()) {
    for (Index start = 0; start < ncols; start += block_size) {
      const Index stop = std::min(ncols, start + block_size);
      for (Index j = start; j < stop; ++j) visit(j);
      end_block();
    }
    return;
  }
  Index current = subset.front() / block_size;
  for (Index j : subset) {
    if (j / block_size != current) {
      end_block();
      current = j / block_size;
    }
    visit(j);
  }
  end_block();
}

// out(i, :) = sum_j a^2 k(row_i, col_j) V(j, :) over the selected columns.
template <Accumulation Kind, typename Round, typename Wide>
void reduce_rows(const detail::KernelConstants &c, const std::vector<double> &u_rows,
                 Index nrows, const std::vector<double> &u_cols, Index ncols, Index dim,
                 const RowMatrix &V, const MvmPolicy &policy, std::span<const Index> subset,
                 Round round, Wide wide, RowMatrix &out, Index *pairs,
                 const double *cached = nullptr) {
  const Index nrhs = V.cols();
  Index evaluated = 0;
#pragma omp parallel for schedule(static) reduction(+ : evaluated)
  for (Index i = 0; i < nrows; ++i) {
    RowAccumulator<Kind, Round, Wide> acc(nrhs, round, wide);
    const double *ui = u_rows.data() + i * dim;
    for_each_column(
        ncols, subset, policy.block_size,
        [&](Index j) {
          ++evaluated;
          double k;
          if (cached) {
            k = cached[i * ncols + j];
          } else {
            const double r2 = detail::scaled_sq_distance(ui, u_cols.data() + j * dim, dim, round);
            k = detail::scaled_kernel(c, r2, round);
          }
          if (k == 0.0) return;
          const double *vj = V.data() + j * nrhs;
          for (Index col = 0; col < nrhs; ++col) acc.add(col, round(k * vj[col]));
        },
        [&] { acc.end_block(); });
    for (Index col = 0; col < nrhs; ++col) out(i, col) = acc.result(col);
  }
  if (pairs) *pairs = evaluated;
}

// Calls fn(round, wide, kind) with the policy's rounding functors and the
// accumulation kind as a compile-time constant.
template <typename Fn>
void with_policy(const MvmPolicy &policy, Fn &&fn) {
  with_rounding(policy.compute_format, [&](auto round) {
    return with_rounding(policy.accumulation_format, [&](auto wide) {
      using A = Accumulation;
      switch (policy.accumulation) {
        case A::BlockSameFormat:
          fn(round, wide, std::integral_constant<A, A::BlockSameFormat>{});
          break;
        case A::BlockWiderFormat:
          fn(round, wide, std::integral_constant<A, A::BlockWiderFormat>{});
          break;
        case A::KahanSameFormat:
          fn(round, wide, std::integral_constant<A, A::KahanSameFormat>{});
          break;
      }
      return 0;
    });
  });
}

void check_finite(const RowMatrix &out) {
  if (!out.allFinite()) {
    throw OverflowDetected("kernel MVM produced a non-finite entry; enable downscaling");
  }
}

}  // namespace

DenseOperator::DenseOperator(Matrix A, FloatFormat fmt) : A_(std::move(A)), fmt_(fmt) {
  if (A_.rows() != A_.cols()) throw DimensionMismatch("DenseOperator needs a square matrix");
}

void DenseOperator::apply(const Matrix &in, Matrix &out) const {
  if (in.rows() != A_.rows()) throw DimensionMismatch("DenseOperator: input length mismatch");
  if (fmt_.is_fp64()) {
    out.noalias() = A_ * in;
    return;
  }
  out.resize(in.rows(), in.cols());
  with_rounding(fmt_, [&](auto round) {
    for (Index c = 0; c < in.cols(); ++c) {
      for (Index i = 0; i < A_.rows(); ++i) {
        double acc = 0.0;
        for (Index j = 0; j < A_.cols(); ++j) acc = round(acc + round(A_(i, j) * in(j, c)));
        out(i, c) = acc;
      }
    }
  });
}

KernelOperator::KernelOperator(KernelSpec spec, Points X, MvmPolicy policy)
    : spec_(std::move(spec)), X_(std::move(X)), policy_(policy) {
  if (X_.rows() < 1) throw DimensionMismatch("KernelOperator: no points");
  spec_.validate(X_.cols());
  policy_.validate();
  if (policy_.accumulation != Accumulation::BlockWiderFormat) {
    policy_.accumulation_format = policy_.compute_format;
  }
  scaled_ = with_rounding(policy_.compute_format,
                          [&](auto round) { return detail::scale_points(spec_, X_, round); });
  if (policy_.downscale) {
    input_scale_ = quantize(1.0 / std::sqrt(static_cast<double>(X_.rows())), policy_.compute_format);
  }
  const Index n = X_.rows();
  if (n > kCachedPoints) return;
  const Index dim = X_.cols();
  cache_.resize(static_cast<std::size_t>(n * n));
  with_rounding(policy_.compute_format, [&](auto round) {
    const auto c = detail::make_constants(spec_, round);
    // Rounding is sign-symmetric, so k(x_i, x_j) and k(x_j, x_i) agree bit for bit.
#pragma omp parallel for schedule(dynamic, 16)
    for (Index i = 0; i < n; ++i) {
      const double *ui = scaled_.data() + i * dim;
      for (Index j = i; j < n; ++j) {
        const double r2 = detail::scaled_sq_distance(ui, scaled_.data() + j * dim, dim, round);
        const double k = detail::scaled_kernel(c, r2, round);
        cache_[i * n + j] = k;
        cache_[j * n + i] = k;
      }
    }
    return 0;
  });
}

void KernelOperator::apply(const Matrix &in, Matrix &out) const {
  if (in.rows() != size()) throw DimensionMismatch("KernelOperator: input length mismatch");
  const Index n = size();
  const Index dim = X_.cols();
  RowMatrix result(n, in.cols());
  with_policy(policy_, [&](auto round, auto wide, auto kind) {
    const auto c = detail::make_constants(spec_, round);
    RowMatrix V(n, in.cols());
    for (Index i = 0; i < n; ++i) {
      for (Index col = 0; col < in.cols(); ++col) {
        V(i, col) = round(round(in(i, col)) * input_scale_);
      }
    }
    reduce_rows<kind.value>(c, scaled_, n, scaled_, n, dim, V, policy_, {}, round, wide, result, nullptr,
                            cache_.empty() ? nullptr : cache_.data());
    for (Index i = 0; i < n; ++i) {
      for (Index col = 0; col < in.cols(); ++col) {
        result(i, col) = round(result(i, col) + round(c.noise_sq * V(i, col)));
      }
    }
  });
  check_finite(result);
  out = result;
}

DerivativeProducts KernelOperator::derivative_products(const Matrix &in) const {
  if (in.rows() != size()) throw DimensionMismatch("derivative_products: input length mismatch");
  const Index n = size();
  const Index dim = X_.cols();
  const Index nrhs = in.cols();
  const Index nls = static_cast<Index>(spec_.lengthscales.size());
  const bool ard = spec_.is_ard();
  // Slot layout: lengthscale p, column c -> p * nrhs + c; outputscale last.
  const Index slots = (nls + 1) * nrhs;
  RowMatrix result(n, slots);

  with_policy(policy_, [&](auto round, auto wide, auto kind) {
    const auto c = detail::make_constants(spec_, round);
    RowMatrix V(n, nrhs);
    for (Index i = 0; i < n; ++i) {
      for (Index col = 0; col < nrhs; ++col) V(i, col) = round(round(in(i, col)) * input_scale_);
    }
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) {
      RowAccumulator<kind.value, decltype(round), decltype(wide)> acc(slots, round, wide);
      std::vector<double> sq(static_cast<std::size_t>(dim));
      const double *ui = scaled_.data() + i * dim;
      for_each_column(
          n, {}, policy_.block_size,
          [&](Index j) {
            const double *uj = scaled_.data() + j * dim;
            double r2 = 0.0;
            for (Index d = 0; d < dim; ++d) {
              const double diff = round(ui[d] - uj[d]);
              sq[d] = round(diff * diff);
              r2 = round(r2 + sq[d]);
            }
            const double k = detail::kernel_profile(c, r2, round);
            const double kv = round(c.outputscale_sq * k);
            const double g = round(c.outputscale_sq * detail::lengthscale_factor(c, r2, k, round));
            if (kv == 0.0 && g == 0.0) return;
            const double *vj = V.data() + j * nrhs;
            for (Index p = 0; p < nls; ++p) {
              const double dk = round(g * (ard ? sq[p] : r2));
              if (dk == 0.0) continue;
              for (Index col = 0; col < nrhs; ++col) acc.add(p * nrhs + col, round(dk * vj[col]));
            }
            if (kv != 0.0) {
              for (Index col = 0; col < nrhs; ++col) acc.add(nls * nrhs + col, round(kv * vj[col]));
            }
          },
          [&] { acc.end_block(); });
      for (Index s = 0; s < slots; ++s) result(i, s) = acc.result(s);
    }
  });
  check_finite(result);

  DerivativeProducts products;
  for (Index p = 0; p < nls; ++p) products.lengthscale.emplace_back(result.middleCols(p * nrhs, nrhs));
  products.outputscale = result.middleCols(nls * nrhs, nrhs);
  return products;
}

Matrix KernelOperator::cross_apply(const Points &X_star, const Matrix &V) const {
  if (X_star.cols() != X_.cols()) throw DimensionMismatch("cross_apply: point dimensions differ");
  if (V.rows() != size()) throw DimensionMismatch("cross_apply: input length mismatch");
  const Index dim = X_.cols();
  RowMatrix result(X_star.rows(), V.cols());
  with_policy(policy_, [&](auto round, auto wide, auto kind) {
    const auto c = detail::make_constants(spec_, round);
    const auto u_star = detail::scale_points(spec_, X_star, round);
    RowMatrix Vq = V.unaryExpr([&](double x) { return round(x); });
    reduce_rows<kind.value>(c, u_star, X_star.rows(), scaled_, size(), dim, Vq, policy_, {}, round, wide, result,
                nullptr);
  });
  check_finite(result);
  return result;
}

Vector block_mvm(const KernelOperator &op, const Vector &v) {
  Matrix out;
  op.apply(v, out);
  return out.col(0);
}

namespace {

TruncatedDot predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                         const Points &X, const Vector &v, const MvmPolicy &policy,
                         std::span<const Index> subset, bool use_subset) {
  if (x_star.size() != X.cols()) throw DimensionMismatch("predict_dot: point dimensions differ");
  if (v.size() != X.rows()) throw DimensionMismatch("predict_dot: cache length mismatch");
  spec.validate(X.cols());
  policy.validate();
  MvmPolicy p = policy;
  if (p.accumulation != Accumulation::BlockWiderFormat) p.accumulation_format = p.compute_format;
  TruncatedDot out;
  if (use_subset && subset.empty()) return out;
  Points star(1, X.cols());
  star.row(0) = x_star.transpose();
  with_policy(p, [&](auto round, auto wide, auto kind) {
    const auto c = detail::make_constants(spec, round);
    const auto u_star = detail::scale_points(spec, star, round);
    const auto u = detail::scale_points(spec, X, round);
    RowMatrix V = v.unaryExpr([&](double x) { return round(x); });
    RowMatrix result(1, 1);
    reduce_rows<kind.value>(c, u_star, 1, u, X.rows(), X.cols(), V, p, subset, round, wide, result,
                &out.evaluated_pairs);
    out.value = result(0, 0);
  });
  return out;
}

}  // namespace

TruncatedDot truncated_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                   const Points &X, const Vector &v, const MvmPolicy &policy) {
  const auto mask = support_mask(spec, x_star, X, policy.compute_format);
  return predict_dot(spec, x_star, X, v, policy, mask, true);
}

TruncatedDot truncated_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                                   const Points &X, const Vector &v, const MvmPolicy &policy,
                                   std::span<const Index> mask) {
  return predict_dot(spec, x_star, X, v, policy, mask, true);
}

TruncatedDot full_predict_dot(const KernelSpec &spec, const Eigen::Ref<const Vector> &x_star,
                              const Points &X, const Vector &v, const MvmPolicy &policy) {
  return predict_dot(spec, x_star, X, v, policy, {}, false);
}

}  // namespace lpgp
