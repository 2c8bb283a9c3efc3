#include "lpgp/training.hpp"

#include <algorithm>
#include <cmath>

#include "lpgp/errors.hpp"

namespace lpgp {

Vector GpModel::raw() const {
  const Index nls = static_cast<Index>(kernel.lengthscales.size());
  Vector r(nls + 2);
  for (Index p = 0; p < nls; ++p) r(p) = std::log(kernel.lengthscales[p]);
  r(nls) = std::log(kernel.outputscale_sq);
  r(nls + 1) = std::log(kernel.noise_sq);
  return r;
}

void GpModel::set_raw(const Vector &raw) {
  if (raw.size() != num_params()) throw DimensionMismatch("set_raw: wrong parameter count");
  if (!raw.allFinite()) throw NonFinite("set_raw: non-finite raw parameters");
  const Index nls = static_cast<Index>(kernel.lengthscales.size());
  for (Index p = 0; p < nls; ++p) kernel.lengthscales[p] = std::exp(raw(p));
  kernel.outputscale_sq = std::exp(raw(nls));
  kernel.noise_sq = std::max(std::exp(raw(nls + 1)), noise_floor);
}

GpModel GpModel::initial(KernelFamily family, Index dim, bool ard, double constant_mean) {
  GpModel model;
  model.kernel.family = family;
  model.kernel.lengthscales.assign(ard ? static_cast<std::size_t>(dim) : 1, 1.0);
  model.kernel.outputscale_sq = 1.0;
  model.kernel.noise_sq = 2.0;
  model.constant_mean = constant_mean;
  return model;
}

ProbeSet ProbeSet::rademacher(Index n, Index m, std::mt19937_64 &rng) {
  ProbeSet probes;
  probes.Z.resize(n, m);
  std::bernoulli_distribution coin(0.5);
  for (Index c = 0; c < m; ++c) {
    for (Index i = 0; i < n; ++i) probes.Z(i, c) = coin(rng) ? 1.0 : -1.0;
  }
  return probes;
}

LossAndGrad pseudo_loss_and_grad(const GpModel &model, const Points &X, const Vector &y,
                                 const ProbeSet &probes, const Matrix &solves,
                                 const MvmPolicy &policy) {
  const Index n = X.rows();
  const Index m = probes.count();
  if (y.size() != n || probes.Z.rows() != n || solves.rows() != n || solves.cols() != m + 1) {
    throw DimensionMismatch("pseudo-loss: expected solves of shape N x (M + 1) matching the data");
  }
  const KernelOperator op(model.kernel, X, policy);
  Matrix V(n, m + 1);
  V.col(0) = solves.col(0);
  V.rightCols(m) = probes.Z;
  const DerivativeProducts prod = op.derivative_products(V);
  const double scale = op.output_scale();

  // (1/2M) sum_j u_j^T (G z_j) - 1/2 u_0^T (G u_0) for products P = scale * G V.
  auto contract = [&](const Matrix &P) {
    double trace_term = 0.0;
    for (Index j = 1; j <= m; ++j) trace_term += solves.col(j).dot(P.col(j));
    const double data_term = solves.col(0).dot(P.col(0));
    const double trace_part = m > 0 ? trace_term / (2.0 * static_cast<double>(m)) : 0.0;
    return (trace_part - 0.5 * data_term) / scale;
  };

  const Index nls = static_cast<Index>(model.kernel.lengthscales.size());
  LossAndGrad out;
  out.grad.resize(nls + 2);
  for (Index p = 0; p < nls; ++p) out.grad(p) = contract(prod.lengthscale[p]);
  out.grad(nls) = contract(prod.outputscale);
  out.grad(nls + 1) = contract(model.kernel.noise_sq * scale * V);
  out.value = out.grad(nls) + out.grad(nls + 1);
  return out;
}

double pseudo_loss(const GpModel &model, const Points &X, const Vector &y, const ProbeSet &probes,
                   const Matrix &solves, const MvmPolicy &policy) {
  return pseudo_loss_and_grad(model, X, y, probes, solves, policy).value;
}

Vector pseudo_loss_grad(const GpModel &model, const Points &X, const Vector &y,
                        const ProbeSet &probes, const Matrix &solves, const MvmPolicy &policy) {
  return pseudo_loss_and_grad(model, X, y, probes, solves, policy).grad;
}

namespace {

std::shared_ptr<const WoodburyPreconditioner> make_preconditioner(const KernelSpec &spec,
                                                                  const Points &X, Index rank) {
  return std::make_shared<WoodburyPreconditioner>(kernel_pivoted_cholesky(spec, X, rank));
}

}  // namespace

TrainResult train(const Points &X, const Vector &y, const TrainConfig &config) {
  const double mean = y.size() > 0 ? y.mean() : 0.0;
  return train(X, y, config, GpModel::initial(config.family, X.cols(), config.ard, mean));
}

TrainResult train(const Points &X, const Vector &y, const TrainConfig &config,
                  const GpModel &start) {
  if (X.rows() != y.size()) throw DimensionMismatch("train: X and y sizes differ");
  if (X.rows() < 1) throw DimensionMismatch("train: no data");
  if (config.steps < 0) throw ConfigError("train: steps must be >= 0");
  if (config.probes < 1) throw ConfigError("train: need at least one probe vector");
  if (!(config.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (config.precond_rank < 0 || config.precond_rank > X.rows()) {
    throw ConfigError("train: preconditioner rank must lie in [0, N]");
  }
  config.cg.validate();
  config.mvm.validate();
  start.kernel.validate(X.cols());

  TrainResult result{start, {}};
  GpModel &model = result.model;
  const Index n = X.rows();
  const Index np = model.num_params();
  std::mt19937_64 rng(config.seed);
  Matrix B(n, config.probes + 1);
  B.col(0) = y.array() - model.constant_mean;

  Vector m1 = Vector::Zero(np);
  Vector m2 = Vector::Zero(np);
  double lr = config.learning_rate;
  int t = 0;

  for (Index step = 0; step < config.steps; ++step) {
    const ProbeSet probes = ProbeSet::rademacher(n, config.probes, rng);
    B.rightCols(config.probes) = probes.Z;
    LossAndGrad lg;
    Index iterations = 0;
    try {
      const KernelOperator op(model.kernel, X, config.mvm);
      CgConfig cg = config.cg;
      cg.compute_format = config.mvm.compute_format;
      cg.preconditioner = make_preconditioner(model.kernel, X, config.precond_rank);
      const SolveReport report = cg_batched(op, B, cg);
      if (report.status() == CgStatus::Breakdown) throw SolverBreakdown("CG breakdown");
      iterations = report.iterations();
      lg = pseudo_loss_and_grad(model, X, y, probes, report.solution, config.mvm);
    } catch (const SolverBreakdown &) {
      lr *= 0.5;
      ++result.trace.aborted_steps;
      continue;
    } catch (const OverflowDetected &) {
      lr *= 0.5;
      ++result.trace.aborted_steps;
      continue;
    } catch (const InnerSolveFailed &) {
      lr *= 0.5;
      ++result.trace.aborted_steps;
      continue;
    }
    if (!lg.grad.allFinite() || !std::isfinite(lg.value)) {
      throw NonFinite("train: non-finite gradient at step " + std::to_string(step));
    }

    ++t;
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * lg.grad;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * lg.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    const Vector update =
        (m1 / c1).array() / ((m2 / c2).array().sqrt() + config.adam_epsilon);
    model.set_raw(model.raw() - lr * update);

    TrainStep rec;
    rec.noise_sq = model.kernel.noise_sq;
    rec.outputscale_sq = model.kernel.outputscale_sq;
    rec.mean_lengthscale = model.kernel.mean_lengthscale();
    rec.pseudo_loss = lg.value;
    rec.grad_inf_norm = lg.grad.lpNorm<Eigen::Infinity>();
    rec.cg_iterations = iterations;
    result.trace.steps.push_back(rec);
  }
  return result;
}

Prediction predict(const GpModel &model, const Points &X, const Vector &y, const Points &X_star,
                   const CgConfig &cg, bool with_variance, Index precond_rank) {
  if (X.rows() != y.size()) throw DimensionMismatch("predict: X and y sizes differ");
  if (X_star.cols() != X.cols()) throw DimensionMismatch("predict: test points have wrong dimension");
  MvmPolicy policy;
  policy.compute_format = FloatFormat::fp32();
  policy.accumulation = Accumulation::BlockWiderFormat;
  policy.accumulation_format = FloatFormat::fp32();
  const KernelOperator op(model.kernel, X, policy);
  CgConfig config = cg;
  config.compute_format = FloatFormat::fp32();
  config.preconditioner = make_preconditioner(model.kernel, X, std::min(precond_rank, X.rows()));

  const Vector centered = y.array() - model.constant_mean;
  const SolveReport cache = cg_stable(op, centered, Vector(), config);
  if (cache.status() == CgStatus::Breakdown) {
    throw SolverBreakdown("predict: CG breakdown (" + cache.columns.front().breakdown_reason + ")");
  }
  Prediction out;
  out.mean = op.cross_apply(X_star, cache.solution).col(0).array() + model.constant_mean;
  if (!with_variance || X_star.rows() == 0) return out;

  const Matrix Kxs = assemble_cross_kernel(model.kernel, X, X_star, FloatFormat::fp32());
  const SolveReport solves = cg_batched(op, Kxs, config);
  if (solves.status() == CgStatus::Breakdown) throw SolverBreakdown("predict: variance CG breakdown");
  out.variance.resize(X_star.rows());
  for (Index i = 0; i < X_star.rows(); ++i) {
    const double reduction = Kxs.col(i).dot(solves.solution.col(i));
    out.variance(i) =
        std::max(model.kernel.outputscale_sq - reduction, 0.0) + model.kernel.noise_sq;
  }
  return out;
}

}  // namespace lpgp
