#ifndef LPGP_TRAINING_HPP
#define LPGP_TRAINING_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "lpgp/cg.hpp"
#include "lpgp/kernels.hpp"
#include "lpgp/mvm.hpp"

namespace lpgp {

/*
 * GP hyperparameters. The raw (unconstrained) vector is
 * [log l_1 .. log l_L, log a^2, log sigma^2]; the kernel spec always holds the
 * constrained values.
 */
struct GpModel {
  static constexpr double noise_floor = 1e-4;

  KernelSpec kernel;
  double constant_mean = 0.0;

  Index num_params() const { return static_cast<Index>(kernel.lengthscales.size()) + 2; }
  Vector raw() const;
  // Sets the hyperparameters from raw values, clamping sigma^2 at noise_floor.
  void set_raw(const Vector &raw);

  // Noise 2, outputscale 1, lengthscales 1 (one per dimension when ard).
  static GpModel initial(KernelFamily family, Index dim, bool ard, double constant_mean);
};

struct ProbeSet {
  Matrix Z;

  Index count() const { return Z.cols(); }
  // i.i.d. +-1 entries.
  static ProbeSet rademacher(Index n, Index m, std::mt19937_64 &rng);
};

struct LossAndGrad {
  double value = 0.0;
  // Gradient with respect to GpModel::raw().
  Vector grad;
};

/*
 * Pseudo-loss (1/2M) sum_j u_j^T K~ z_j - 1/2 u_0^T K~ u_0 and its gradient,
 * with solves = [u_0, u_1, .., u_M] taken as constants. The kernel products
 * run in policy.compute_format; the contractions are fp64. y only fixes the
 * problem size here; the solves already encode it.
 */
LossAndGrad pseudo_loss_and_grad(const GpModel &model, const Points &X, const Vector &y,
                                 const ProbeSet &probes, const Matrix &solves,
                                 const MvmPolicy &policy);
double pseudo_loss(const GpModel &model, const Points &X, const Vector &y, const ProbeSet &probes,
                   const Matrix &solves, const MvmPolicy &policy);
Vector pseudo_loss_grad(const GpModel &model, const Points &X, const Vector &y,
                        const ProbeSet &probes, const Matrix &solves, const MvmPolicy &policy);

struct TrainStep {
  double noise_sq = 0.0;
  double outputscale_sq = 0.0;
  double mean_lengthscale = 0.0;
  double pseudo_loss = 0.0;
  double grad_inf_norm = 0.0;
  Index cg_iterations = 0;
};

struct TrainTrace {
  // One entry per completed optimization step.
  std::vector<TrainStep> steps;
  // Steps abandoned after a CG breakdown (learning rate halved each time).
  Index aborted_steps = 0;
};

struct TrainConfig {
  KernelFamily family = KernelFamily::Rbf;
  bool ard = true;
  Index steps = 50;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  Index probes = 8;
  Index precond_rank = 5;
  CgConfig cg;
  MvmPolicy mvm;
  std::uint64_t seed = 0;
};

struct TrainResult {
  GpModel model;
  TrainTrace trace;
};

// Adam on the raw parameters, one batched solve of [y - mean, Z] per step.
TrainResult train(const Points &X, const Vector &y, const TrainConfig &config);
// Continues from a given model instead of the default initialization.
TrainResult train(const Points &X, const Vector &y, const TrainConfig &config,
                  const GpModel &start);

struct Prediction {
  Vector mean;
  // Empty unless requested.
  Vector variance;
};

/*
 * Predictive mean K(X*, X) K~^{-1}(y - m) + m and, optionally, the latent
 * variance plus noise. Products run in fp32 whatever the training format.
 */
Prediction predict(const GpModel &model, const Points &X, const Vector &y, const Points &X_star,
                   const CgConfig &cg, bool with_variance = true, Index precond_rank = 5);

}  // namespace lpgp

#endif
