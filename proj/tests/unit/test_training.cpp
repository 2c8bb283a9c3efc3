#include <doctest.h>

#include <Eigen/Cholesky>

#include "lpgp/dataset.hpp"
#include "lpgp/errors.hpp"
#include "lpgp/training.hpp"
#include "test_support.hpp"

using namespace lpgp;

namespace {

// 1/2 y^T K~^{-1} y + 1/2 log|K~| from a dense fp64 Cholesky.
double dense_nlml(const GpModel &model, const Points &X, const Vector &y) {
  const Matrix K = assemble_kernel_matrix(model.kernel, X, FloatFormat::fp64(), true);
  const Eigen::LLT<Matrix> llt(K);
  const Vector r = y.array() - model.constant_mean;
  const Matrix L = llt.matrixL();
  return 0.5 * r.dot(llt.solve(r)) + L.diagonal().array().log().sum();
}

Matrix exact_solves(const GpModel &model, const Points &X, const Vector &y, const ProbeSet &probes) {
  const Matrix K = assemble_kernel_matrix(model.kernel, X, FloatFormat::fp64(), true);
  Matrix B(X.rows(), probes.count() + 1);
  B.col(0) = y.array() - model.constant_mean;
  B.rightCols(probes.count()) = probes.Z;
  return K.llt().solve(B);
}

GpModel sample_model(KernelFamily family, bool ard) {
  GpModel model = GpModel::initial(family, 2, ard, 0.1);
  Vector raw = model.raw();
  for (Index p = 0; p < raw.size(); ++p) raw(p) = 0.3 * std::sin(1.7 * static_cast<double>(p + 1));
  model.set_raw(raw);
  model.kernel.period = 2.0;
  return model;
}

}  // namespace

TEST_CASE("raw parameters round-trip and the noise floor holds") {
  GpModel model = GpModel::initial(KernelFamily::Matern52, 3, true, 0.5);
  CHECK(model.num_params() == 5);
  CHECK(model.kernel.noise_sq == 2.0);
  CHECK(model.kernel.outputscale_sq == 1.0);
  CHECK(model.kernel.lengthscales == std::vector<double>{1.0, 1.0, 1.0});
  Vector raw(5);
  raw << 0.1, -0.2, 0.3, 0.4, -1.0;
  model.set_raw(raw);
  CHECK((model.raw() - raw).norm() < 1e-14);
  raw(4) = -30.0;
  model.set_raw(raw);
  CHECK(model.kernel.noise_sq == GpModel::noise_floor);
  CHECK_THROWS_AS(model.set_raw(Vector::Zero(3)), DimensionMismatch);
  raw(0) = NAN;
  CHECK_THROWS_AS(model.set_raw(raw), NonFinite);
  CHECK(GpModel::initial(KernelFamily::Rbf, 3, false, 0.0).num_params() == 3);
}

TEST_CASE("Rademacher probes are signs and reproducible") {
  std::mt19937_64 a(4), b(4);
  const auto p = ProbeSet::rademacher(50, 6, a);
  const auto q = ProbeSet::rademacher(50, 6, b);
  CHECK(p.Z == q.Z);
  CHECK(p.count() == 6);
  CHECK((p.Z.array().abs() == 1.0).all());
  CHECK(std::abs(p.Z.mean()) < 0.2);
}

TEST_CASE("pseudo-loss: identity system with matched vectors is zero") {
  GpModel model = GpModel::initial(KernelFamily::Rbf, 1, false, 0.0);
  model.kernel.outputscale_sq = 0.0;
  model.kernel.noise_sq = 1.0;
  const Points X = testing::uniform_points(20, 1, -1, 1, 1);
  const Vector y = testing::normal_vector(20, 2);
  ProbeSet probes;
  probes.Z = y;
  Matrix solves(20, 2);
  solves << y, y;
  CHECK(pseudo_loss(model, X, y, probes, solves, MvmPolicy::exact()) ==
        doctest::Approx(0.0).epsilon(1e-14).scale(y.squaredNorm()));
}

TEST_CASE("pseudo-loss: a zero response drops the data term") {
  GpModel model = GpModel::initial(KernelFamily::Matern12, 1, false, 0.0);
  const Points X = testing::uniform_points(25, 1, -2, 2, 3);
  const Vector y = Vector::Zero(25);
  std::mt19937_64 rng(5);
  const auto probes = ProbeSet::rademacher(25, 3, rng);
  const Matrix solves = exact_solves(model, X, y, probes);
  CHECK(solves.col(0).isZero(0.0));
  const double loss = pseudo_loss(model, X, y, probes, solves, MvmPolicy::exact());
  // u_j^T K~ z_j = z_j^T z_j = N for exact solves.
  CHECK(loss == doctest::Approx(25.0 / 2.0).epsilon(1e-10));
}

TEST_CASE("gradient equals finite differences of the surrogate") {
  const Points X = testing::uniform_points(40, 2, -2, 2, 6);
  const Vector y = testing::normal_vector(40, 7);
  for (auto family : {KernelFamily::Rbf, KernelFamily::Matern12, KernelFamily::Matern32,
                      KernelFamily::Matern52, KernelFamily::RationalQuadratic,
                      KernelFamily::Periodic}) {
    for (bool ard : {false, true}) {
      const GpModel model = sample_model(family, ard);
      std::mt19937_64 rng(8);
      const auto probes = ProbeSet::rademacher(40, 4, rng);
      const Matrix solves = exact_solves(model, X, y, probes);
      const Vector grad = pseudo_loss_grad(model, X, y, probes, solves, MvmPolicy::exact());
      const double h = 1e-5;
      for (Index p = 0; p < model.num_params(); ++p) {
        GpModel up = model, down = model;
        Vector r = model.raw();
        r(p) += h;
        up.set_raw(r);
        r(p) -= 2 * h;
        down.set_raw(r);
        const double fd = (pseudo_loss(up, X, y, probes, solves, MvmPolicy::exact()) -
                           pseudo_loss(down, X, y, probes, solves, MvmPolicy::exact())) /
                          (2 * h);
        INFO(family_name(family) << " ard " << ard << " p " << p);
        CHECK(grad(p) == doctest::Approx(fd).epsilon(1e-6).scale(1e-8));
      }
    }
  }
}

TEST_CASE("with exact solves and a complete probe basis the gradient is the NLML gradient") {
  const Index n = 30;
  const Points X = testing::uniform_points(n, 2, -2, 2, 9);
  const Vector y = testing::normal_vector(n, 10);
  const GpModel model = sample_model(KernelFamily::Matern32, true);
  // z_j = sqrt(N) e_j makes the probe average the exact trace.
  ProbeSet probes;
  probes.Z = std::sqrt(static_cast<double>(n)) * Matrix::Identity(n, n);
  const Matrix solves = exact_solves(model, X, y, probes);
  const Vector grad = pseudo_loss_grad(model, X, y, probes, solves, MvmPolicy::exact());
  const double h = 1e-4;
  for (Index p = 0; p < model.num_params(); ++p) {
    GpModel up = model, down = model;
    Vector r = model.raw();
    r(p) += h;
    up.set_raw(r);
    r(p) -= 2 * h;
    down.set_raw(r);
    const double fd = (dense_nlml(up, X, y) - dense_nlml(down, X, y)) / (2 * h);
    CHECK(grad(p) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("pseudo-loss shape checks") {
  const GpModel model = GpModel::initial(KernelFamily::Rbf, 1, false, 0.0);
  const Points X = testing::uniform_points(10, 1, -1, 1, 11);
  const Vector y = Vector::Zero(10);
  std::mt19937_64 rng(1);
  const auto probes = ProbeSet::rademacher(10, 2, rng);
  CHECK_THROWS_AS(pseudo_loss(model, X, y, probes, Matrix::Zero(10, 2), MvmPolicy::exact()),
                  DimensionMismatch);
  CHECK_THROWS_AS(pseudo_loss(model, X, Vector::Zero(9), probes, Matrix::Zero(10, 3),
                              MvmPolicy::exact()),
                  DimensionMismatch);
}

TEST_CASE("zero steps return the initial model") {
  const Points X = testing::uniform_points(30, 1, -1, 1, 12);
  const Vector y = testing::normal_vector(30, 13);
  TrainConfig cfg;
  cfg.steps = 0;
  const auto result = train(X, y, cfg);
  CHECK(result.trace.steps.empty());
  CHECK(result.trace.aborted_steps == 0);
  CHECK(result.model.kernel.noise_sq == 2.0);
  CHECK(result.model.constant_mean == doctest::Approx(y.mean()));
}

TEST_CASE("training lowers the exact negative log likelihood") {
  KernelSpec truth;
  truth.lengthscales = {0.8};
  truth.noise_sq = 0.05;
  const auto data = synthetic_gp(150, 1, truth, 14);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.ard = false;
  cfg.mvm = MvmPolicy::exact();
  cfg.cg.tolerance = 1e-6;
  cfg.cg.max_iters = 150;
  cfg.seed = 15;
  const GpModel start = GpModel::initial(KernelFamily::Rbf, 1, false, data.y.mean());
  const auto result = train(data.X, data.y, cfg, start);
  REQUIRE(result.trace.steps.size() == 30);
  CHECK(dense_nlml(result.model, data.X, data.y) < dense_nlml(start, data.X, data.y) - 10.0);
  CHECK(result.model.kernel.noise_sq < 1.0);
  for (const auto &s : result.trace.steps) CHECK(s.cg_iterations > 0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  KernelSpec truth;
  const auto data = synthetic_gp(80, 2, truth, 16);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.mvm.compute_format = FloatFormat::fp16();
  cfg.mvm.downscale = true;
  const auto a = train(data.X, data.y, cfg);
  const auto b = train(data.X, data.y, cfg);
  CHECK(a.model.raw() == b.model.raw());
}

TEST_CASE("training configuration errors") {
  const Points X = testing::uniform_points(10, 1, -1, 1, 17);
  const Vector y = Vector::Zero(10);
  TrainConfig cfg;
  cfg.steps = -1;
  CHECK_THROWS_AS(train(X, y, cfg), ConfigError);
  cfg.steps = 1;
  cfg.probes = 0;
  CHECK_THROWS_AS(train(X, y, cfg), ConfigError);
  cfg.probes = 2;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(X, y, cfg), ConfigError);
  cfg.learning_rate = 0.1;
  cfg.precond_rank = 11;
  CHECK_THROWS_AS(train(X, y, cfg), ConfigError);
  cfg.precond_rank = 2;
  CHECK_THROWS_AS(train(X, Vector::Zero(3), cfg), DimensionMismatch);
}

TEST_CASE("prediction interpolates noise-free training data") {
  const Index n = 25;
  Points X(n, 1);
  for (Index i = 0; i < n; ++i) X(i, 0) = -3.0 + 0.25 * static_cast<double>(i);
  const Vector y = X.col(0).array().sin();
  GpModel model = GpModel::initial(KernelFamily::Rbf, 1, false, 0.0);
  model.kernel.lengthscales = {0.7};
  model.kernel.noise_sq = GpModel::noise_floor;
  CgConfig cg;
  cg.tolerance = 1e-5;
  cg.max_iters = 200;
  const auto pred = predict(model, X, y, X, cg, true, 10);
  CHECK((pred.mean - y).lpNorm<Eigen::Infinity>() < 1e-2);
  CHECK(pred.variance.minCoeff() >= GpModel::noise_floor);
  CHECK(pred.variance.maxCoeff() < 1e-2);
}

TEST_CASE("far from the data the prediction reverts to the prior") {
  const Points X = testing::uniform_points(40, 1, -1, 1, 18);
  const Vector y = testing::normal_vector(40, 19);
  GpModel model = GpModel::initial(KernelFamily::Matern12, 1, false, 0.25);
  model.kernel.noise_sq = 0.1;
  Points far(2, 1);
  far << 100.0, -100.0;
  CgConfig cg;
  cg.tolerance = 1e-4;
  cg.max_iters = 100;
  const auto pred = predict(model, X, y, far, cg);
  CHECK(pred.mean(0) == doctest::Approx(0.25));
  CHECK(pred.variance(1) == doctest::Approx(1.1));
  const auto no_var = predict(model, X, y, far, cg, false);
  CHECK(no_var.variance.size() == 0);
  CHECK_THROWS_AS(predict(model, X, y, Points::Zero(1, 2), cg), DimensionMismatch);
}
