#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <fstream>
#include <random>

#include "lpgp/errors.hpp"
#include "lpgp/spectral.hpp"
#include "test_support.hpp"

using namespace lpgp;

TEST_CASE("well separated points give an identity spectrum") {
  KernelSpec spec;
  Points X(5, 1);
  X << 0, 100, 200, 300, 400;
  for (const auto &fmt : {FloatFormat::fp16(), FloatFormat::fp64()}) {
    const auto report = quantized_spectrum(spec, X, fmt);
    CHECK(report.n == 5);
    CHECK((report.eigenvalues.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(effective_dimension(report.eigenvalues, 1.0) == doctest::Approx(2.5));
  }
}

TEST_CASE("effective dimension: documented values") {
  CHECK(effective_dimension(Vector::Constant(5, 1.0), 1.0) == doctest::Approx(2.5));
  CHECK(effective_dimension(Vector::Zero(7), 0.3) == 0.0);
  CHECK(effective_dimension(Vector(), 0.3) == 0.0);
  Vector with_negative(3);
  with_negative << 3.0, -1e-4, 1.0;
  CHECK(effective_dimension(with_negative, 1.0) == doctest::Approx(0.75 + 0.5));
  CHECK_THROWS_AS(effective_dimension(Vector::Ones(2), 0.0), DomainError);
}

TEST_CASE("property: effective dimension is monotone and bounded") {
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> e(1.0);
  Vector lambda(30);
  for (auto &l : lambda) l = e(rng);
  double prev = 30.0;
  for (double s : {1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3}) {
    const double ed = effective_dimension(lambda, s);
    CHECK(ed <= prev);
    CHECK(ed >= 0.0);
    prev = ed;
  }
}

TEST_CASE("spectrum matches an independent eigensolve and is sorted") {
  KernelSpec spec;
  spec.family = KernelFamily::Matern32;
  const Points X = testing::uniform_points(60, 2, -2, 2, 2);
  const auto report = quantized_spectrum(spec, X, FloatFormat::fp64());
  const Matrix K = assemble_kernel_matrix(spec, X, FloatFormat::fp64(), false);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(K);
  CHECK(std::is_sorted(report.eigenvalues.begin(), report.eigenvalues.end(), std::greater<>()));
  CHECK(report.eigenvalues.sum() == doctest::Approx(60.0));
  CHECK(report.eigenvalues(0) == doctest::Approx(solver.eigenvalues()(59)));
  CHECK(report.eigenvalues(59) == doctest::Approx(solver.eigenvalues()(0)).scale(1.0));
}

TEST_CASE("half precision spectrum stays close to the exact one") {
  KernelSpec spec;
  spec.family = KernelFamily::Matern12;
  const Points X = testing::uniform_points(100, 1, -3, 3, 3);
  const auto exact = quantized_spectrum(spec, X, FloatFormat::fp64());
  const auto half = quantized_spectrum(spec, X, FloatFormat::fp16());
  // Weyl: each eigenvalue moves by at most the spectral norm of the
  // perturbation, itself below N times the largest entry error.
  const double bound = 100 * FloatFormat::fp16().unit_roundoff();
  CHECK((exact.eigenvalues - half.eigenvalues).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("ed bound: Monte Carlo hits the exact expectation") {
  Vector one(1);
  one << 1.0;
  const auto single = quantized_ed_bound(one, 1.0, 0.5, {10000, 3});
  const double exact = 1.0 + (1.0 / (2 * 0.5)) * std::log((1.0 + 1.0 - 0.5) / (1.0 + 1.0 + 0.5));
  CHECK(single.exact == doctest::Approx(exact).epsilon(1e-14));
  CHECK(std::abs(single.mc_estimate - exact) <= 3 * single.mc_stderr);

  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(0.5);
  for (int t = 0; t < 5; ++t) {
    Vector lambda(40);
    for (auto &l : lambda) l = e(rng);
    const auto b = quantized_ed_bound(lambda, 0.1, 0.05, {20000, static_cast<std::uint64_t>(t)});
    CHECK(std::abs(b.mc_estimate - b.exact) <= 4 * b.mc_stderr);
    CHECK(b.mc_stderr > 0.0);
  }
}

TEST_CASE("property: the perturbed expectation sits below the effective dimension") {
  // lambda / (lambda + s) is concave, so symmetric noise can only lower its
  // mean, and the two-term series drops only negative terms of the log.
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 10; ++t) {
    Vector lambda(30);
    for (auto &l : lambda) l = e(rng);
    for (double s : {0.01, 0.1, 1.0}) {
      for (double delta : {1e-3, 1e-2}) {
        if (delta >= s) continue;
        const auto b = quantized_ed_bound(lambda, s, delta, {200, 0});
        CHECK(b.exact <= effective_dimension(lambda, s));
        CHECK(b.closed_form_lower >= b.exact);
      }
    }
  }
}

TEST_CASE("ed bound tends to the effective dimension as delta vanishes") {
  Vector lambda(4);
  lambda << 2.0, 1.0, 0.5, 0.01;
  const double s = 0.2;
  const auto b = quantized_ed_bound(lambda, s, 1e-9, {100, 0});
  const double ed = effective_dimension(lambda, s);
  CHECK(b.closed_form_lower == doctest::Approx(ed).epsilon(1e-8));
  CHECK(b.exact == doctest::Approx(ed).epsilon(1e-6));
  CHECK(b.mc_estimate == doctest::Approx(ed).epsilon(1e-8));
}

TEST_CASE("ed bound error paths") {
  Vector lambda(2);
  lambda << 1.0, 0.0;
  CHECK_THROWS_AS(quantized_ed_bound(lambda, 0.1, 0.2), DomainError);
  CHECK_THROWS_AS(quantized_ed_bound(lambda, 0.0, 0.01), DomainError);
  CHECK_THROWS_AS(quantized_ed_bound(lambda, 0.1, 0.0), DomainError);
  CHECK_THROWS_AS(quantized_ed_bound(lambda, 0.1, 0.01, {1, 0}), ConfigError);
}

TEST_CASE("rbf eigenvalue cutoff") {
  // sqrt(2a/A) = 1 leaves log(delta) / log(B).
  CHECK(rbf_eigen_cutoff(0.5, 1.0, 0.5, std::ldexp(1.0, -10)) == 10);
  CHECK(rbf_eigen_cutoff(0.5, 1.0, 0.5, 0.3) == 2);
  Index prev = 0;
  for (double delta : {0.5, 0.1, 1e-2, 1e-4, 1e-8}) {
    const Index k = rbf_eigen_cutoff(0.5, 1.0, 0.5, delta);
    CHECK(k >= prev);
    prev = k;
  }
  CHECK(rbf_eigen_cutoff(0.5, 1.0, 0.9, 1e-3) > rbf_eigen_cutoff(0.5, 1.0, 0.5, 1e-3));
  CHECK_THROWS_AS(rbf_eigen_cutoff(0.5, 1.0, 1.0, 0.1), DomainError);
  CHECK_THROWS_AS(rbf_eigen_cutoff(0.5, 1.0, 0.5, 0.0), DomainError);
  CHECK_THROWS_AS(rbf_eigen_cutoff(0.0, 1.0, 0.5, 0.1), DomainError);
}

TEST_CASE("spectrum CSV") {
  SpectrumReport report;
  report.eigenvalues = Vector(3);
  report.eigenvalues << 3.5, 1.0, 0.25;
  const std::string path = testing::temp_path("spectrum.csv");
  write_spectrum_csv(path, report);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,eigenvalue");
  std::getline(in, line);
  CHECK(line == "0,3.5");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
  CHECK_THROWS_AS(write_spectrum_csv("/nonexistent/dir/x.csv", report), ConfigError);
}
