// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [N ...] [--expect-fail=3,5]
//
// With no numbers every criterion runs. The exit status is 0 when the set
// of failing criteria equals the --expect-fail list (empty by default), so
// a known failure stays visible while any change in outcome is reported.

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "lpgp/cg.hpp"
#include "lpgp/experiments.hpp"
#include "lpgp/preconditioner.hpp"
#include "lpgp/spectral.hpp"
#include "lpgp/training.hpp"

using namespace lpgp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

MvmPolicy half_policy(bool downscale) {
  MvmPolicy p;
  p.compute_format = FloatFormat::fp16();
  p.accumulation = Accumulation::BlockWiderFormat;
  p.accumulation_format = FloatFormat::fp32();
  p.downscale = downscale;
  return p;
}

// ---------------------------------------------------------------------------

Outcome mvm_accuracy() {
  Timer timer;
  const Index n = 4000;
  const Index dim = 9;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Points X(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) X(i, d) = coord(rng);
  }
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = 1.0 - unit(rng);  // (0, 1]

  KernelSpec spec;
  spec.noise_sq = 0.1;
  const Vector reference = assemble_kernel_matrix(spec, X, FloatFormat::fp32(), true) * v;

  auto error_for = [&](Accumulation acc) {
    MvmPolicy p = half_policy(false);
    p.accumulation = acc;
    const Vector out = block_mvm(KernelOperator(spec, X, p), v);
    return ((out - reference).array().abs() / reference.array().abs()).mean();
  };
  const double wider = error_for(Accumulation::BlockWiderFormat);
  const double same = error_for(Accumulation::BlockSameFormat);
  const double kahan = error_for(Accumulation::KahanSameFormat);
  const double secs = timer.seconds();
  const bool pass = wider < 1e-3 && same > wider && kahan <= 3.0 * wider && secs < 120.0;
  return {pass, fmt("errors wider %.3e, same %.3e, kahan %.3e (kahan/wider %.2f); %.1f s", wider,
                    same, kahan, kahan / wider, secs)};
}

// ---------------------------------------------------------------------------
// The 2000-point Matern-1/2 system shared by the solver criteria.

struct SolverInstance {
  KernelSpec spec;
  Points X;
  Matrix K;  // exact fp64 K~
  Vector b;

  static const SolverInstance &get() {
    static const SolverInstance inst = make();
    return inst;
  }

  double relative_residual(const Vector &x) const { return (b - K * x).norm() / b.norm(); }

  std::shared_ptr<const WoodburyPreconditioner> preconditioner(Index rank) const {
    return std::make_shared<WoodburyPreconditioner>(kernel_pivoted_cholesky(spec, X, rank));
  }

  SolveReport solve(bool stable, const FloatFormat &format, Index rank) const {
    MvmPolicy p;
    p.compute_format = format;
    p.downscale = format.mantissa_bits < 23;
    const KernelOperator op(spec, X, p);
    CgConfig cfg;
    cfg.tolerance = 1.0;
    cfg.max_iters = 50;
    cfg.compute_format = format;
    if (rank > 0) cfg.preconditioner = preconditioner(rank);
    return stable ? cg_stable(op, b, Vector(), cfg) : cg_standard(op, b, Vector(), cfg);
  }

 private:
  static SolverInstance make() {
    SolverInstance inst;
    inst.spec.family = KernelFamily::Matern12;
    inst.spec.noise_sq = 0.01;
    const Index n = 2000;
    const Index dim = 5;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    inst.X.resize(n, dim);
    for (Index i = 0; i < n; ++i) {
      for (Index d = 0; d < dim; ++d) inst.X(i, d) = normal(rng);
    }
    Vector xi(n);
    for (Index i = 0; i < n; ++i) xi(i) = normal(rng);
    inst.K = assemble_kernel_matrix(inst.spec, inst.X, FloatFormat::fp64(), true);
    // A draw from the GP prior as the right-hand side.
    inst.b = inst.K.llt().matrixL() * xi;
    return inst;
  }
};

std::string describe(const SolveReport &r) {
  std::string s = std::string(status_name(r.status())) + " after " + std::to_string(r.iterations()) +
                  fmt(" (residual %.3g)", r.final_residual());
  if (r.status() == CgStatus::Breakdown) s += " [" + r.columns.front().breakdown_reason + "]";
  return s;
}

Outcome stable_cg_parity() {
  Timer timer;
  const auto &inst = SolverInstance::get();
  const SolveReport stable16 = inst.solve(true, FloatFormat::fp16(), 5);
  const SolveReport standard32 = inst.solve(false, FloatFormat::fp32(), 5);
  const SolveReport standard16 = inst.solve(false, FloatFormat::fp16(), 5);
  const bool stable_ok = stable16.status() == CgStatus::Converged && stable16.iterations() <= 50 &&
                         stable16.iterations() <= standard32.iterations() + 10;
  const bool standard_fails = standard16.status() == CgStatus::Breakdown ||
                              (standard16.iterations() >= 50 && standard16.final_residual() > 10.0);
  const double secs = timer.seconds();
  return {stable_ok && standard_fails && secs < 300.0,
          "fp16 stable: " + describe(stable16) + "; fp32 standard: " + describe(standard32) +
              "; fp16 standard: " + describe(standard16) + fmt("; %.1f s", secs)};
}

Outcome preconditioner_rank() {
  const auto &inst = SolverInstance::get();
  std::string detail;
  bool pass = true;
  Index lo = 1 << 30;
  Index hi = 0;
  for (Index rank : {0, 5, 15, 50}) {
    const SolveReport r = inst.solve(true, FloatFormat::fp16(), rank);
    detail += "rank " + std::to_string(rank) + ": " + describe(r) + "; ";
    const bool converged = r.status() == CgStatus::Converged;
    if (rank == 0) {
      pass = pass && !converged;
    } else {
      pass = pass && converged;
      lo = std::min(lo, r.iterations());
      hi = std::max(hi, r.iterations());
    }
  }
  pass = pass && hi - lo <= 5;
  return {pass, detail + "spread over ranks 5/15/50: " + std::to_string(hi - lo)};
}

Outcome exact_truncation() {
  KernelSpec spec;
  const FloatFormat half = FloatFormat::fp16();
  const double d_max = max_representable_distance(KernelFamily::Rbf, 1.0, half).d_max;
  const Index n = 401;
  Points X(n, 1);
  for (Index i = 0; i < n; ++i) X(i, 0) = -20.0 + 0.1 * static_cast<double>(i);
  const Vector y = X.col(0).array().sin();
  // Prediction cache K~^{-1} y from the stabilized solver.
  spec.noise_sq = 0.1;
  CgConfig cfg;
  cfg.compute_format = half;
  cfg.tolerance = 0.01;
  const SolveReport cache = cg_stable(KernelOperator(spec, X, half_policy(true)), y, Vector(), cfg);
  const Vector v = cache.solution.col(0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> where(-20.0, 20.0);
  const MvmPolicy policy = half_policy(false);
  double worst_diff = 0.0;
  double worst_fraction = 0.0;
  for (int t = 0; t < 100; ++t) {
    Vector x_star(1);
    x_star << where(rng);
    const TruncatedDot tr = truncated_predict_dot(spec, x_star, X, v, policy);
    const TruncatedDot full = full_predict_dot(spec, x_star, X, v, policy);
    worst_diff = std::max(worst_diff, std::abs(tr.value - full.value));
    worst_fraction = std::max(
        worst_fraction, static_cast<double>(support_mask(spec, x_star, X, half).size()) /
                            static_cast<double>(n));
  }
  return {worst_diff == 0.0 && worst_fraction < 0.9,
          fmt("grid [-20, 20] vs d_max %.3f; max |trunc - full| = %g; max mask fraction %.3f "
              "(cache solve %s)",
              d_max, worst_diff, worst_fraction, describe(cache).c_str())};
}

Outcome spectrum_ordering() {
  KernelSpec spec;
  spec.family = KernelFamily::Matern12;
  const double s = 0.01;
  bool pass = true;
  double prev_gap = -INFINITY;
  std::string detail = fmt("s = %g;", s);
  for (Index n : {250, 500, 1000, 2000}) {
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<double> coord(-3.0, 3.0);
    Points X(n, 1);
    for (Index i = 0; i < n; ++i) X(i, 0) = coord(rng);
    const auto e16 = quantized_spectrum(spec, X, FloatFormat::fp16()).eigenvalues;
    const auto e32 = quantized_spectrum(spec, X, FloatFormat::fp32()).eigenvalues;
    const auto e64 = quantized_spectrum(spec, X, FloatFormat::fp64()).eigenvalues;
    const double lmax_dev = std::max(std::abs(e16(0) - e64(0)), std::abs(e32(0) - e64(0))) / e64(0);
    const double gap = effective_dimension(e16, s) - effective_dimension(e32, s);
    pass = pass && lmax_dev < 0.01 && gap > 0.0 && gap >= prev_gap;
    prev_gap = gap;
    detail += fmt(" N=%ld: lambda_max dev %.1e, N_eff gap %+.3f;", static_cast<long>(n), lmax_dev, gap);
  }
  return {pass, detail};
}

Outcome ed_bound() {
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> draw(1.0);
  int cases = 0;
  int below_neff = 0;
  int closed_form_above = 0;
  double worst_neff = 0.0;
  double worst_closed = 0.0;
  for (int t = 0; t < 20; ++t) {
    Vector lambda(100);
    for (auto &l : lambda) l = draw(rng);
    std::sort(lambda.begin(), lambda.end(), std::greater<>());
    for (double s : {0.01, 0.1, 1.0}) {
      for (double delta : {1e-3, 1e-2, 1e-1}) {
        if (!(lambda.minCoeff() - delta + s > 0.0)) continue;
        ++cases;
        const EdBound b = quantized_ed_bound(lambda, s, delta, {10000, static_cast<std::uint64_t>(cases)});
        const double neff = effective_dimension(lambda, s);
        const double z_neff = (neff - b.mc_estimate) / b.mc_stderr;
        const double z_closed = (b.closed_form_lower - b.mc_estimate) / b.mc_stderr;
        worst_neff = std::max(worst_neff, z_neff);
        worst_closed = std::max(worst_closed, z_closed);
        if (z_neff > 3.0) ++below_neff;
        if (z_closed > 3.0) ++closed_form_above;
      }
    }
  }
  return {below_neff == 0 && closed_form_above == 0,
          fmt("%d cases; mc < N_eff - 3 se in %d (worst %.1f se); closed form > mc + 3 se in %d "
              "(worst %.1f se)",
              cases, below_neff, worst_neff, closed_form_above, worst_closed)};
}

double dense_nlml(const GpModel &model, const Points &X, const Vector &y) {
  const Matrix K = assemble_kernel_matrix(model.kernel, X, FloatFormat::fp64(), true);
  const Eigen::LLT<Matrix> llt(K);
  const Vector r = y.array() - model.constant_mean;
  const Matrix L = llt.matrixL();
  return 0.5 * r.dot(llt.solve(r)) + L.diagonal().array().log().sum();
}

Outcome gradient_correctness() {
  KernelSpec truth;
  truth.lengthscales = {1.0};
  truth.noise_sq = 0.1;
  const SyntheticData data = synthetic_gp(200, 2, truth, 7);
  GpModel model = GpModel::initial(KernelFamily::Rbf, 2, true, 0.0);
  model.kernel.lengthscales = {0.7, 1.4};
  model.kernel.outputscale_sq = 1.3;
  model.kernel.noise_sq = 0.2;

  std::mt19937_64 rng(8);
  const ProbeSet probes = ProbeSet::rademacher(200, 64, rng);
  Matrix B(200, 65);
  B.col(0) = data.y.array() - model.constant_mean;
  B.rightCols(64) = probes.Z;
  CgConfig cfg;
  cfg.tolerance = 1e-10;
  cfg.max_iters = 1000;
  cfg.compute_format = FloatFormat::fp64();
  const MvmPolicy exact = MvmPolicy::exact();
  const SolveReport solves = cg_batched(KernelOperator(model.kernel, data.X, exact), B, cfg);

  const Vector grad = pseudo_loss_grad(model, data.X, data.y, probes, solves.solution, exact);
  const double h = 1e-5;
  double worst_surrogate = 0.0;
  Vector nlml_grad(model.num_params());
  for (Index p = 0; p < model.num_params(); ++p) {
    GpModel up = model;
    GpModel down = model;
    Vector raw = model.raw();
    raw(p) += h;
    up.set_raw(raw);
    raw(p) -= 2 * h;
    down.set_raw(raw);
    const double fd = (pseudo_loss(up, data.X, data.y, probes, solves.solution, exact) -
                       pseudo_loss(down, data.X, data.y, probes, solves.solution, exact)) /
                      (2 * h);
    worst_surrogate = std::max(worst_surrogate, std::abs(grad(p) - fd) / std::abs(fd));
    nlml_grad(p) = (dense_nlml(up, data.X, data.y) - dense_nlml(down, data.X, data.y)) / (2 * h);
  }
  const double trace_rel = (grad - nlml_grad).norm() / nlml_grad.norm();
  return {solves.status() == CgStatus::Converged && worst_surrogate <= 1e-5 && trace_rel <= 0.1,
          fmt("max per-coordinate error vs surrogate FD %.2e; M=64 vs exact gradient %.3f relative",
              worst_surrogate, trace_rel)};
}

Outcome direct_method_failure() {
  const auto &inst = SolverInstance::get();
  const DirectSolveResult direct = direct_woodbury_solve(inst.spec, inst.X, inst.b, 5, FloatFormat::fp16());
  const SolveReport stable16 = inst.solve(true, FloatFormat::fp16(), 5);
  const double cg_residual = inst.relative_residual(stable16.solution.col(0));
  return {direct.residual_norm >= 10.0 * cg_residual,
          fmt("direct fp16 relative residual %.3g, fp16 stable CG %.3g", direct.residual_norm,
              cg_residual)};
}

Outcome training_parity() {
  Timer timer;
  auto run = [](const FloatFormat &format) {
    ExperimentConfig cfg;
    cfg.command = "train";
    cfg.synthetic = SyntheticSource{2000, 3, KernelFamily::Rbf};
    cfg.format = format;
    cfg.steps = 50;
    return run_experiment(cfg).at("metrics");
  };
  const Json m16 = run(FloatFormat::fp16());
  const Json m32 = run(FloatFormat::fp32());
  auto rel = [&](const char *key) {
    return std::abs(m16.at(key).get<double>() - m32.at(key).get<double>()) /
           std::abs(m32.at(key).get<double>());
  };
  const double noise_rel = rel("noise_sq");
  const double ls_rel = rel("mean_lengthscale");
  const double rmse_diff = std::abs(m16.at("rmse").get<double>() - m32.at("rmse").get<double>());
  const double secs = timer.seconds();
  return {noise_rel <= 0.2 && ls_rel <= 0.2 && rmse_diff < 0.03 && secs < 900.0,
          fmt("noise %.4f vs %.4f (%.1f%%), lengthscale %.4f vs %.4f (%.1f%%), rmse %.4f vs %.4f; "
              "%.0f s",
              m16.at("noise_sq").get<double>(), m32.at("noise_sq").get<double>(), 100 * noise_rel,
              m16.at("mean_lengthscale").get<double>(), m32.at("mean_lengthscale").get<double>(),
              100 * ls_rel, m16.at("rmse").get<double>(), m32.at("rmse").get<double>(), secs)};
}

Outcome non_reproduction_documented() {
  std::ifstream in(LPGP_README_PATH);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const bool documented = text.find("## Not reproduced") != std::string::npos;
  return {documented, documented ? "README lists the GPU-scale results that are not reproduced"
                                 : "README section on non-reproduced results is missing"};
}

}  // namespace

int main(int argc, char **argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"MVM accuracy", mvm_accuracy}},
      {2, {"stable CG parity", stable_cg_parity}},
      {3, {"preconditioner rank", preconditioner_rank}},
      {4, {"exact truncation", exact_truncation}},
      {5, {"spectrum and effective dimension ordering", spectrum_ordering}},
      {6, {"quantized effective-dimension bound", ed_bound}},
      {7, {"gradient correctness", gradient_correctness}},
      {8, {"direct method failure", direct_method_failure}},
      {9, {"training parity", training_parity}},
      {10, {"non-reproduced results documented", non_reproduction_documented}},
  };

  std::set<int> selected;
  std::set<int> expected_failures;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    const std::string flag = "--expect-fail=";
    if (arg.rfind(flag, 0) == 0) {
      std::stringstream ss(arg.substr(flag.size()));
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) expected_failures.insert(std::stoi(item));
      }
    } else {
      selected.insert(std::stoi(arg));
    }
  }
  if (selected.empty()) {
    for (const auto &[id, _] : criteria) selected.insert(id);
  }

  std::set<int> failed;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    Outcome outcome;
    try {
      outcome = it->second.second();
    } catch (const std::exception &e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    if (!outcome.pass) failed.insert(id);
    std::printf("CRITERION %d %s: %s - %s\n", id, it->second.first.c_str(),
                outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str());
    std::fflush(stdout);
  }

  std::set<int> expected;
  for (int id : expected_failures) {
    if (selected.count(id)) expected.insert(id);
  }
  if (failed != expected) {
    std::printf("outcome differs from the expected failures\n");
    return 1;
  }
  return 0;
}
