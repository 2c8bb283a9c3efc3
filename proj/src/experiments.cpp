#include "lpgp/experiments.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "lpgp/errors.hpp"

namespace lpgp {

const std::vector<std::string> &experiment_commands() {
  static const std::vector<std::string> names = {"train",    "solve",      "spectrum", "maxdist",
                                                 "mvm-bench", "truncation", "ed-bound"};
  return names;
}

namespace {

struct Data {
  Dataset ds;
  std::string source;
};

Data load_data(const ExperimentConfig &cfg) {
  if (cfg.synthetic && !cfg.data_path.empty()) {
    throw ConfigError("use either --data or --synthetic, not both");
  }
  if (cfg.synthetic) {
    const SyntheticSource &src = *cfg.synthetic;
    KernelSpec truth;
    truth.family = src.family;
    truth.lengthscales = {cfg.lengthscale};
    truth.outputscale_sq = cfg.outputscale_sq;
    truth.noise_sq = cfg.noise_sq;
    SyntheticData raw = synthetic_gp(src.n, src.dim, truth, cfg.seed);
    return {make_dataset(std::move(raw.X), std::move(raw.y), cfg.split_fraction, cfg.seed),
            "synthetic"};
  }
  if (cfg.data_path.empty()) throw ConfigError("a data source is required (--data or --synthetic)");
  if (cfg.target.empty()) throw ConfigError("--data needs --target");
  return {load_csv(cfg.data_path, cfg.target, cfg.split_fraction, cfg.seed), cfg.data_path};
}

KernelFamily chosen_family(const ExperimentConfig &cfg) {
  if (cfg.kernel) return *cfg.kernel;
  if (cfg.synthetic) return cfg.synthetic->family;
  return KernelFamily::Rbf;
}

KernelSpec chosen_kernel(const ExperimentConfig &cfg) {
  KernelSpec spec;
  spec.family = chosen_family(cfg);
  spec.lengthscales = {cfg.lengthscale};
  spec.outputscale_sq = cfg.outputscale_sq;
  spec.noise_sq = cfg.noise_sq;
  return spec;
}

// Low-precision products accumulate blocks in fp32 and downscale inputs,
// the configuration that keeps binary16 sums finite.
MvmPolicy policy_for(const FloatFormat &fmt, Index block_size) {
  MvmPolicy p;
  p.block_size = block_size;
  p.compute_format = fmt;
  const bool wide = fmt.mantissa_bits >= 23;
  p.accumulation = Accumulation::BlockWiderFormat;
  p.accumulation_format = wide ? fmt : FloatFormat::fp32();
  p.downscale = !wide;
  return p;
}

std::vector<FloatFormat> formats_or_default(const ExperimentConfig &cfg) {
  return cfg.formats.empty() ? std::vector<FloatFormat>{cfg.format} : cfg.formats;
}

Json data_json(const Data &d) {
  return {{"source", d.source},
          {"n", d.ds.size()},
          {"dim", d.ds.X.cols()},
          {"n_train", d.ds.train.size()},
          {"n_test", d.ds.test.size()},
          {"dropped_rows", d.ds.dropped_rows}};
}

Json config_json(const ExperimentConfig &cfg) {
  Json fmts = Json::array();
  for (const auto &f : formats_or_default(cfg)) fmts.push_back(f.name());
  Json j = {{"format", cfg.format.name()},
            {"formats", fmts},
            {"kernel", family_name(chosen_family(cfg))},
            {"lengthscale", cfg.lengthscale},
            {"outputscale_sq", cfg.outputscale_sq},
            {"noise_sq", cfg.noise_sq},
            {"precond_rank", cfg.precond_rank},
            {"tol", cfg.tolerance},
            {"max_iters", cfg.max_iters},
            {"steps", cfg.steps},
            {"lr", cfg.learning_rate},
            {"probes", cfg.probes},
            {"stabilized", cfg.stabilized},
            {"block_size", cfg.block_size}};
  if (!cfg.data_path.empty()) {
    j["data"] = cfg.data_path;
    j["target"] = cfg.target;
  }
  if (cfg.synthetic) {
    j["synthetic"] = {{"n", cfg.synthetic->n},
                      {"dim", cfg.synthetic->dim},
                      {"family", family_name(cfg.synthetic->family)}};
  }
  return j;
}

// Sibling file "<out without extension>.<suffix>".
std::string sibling(const ExperimentConfig &cfg, const std::string &suffix) {
  std::filesystem::path p(cfg.out);
  p.replace_extension();
  return p.string() + "." + suffix;
}

void write_history_csv(const std::string &path, const std::vector<double> &history) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "iteration,residual_norm\n";
  for (std::size_t k = 0; k < history.size(); ++k) out << k << ',' << history[k] << '\n';
}

Json run_solve(const ExperimentConfig &cfg, Json &details, Json &artifacts) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const Points X = data.ds.X_train();
  const Vector y = data.ds.y_train();
  const KernelSpec spec = chosen_kernel(cfg);
  spec.validate(X.cols());
  const KernelOperator op(spec, X, policy_for(cfg.format, cfg.block_size));
  CgConfig cg;
  cg.tolerance = cfg.tolerance;
  cg.max_iters = cfg.max_iters;
  cg.compute_format = cfg.format;
  const PivotedCholeskyFactor factor = kernel_pivoted_cholesky(spec, X, cfg.precond_rank);
  if (!cfg.factor_path.empty()) {
    save_npy(cfg.factor_path, factor.L);
    artifacts.push_back(cfg.factor_path);
  }
  cg.preconditioner = std::make_shared<WoodburyPreconditioner>(factor);
  const SolveReport report =
      cfg.stabilized ? cg_stable(op, y, Vector(), cg) : cg_standard(op, y, Vector(), cg);
  details["solve"] = to_json(report);
  details["mvm_policy"] = to_json(op.policy());
  if (!cfg.out.empty()) {
    const std::string path = sibling(cfg, "residuals.csv");
    write_history_csv(path, report.residual_history());
    artifacts.push_back(path);
  }
  if (report.status() == CgStatus::Breakdown) {
    details["error"] = {{"type", "SolverBreakdown"},
                        {"message", report.columns.front().breakdown_reason}};
  }
  return {{"status", status_name(report.status())},
          {"iterations", report.iterations()},
          {"final_residual", report.final_residual()},
          {"n", X.rows()}};
}

Json run_train(const ExperimentConfig &cfg, Json &details, Json &artifacts) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const Points X = data.ds.X_train();
  const Vector y = data.ds.y_train();
  TrainConfig tc;
  tc.family = chosen_family(cfg);
  tc.ard = true;
  tc.steps = cfg.steps;
  tc.learning_rate = cfg.learning_rate;
  tc.probes = cfg.probes;
  tc.precond_rank = std::min(cfg.precond_rank, X.rows());
  tc.seed = cfg.seed;
  tc.mvm = policy_for(cfg.format, cfg.block_size);
  tc.cg.tolerance = cfg.tolerance;
  tc.cg.max_iters = cfg.max_iters;
  tc.cg.compute_format = cfg.format;
  const TrainResult result = train(X, y, tc);
  details["trace"] = to_json(result.trace);
  details["model"] = model_checkpoint(result.model, data.ds.standardization);

  Json metrics = {{"noise_sq", result.model.kernel.noise_sq},
                  {"outputscale_sq", result.model.kernel.outputscale_sq},
                  {"mean_lengthscale", result.model.kernel.mean_lengthscale()},
                  {"steps_completed", result.trace.steps.size()},
                  {"aborted_steps", result.trace.aborted_steps}};
  Index cg_total = 0;
  for (const auto &s : result.trace.steps) cg_total += s.cg_iterations;
  metrics["cg_iterations_total"] = cg_total;

  if (!data.ds.test.empty()) {
    CgConfig pc;
    pc.tolerance = 0.01;
    pc.max_iters = 200;
    const Prediction pred = predict(result.model, X, y, data.ds.X_test(), pc, true, tc.precond_rank);
    const Vector err = pred.mean - data.ds.y_test();
    metrics["rmse"] = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    double nll = 0.0;
    for (Index i = 0; i < err.size(); ++i) {
      nll += 0.5 * (std::log(2.0 * std::numbers::pi * pred.variance(i)) +
                    err(i) * err(i) / pred.variance(i));
    }
    metrics["nll"] = nll / static_cast<double>(err.size());
  } else {
    metrics["rmse"] = nullptr;
    metrics["nll"] = nullptr;
  }
  if (!cfg.out.empty()) {
    const std::string path = sibling(cfg, "trace.csv");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "step,noise_sq,outputscale_sq,mean_lengthscale,pseudo_loss,grad_inf_norm,cg_iterations\n";
    for (std::size_t k = 0; k < result.trace.steps.size(); ++k) {
      const auto &s = result.trace.steps[k];
      out << k << ',' << s.noise_sq << ',' << s.outputscale_sq << ',' << s.mean_lengthscale << ','
          << s.pseudo_loss << ',' << s.grad_inf_norm << ',' << s.cg_iterations << '\n';
    }
    artifacts.push_back(path);
  }
  return metrics;
}

Json run_spectrum(const ExperimentConfig &cfg, Json &details, Json &artifacts) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const Points X = data.ds.X_train();
  const KernelSpec spec = chosen_kernel(cfg);
  Json per_format = Json::object();
  for (const auto &fmt : formats_or_default(cfg)) {
    const SpectrumReport rep = quantized_spectrum(spec, X, fmt);
    const Index mid = rep.eigenvalues.size() / 2;
    per_format[fmt.name()] = {{"lambda_max", rep.eigenvalues(0)},
                              {"lambda_mid", rep.eigenvalues(mid)},
                              {"lambda_min", rep.eigenvalues(rep.eigenvalues.size() - 1)},
                              {"effective_dimension", effective_dimension(rep.eigenvalues, cfg.s)}};
    if (!cfg.out.empty()) {
      const std::string path = sibling(cfg, "spectrum." + fmt.name() + ".csv");
      write_spectrum_csv(path, rep);
      artifacts.push_back(path);
    }
  }
  return {{"s", cfg.s}, {"n", X.rows()}, {"formats", per_format}};
}

Json run_maxdist(const ExperimentConfig &cfg) {
  KernelSpec spec = chosen_kernel(cfg);
  const ZeroThreshold thr =
      cfg.subnormal_threshold ? ZeroThreshold::Underflow : ZeroThreshold::MinNormal;
  Json per_format = Json::object();
  for (const auto &fmt : formats_or_default(cfg)) {
    const SupportRadius r = max_representable_distance(spec, cfg.lengthscale, fmt, thr);
    per_format[fmt.name()] = std::isfinite(r.d_max) ? Json(r.d_max) : Json("inf");
  }
  return {{"family", family_name(spec.family)},
          {"lengthscale", cfg.lengthscale},
          {"threshold", cfg.subnormal_threshold ? "underflow" : "min_normal"},
          {"d_max", per_format}};
}

Json run_mvm_bench(const ExperimentConfig &cfg, Json &details) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const Points &X = data.ds.X;
  const KernelSpec spec = chosen_kernel(cfg);
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(X.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = unif(rng);
  // fp32 kernel entries, exact accumulation.
  const Vector reference =
      assemble_kernel_matrix(spec, X, FloatFormat::fp32(), true) * v;

  Json runs = Json::array();
  Json timings = Json::array();
  for (const auto &fmt : formats_or_default(cfg)) {
    std::vector<std::pair<Accumulation, FloatFormat>> variants = {
        {Accumulation::BlockSameFormat, fmt}, {Accumulation::KahanSameFormat, fmt}};
    if (fmt.mantissa_bits < 23) variants.push_back({Accumulation::BlockWiderFormat, FloatFormat::fp32()});
    for (const auto &[acc, wide] : variants) {
      MvmPolicy p;
      p.block_size = cfg.block_size;
      p.compute_format = fmt;
      p.accumulation = acc;
      p.accumulation_format = wide;
      const KernelOperator op(spec, X, p);
      const auto t0 = std::chrono::steady_clock::now();
      const Vector out = block_mvm(op, v);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const double err = ((out - reference).array().abs() / reference.array().abs()).mean();
      runs.push_back({{"format", fmt.name()},
                      {"accumulation", accumulation_name(acc)},
                      {"mean_relative_error", std::isfinite(err) ? Json(err) : Json(nullptr)}});
      timings.push_back({{"format", fmt.name()}, {"accumulation", accumulation_name(acc)}, {"seconds", secs}});
    }
  }
  details["mvm_timings"] = timings;
  return {{"n", X.rows()}, {"runs", runs}};
}

Json run_truncation(const ExperimentConfig &cfg, Json &details) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const Points X = data.ds.X_train();
  const Vector y = data.ds.y_train();
  const Points X_star = data.ds.test.empty() ? X : data.ds.X_test();
  const KernelSpec spec = chosen_kernel(cfg);
  const MvmPolicy policy = policy_for(cfg.format, cfg.block_size);
  MvmPolicy predict_policy = policy;
  predict_policy.downscale = false;
  const KernelOperator op(spec, X, policy);
  CgConfig cg;
  cg.tolerance = cfg.tolerance;
  cg.max_iters = cfg.max_iters;
  cg.compute_format = cfg.format;
  cg.preconditioner =
      std::make_shared<WoodburyPreconditioner>(kernel_pivoted_cholesky(spec, X, cfg.precond_rank));
  const SolveReport cache = cg_stable(op, y, Vector(), cg);
  if (cache.status() == CgStatus::Breakdown) {
    throw SolverBreakdown("truncation: CG breakdown computing the prediction cache");
  }
  const Vector v = cache.solution.col(0);
  double max_diff = 0.0;
  double mask_fraction = 0.0;
  Index pairs_trunc = 0;
  Index pairs_full = 0;
  for (Index t = 0; t < X_star.rows(); ++t) {
    const Vector xs = X_star.row(t).transpose();
    const TruncatedDot tr = truncated_predict_dot(spec, xs, X, v, predict_policy);
    const TruncatedDot full = full_predict_dot(spec, xs, X, v, predict_policy);
    max_diff = std::max(max_diff, std::abs(tr.value - full.value));
    mask_fraction += static_cast<double>(tr.evaluated_pairs) / static_cast<double>(X.rows());
    pairs_trunc += tr.evaluated_pairs;
    pairs_full += full.evaluated_pairs;
  }
  details["cache_solve"] = to_json(cache);
  return {{"test_points", X_star.rows()},
          {"max_abs_difference", max_diff},
          {"mean_mask_fraction", mask_fraction / static_cast<double>(X_star.rows())},
          {"evaluated_pairs_truncated", pairs_trunc},
          {"evaluated_pairs_full", pairs_full}};
}

Json run_ed_bound(const ExperimentConfig &cfg, Json &details) {
  const Data data = load_data(cfg);
  details["data"] = data_json(data);
  const KernelSpec spec = chosen_kernel(cfg);
  const SpectrumReport rep = quantized_spectrum(spec, data.ds.X_train(), cfg.format);
  // Quantization perturbs eigenvalues by roughly unit roundoff times the largest one.
  const double delta = cfg.delta ? *cfg.delta : cfg.format.unit_roundoff() * rep.eigenvalues(0);
  Vector lambdas = rep.eigenvalues.cwiseMax(0.0);
  EdBoundOptions opts;
  opts.samples = cfg.samples;
  opts.seed = cfg.seed;
  const EdBound b = quantized_ed_bound(lambdas, cfg.s, delta, opts);
  return {{"s", cfg.s},
          {"delta", delta},
          {"effective_dimension", effective_dimension(lambdas, cfg.s)},
          {"closed_form_lower", b.closed_form_lower},
          {"mc_estimate", b.mc_estimate},
          {"mc_stderr", b.mc_stderr},
          {"exact_expectation", b.exact}};
}

}  // namespace

Json run_experiment(const ExperimentConfig &cfg) {
  const auto &names = experiment_commands();
  if (std::find(names.begin(), names.end(), cfg.command) == names.end()) {
    throw ConfigError("unknown subcommand '" + cfg.command + "'");
  }
  if (cfg.precond_rank < 0) throw ConfigError("--precond-rank must be >= 0");
  if (cfg.block_size < 1) throw ConfigError("--block-size must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  Json details = Json::object();
  Json artifacts = Json::array();
  Json metrics;
  if (cfg.command == "solve") {
    metrics = run_solve(cfg, details, artifacts);
  } else if (cfg.command == "train") {
    metrics = run_train(cfg, details, artifacts);
  } else if (cfg.command == "spectrum") {
    metrics = run_spectrum(cfg, details, artifacts);
  } else if (cfg.command == "maxdist") {
    metrics = run_maxdist(cfg);
  } else if (cfg.command == "mvm-bench") {
    metrics = run_mvm_bench(cfg, details);
  } else if (cfg.command == "truncation") {
    metrics = run_truncation(cfg, details);
  } else {
    metrics = run_ed_bound(cfg, details);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json result = {{"command", cfg.command},
                 {"config", config_json(cfg)},
                 {"seed", cfg.seed},
                 {"metrics", metrics},
                 {"details", details},
                 {"timing", {{"wall_time_s", secs}}},
                 {"artifacts", artifacts}};
  if (details.contains("error")) result["error"] = details["error"];
  return result;
}

}  // namespace lpgp
