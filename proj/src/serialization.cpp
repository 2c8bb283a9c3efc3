#include "lpgp/serialization.hpp"

#include "lpgp/errors.hpp"

namespace lpgp {

Json to_json(const Vector &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Json to_json(const FloatFormat &fmt) { return fmt.name(); }

Json to_json(const KernelSpec &spec) {
  Json j = {{"family", family_name(spec.family)},
            {"lengthscales", spec.lengthscales},
            {"outputscale_sq", spec.outputscale_sq},
            {"noise_sq", spec.noise_sq}};
  if (spec.family == KernelFamily::RationalQuadratic) j["rq_alpha"] = spec.rq_alpha;
  if (spec.family == KernelFamily::Periodic) {
    j["period"] = spec.period;
    j["periodic_lambda"] = spec.periodic_lambda;
  }
  return j;
}

KernelSpec kernel_from_json(const Json &j) {
  try {
    KernelSpec spec;
    spec.family = parse_family(j.at("family").get<std::string>());
    spec.lengthscales = j.at("lengthscales").get<std::vector<double>>();
    spec.outputscale_sq = j.at("outputscale_sq").get<double>();
    spec.noise_sq = j.at("noise_sq").get<double>();
    spec.rq_alpha = j.value("rq_alpha", spec.rq_alpha);
    spec.period = j.value("period", spec.period);
    spec.periodic_lambda = j.value("periodic_lambda", spec.periodic_lambda);
    if (spec.lengthscales.empty()) throw ConfigError("kernel JSON: empty lengthscales");
    return spec;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("kernel JSON: ") + e.what());
  }
}

Json to_json(const MvmPolicy &policy) {
  return {{"block_size", policy.block_size},
          {"compute_format", policy.compute_format.name()},
          {"accumulation", accumulation_name(policy.accumulation)},
          {"accumulation_format", policy.accumulation_format.name()},
          {"downscale", policy.downscale}};
}

Json to_json(const SolveReport &report, bool include_solution) {
  Json columns = Json::array();
  for (const auto &c : report.columns) {
    Json col = {{"status", status_name(c.status)},
                {"iterations", c.iterations},
                {"residual_history", c.residual_history},
                {"final_residual", c.residual_history.empty() ? 0.0 : c.residual_history.back()}};
    if (!c.breakdown_reason.empty()) col["breakdown_reason"] = c.breakdown_reason;
    columns.push_back(col);
  }
  Json j = {{"status", status_name(report.status())},
            {"iterations", report.iterations()},
            {"columns", columns}};
  if (include_solution) {
    Json sol = Json::array();
    for (Index c = 0; c < report.solution.cols(); ++c) sol.push_back(to_json(Vector(report.solution.col(c))));
    j["solution"] = sol;
  }
  return j;
}

Json to_json(const TrainTrace &trace) {
  Json steps = Json::array();
  for (const auto &s : trace.steps) {
    steps.push_back({{"noise_sq", s.noise_sq},
                     {"outputscale_sq", s.outputscale_sq},
                     {"mean_lengthscale", s.mean_lengthscale},
                     {"pseudo_loss", s.pseudo_loss},
                     {"grad_inf_norm", s.grad_inf_norm},
                     {"cg_iterations", s.cg_iterations}});
  }
  return {{"steps", steps}, {"aborted_steps", trace.aborted_steps}};
}

Json to_json(const Standardization &st) {
  return {{"x_mean", to_json(st.x_mean)},
          {"x_std", to_json(st.x_std)},
          {"y_mean", st.y_mean},
          {"y_std", st.y_std}};
}

Json model_checkpoint(const GpModel &model, const Standardization &st) {
  return {{"family", family_name(model.kernel.family)},
          {"raw_parameters", to_json(model.raw())},
          {"num_lengthscales", model.kernel.lengthscales.size()},
          {"constant_mean", model.constant_mean},
          {"kernel", to_json(model.kernel)},
          {"standardization", to_json(st)}};
}

GpModel model_from_checkpoint(const Json &j) {
  try {
    GpModel model;
    model.kernel = kernel_from_json(j.at("kernel"));
    model.constant_mean = j.at("constant_mean").get<double>();
    const auto raw = j.at("raw_parameters").get<std::vector<double>>();
    model.set_raw(Eigen::Map<const Vector>(raw.data(), static_cast<Index>(raw.size())));
    return model;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("checkpoint JSON: ") + e.what());
  }
}

}  // namespace lpgp
