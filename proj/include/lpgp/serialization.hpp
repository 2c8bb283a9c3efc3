#ifndef LPGP_SERIALIZATION_HPP
#define LPGP_SERIALIZATION_HPP

#include <json.hpp>
#include <string>

#include "lpgp/cg.hpp"
#include "lpgp/dataset.hpp"
#include "lpgp/kernels.hpp"
#include "lpgp/spectral.hpp"
#include "lpgp/training.hpp"

namespace lpgp {

using Json = nlohmann::json;

Json to_json(const FloatFormat &fmt);
Json to_json(const KernelSpec &spec);
// Accepts the output of to_json(KernelSpec); rq_alpha, period and
// periodic_lambda are optional. Throws ConfigError on malformed input.
KernelSpec kernel_from_json(const Json &j);

Json to_json(const MvmPolicy &policy);
Json to_json(const SolveReport &report, bool include_solution = false);
Json to_json(const TrainTrace &trace);
Json to_json(const Standardization &st);

// Checkpoint: raw parameters, kernel family and standardization constants.
Json model_checkpoint(const GpModel &model, const Standardization &st);
GpModel model_from_checkpoint(const Json &j);

Json to_json(const Vector &v);

}  // namespace lpgp

#endif
