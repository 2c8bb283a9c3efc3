#ifndef LPGP_EXPERIMENTS_HPP
#define LPGP_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lpgp/serialization.hpp"

namespace lpgp {

struct SyntheticSource {
  Index n = 500;
  Index dim = 1;
  KernelFamily family = KernelFamily::Rbf;
};

// Flags shared by every subcommand; each subcommand reads what it needs.
struct ExperimentConfig {
  std::string command;
  std::string data_path;
  std::string target;
  std::optional<SyntheticSource> synthetic;
  FloatFormat format = FloatFormat::fp32();
  std::vector<FloatFormat> formats;
  std::optional<KernelFamily> kernel;
  double lengthscale = 1.0;
  double outputscale_sq = 1.0;
  double noise_sq = 0.1;
  Index precond_rank = 5;
  double tolerance = 1.0;
  Index max_iters = 50;
  Index steps = 50;
  double learning_rate = 0.1;
  Index probes = 8;
  std::uint64_t seed = 0;
  std::string out;
  // solve: write the pivoted Cholesky factor here as .npy.
  std::string factor_path;
  bool stabilized = false;
  Index block_size = 64;
  double split_fraction = 0.9;
  // spectrum / ed-bound
  double s = 0.01;
  std::optional<double> delta;
  Index samples = 10000;
  // maxdist
  bool subnormal_threshold = false;
};

// Names accepted as the first CLI argument.
const std::vector<std::string> &experiment_commands();

/*
 * Runs one experiment and returns the result document
 * {command, config, seed, metrics, details, timing, artifacts}. Everything
 * except "timing" is a pure function of the config. Sibling CSV files are
 * written next to cfg.out when it is set. Throws ConfigError for bad flags
 * and NumericalError subclasses for numerical failures.
 */
Json run_experiment(const ExperimentConfig &cfg);

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

}  // namespace lpgp

#endif
