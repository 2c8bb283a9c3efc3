// lowprec-gp: command-line front end for the experiments library.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lpgp/errors.hpp"
#include "lpgp/experiments.hpp"

namespace {

using lpgp::Json;

struct RawFlags {
  std::vector<std::string> synthetic;
  std::string format = "fp32";
  std::string formats;
  std::string kernel;
  std::string family;
};

const std::map<std::string, std::string> kDescriptions = {
    {"train", "Fit kernel hyperparameters with Adam on the pseudo-loss"},
    {"solve", "Solve (K + noise I) x = y with preconditioned CG"},
    {"spectrum", "Eigenvalues and effective dimension of quantized kernel matrices"},
    {"maxdist", "Largest distance with a nonzero kernel value per format"},
    {"mvm-bench", "MVM relative error for each accumulation strategy"},
    {"truncation", "Prediction error when truncating to the nonzero support"},
    {"ed-bound", "Expected effective dimension under eigenvalue perturbation"},
};

int emit_error(int code, const std::string &type, const std::string &message) {
  const Json payload = {{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
  std::cout << payload.dump(2) << std::endl;
  return code;
}

std::vector<lpgp::FloatFormat> parse_format_list(const std::string &list) {
  std::vector<lpgp::FloatFormat> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(lpgp::parse_format(item));
  }
  return out;
}

lpgp::ExperimentConfig finish(const std::string &command, lpgp::ExperimentConfig cfg,
                              const RawFlags &raw) {
  cfg.command = command;
  cfg.format = lpgp::parse_format(raw.format);
  cfg.formats = parse_format_list(raw.formats);
  if (!raw.kernel.empty() && !raw.family.empty() && raw.kernel != raw.family) {
    throw lpgp::ConfigError("--kernel and --family disagree");
  }
  const std::string family = raw.kernel.empty() ? raw.family : raw.kernel;
  if (!family.empty()) cfg.kernel = lpgp::parse_family(family);
  if (!raw.synthetic.empty()) {
    lpgp::SyntheticSource src;
    try {
      src.n = std::stol(raw.synthetic.at(0));
      src.dim = std::stol(raw.synthetic.at(1));
    } catch (const std::exception &) {
      throw lpgp::ConfigError("--synthetic expects N D FAMILY");
    }
    src.family = lpgp::parse_family(raw.synthetic.at(2));
    if (src.n < 2 || src.dim < 1) throw lpgp::ConfigError("--synthetic needs N >= 2 and D >= 1");
    cfg.synthetic = src;
  }
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Mixed-precision Gaussian-process regression experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  lpgp::ExperimentConfig cfg;
  RawFlags raw;
  std::string delta_text;

  for (const auto &name : lpgp::experiment_commands()) {
    CLI::App *sub = app.add_subcommand(name, kDescriptions.at(name));
    sub->add_option("--data", cfg.data_path, "CSV file with a header row");
    sub->add_option("--target", cfg.target, "Target column name for --data");
    sub->add_option("--synthetic", raw.synthetic, "Synthetic GP data: N D FAMILY")->expected(3);
    sub->add_option("--format", raw.format, "fp64, fp32, fp16, bf16 or fp16-ftz");
    sub->add_option("--formats", raw.formats, "Comma-separated formats");
    sub->add_option("--kernel", raw.kernel, "rbf, matern12, matern32, matern52, rq, periodic");
    sub->add_option("--family", raw.family, "Alias of --kernel");
    sub->add_option("--lengthscale", cfg.lengthscale, "Kernel lengthscale");
    sub->add_option("--outputscale", cfg.outputscale_sq, "Kernel outputscale a^2");
    sub->add_option("--noise", cfg.noise_sq, "Noise variance sigma^2");
    sub->add_option("--precond-rank", cfg.precond_rank, "Pivoted Cholesky rank");
    sub->add_option("--tol", cfg.tolerance, "CG residual-norm tolerance");
    sub->add_option("--max-iters", cfg.max_iters, "CG iteration cap");
    sub->add_option("--steps", cfg.steps, "Optimizer steps");
    sub->add_option("--lr", cfg.learning_rate, "Adam learning rate");
    sub->add_option("--probes", cfg.probes, "Probe vectors per step");
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--out", cfg.out, "Write the JSON result here; CSVs go alongside");
    sub->add_option("--save-factor", cfg.factor_path, "solve: write the preconditioner factor as .npy");
    sub->add_flag("--stabilized", cfg.stabilized, "Use the stabilized CG variant");
    sub->add_option("--block-size", cfg.block_size, "MVM block size");
    sub->add_option("--split", cfg.split_fraction, "Train fraction");
    sub->add_option("--s", cfg.s, "Effective-dimension regularizer");
    sub->add_option("--delta", delta_text, "Eigenvalue perturbation half-width");
    sub->add_option("--samples", cfg.samples, "Monte Carlo samples");
    sub->add_flag("--subnormal", cfg.subnormal_threshold, "Support radius at the underflow threshold");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return emit_error(lpgp::kExitConfig, "ConfigError", e.what());
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    if (!delta_text.empty()) cfg.delta = std::stod(delta_text);
    const lpgp::ExperimentConfig full = finish(command, cfg, raw);
    const Json result = lpgp::run_experiment(full);
    const std::string text = result.dump(2);
    if (!full.out.empty()) {
      std::ofstream out(full.out);
      if (!out) throw lpgp::ConfigError("cannot open '" + full.out + "' for writing");
      out << text << '\n';
    }
    std::cout << text << std::endl;
    return result.contains("error") ? lpgp::kExitNumerical : lpgp::kExitOk;
  } catch (const lpgp::ParseError &e) {
    return emit_error(lpgp::kExitConfig, "ParseError", e.what());
  } catch (const lpgp::EmptyDataset &e) {
    return emit_error(lpgp::kExitConfig, "EmptyDataset", e.what());
  } catch (const lpgp::ConfigError &e) {
    return emit_error(lpgp::kExitConfig, "ConfigError", e.what());
  } catch (const std::invalid_argument &e) {
    return emit_error(lpgp::kExitConfig, "ConfigError", e.what());
  } catch (const lpgp::NumericalError &e) {
    return emit_error(lpgp::kExitNumerical, "NumericalError", e.what());
  }
}
