#ifndef LPGP_DATASET_HPP
#define LPGP_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lpgp/kernels.hpp"
#include "lpgp/types.hpp"

namespace lpgp {

struct Standardization {
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  Vector standardize_y(const Vector &y) const;
  Vector unstandardize_y(const Vector &y) const;
};

// Features and target standardized with train-split statistics.
struct Dataset {
  Points X;
  Vector y;
  std::vector<Index> train;
  std::vector<Index> test;
  Standardization standardization;
  std::vector<std::string> feature_names;
  std::string target_name;
  Index dropped_rows = 0;

  Index size() const { return X.rows(); }
  Points X_train() const;
  Vector y_train() const;
  Points X_test() const;
  Vector y_test() const;
};

/*
 * Shuffles with `seed`, puts round(split_fraction * N) rows (at least one)
 * in the train split and standardizes every column with population
 * statistics of that split. Columns with zero spread keep scale 1.
 */
Dataset make_dataset(Points X, Vector y, double split_fraction, std::uint64_t seed);

/*
 * CSV with one header row and numeric cells. `target` names a header
 * column. Rows holding NaN or infinite values are dropped and counted.
 * Throws ParseError (1-based line and column) and EmptyDataset.
 */
Dataset load_csv(const std::string &path, const std::string &target, double split_fraction = 0.9,
                 std::uint64_t seed = 0);

struct SyntheticData {
  Points X;
  Vector y;
};

// X uniform on [low, high]^dim, y one fp64 draw from the GP prior with noise
// (kernel + noise_sq I).
SyntheticData synthetic_gp(Index n, Index dim, const KernelSpec &kernel, std::uint64_t seed,
                           double low = -3.0, double high = 3.0);

}  // namespace lpgp

#endif
