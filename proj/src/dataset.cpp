#include "lpgp/dataset.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lpgp/errors.hpp"

namespace lpgp {

Vector Standardization::standardize_y(const Vector &y) const {
  return (y.array() - y_mean) / y_std;
}

Vector Standardization::unstandardize_y(const Vector &y) const {
  return y.array() * y_std + y_mean;
}

namespace {

Points rows_of(const Points &X, const std::vector<Index> &idx) {
  Points out(static_cast<Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
  return out;
}

Vector entries_of(const Vector &y, const std::vector<Index> &idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = y(idx[i]);
  return out;
}

// Population mean and standard deviation over the selected rows.
std::pair<double, double> moments(const Vector &v, const std::vector<Index> &idx) {
  double mean = 0.0;
  for (Index i : idx) mean += v(i);
  mean /= static_cast<double>(idx.size());
  double var = 0.0;
  for (Index i : idx) var += (v(i) - mean) * (v(i) - mean);
  var /= static_cast<double>(idx.size());
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

Points Dataset::X_train() const { return rows_of(X, train); }
Vector Dataset::y_train() const { return entries_of(y, train); }
Points Dataset::X_test() const { return rows_of(X, test); }
Vector Dataset::y_test() const { return entries_of(y, test); }

Dataset make_dataset(Points X, Vector y, double split_fraction, std::uint64_t seed) {
  if (X.rows() != y.size()) throw DimensionMismatch("make_dataset: X and y sizes differ");
  if (X.rows() == 0) throw EmptyDataset("dataset has no rows");
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1]");
  }
  const Index n = X.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const Index n_train =
      std::clamp<Index>(std::llround(split_fraction * static_cast<double>(n)), 1, n);

  Dataset ds;
  ds.train.assign(order.begin(), order.begin() + n_train);
  ds.test.assign(order.begin() + n_train, order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());

  Standardization &st = ds.standardization;
  st.x_mean.resize(X.cols());
  st.x_std.resize(X.cols());
  for (Index d = 0; d < X.cols(); ++d) {
    const auto [mean, sd] = moments(X.col(d), ds.train);
    st.x_mean(d) = mean;
    st.x_std(d) = sd;
    X.col(d) = (X.col(d).array() - mean) / sd;
  }
  std::tie(st.y_mean, st.y_std) = moments(y, ds.train);
  ds.y = st.standardize_y(y);
  ds.X = std::move(X);
  return ds;
}

Dataset load_csv(const std::string &path, const std::string &target, double split_fraction,
                 std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw EmptyDataset("'" + path + "' is empty");
  const auto header = split_line(line);
  const auto target_it = std::find(header.begin(), header.end(), std::string_view(target));
  if (target_it == header.end()) {
    throw ConfigError("target column '" + target + "' not found in header");
  }
  const auto target_col = static_cast<std::size_t>(target_it - header.begin());
  const std::size_t ncols = header.size();

  std::vector<std::string> features;
  for (std::size_t c = 0; c < ncols; ++c) {
    if (c != target_col) features.emplace_back(header[c]);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  Index dropped = 0;
  long line_no = 1;
  std::vector<double> row(ncols);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncols) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncols) +
                           " cells, found " + std::to_string(cells.size()),
                       line_no, static_cast<long>(std::min(cells.size(), ncols)) + 1);
    }
    bool finite = true;
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string_view cell = cells[c];
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                             " ('" + std::string(header[c]) + "'): not a number: '" +
                             std::string(cell) + "'",
                         line_no, static_cast<long>(c) + 1);
      }
      finite = finite && std::isfinite(value);
      row[c] = value;
    }
    if (!finite) {
      ++dropped;
      continue;
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == target_col) {
        ys.push_back(row[c]);
      } else {
        xs.push_back(row[c]);
      }
    }
  }
  if (ys.empty()) throw EmptyDataset("'" + path + "' has no usable rows");

  const auto n = static_cast<Index>(ys.size());
  const auto dim = static_cast<Index>(features.size());
  Points X = Eigen::Map<RowMatrix>(xs.data(), n, dim);
  Vector y = Eigen::Map<Vector>(ys.data(), n);
  Dataset ds = make_dataset(std::move(X), std::move(y), split_fraction, seed);
  ds.feature_names = std::move(features);
  ds.target_name = target;
  ds.dropped_rows = dropped;
  return ds;
}

SyntheticData synthetic_gp(Index n, Index dim, const KernelSpec &kernel, std::uint64_t seed,
                           double low, double high) {
  if (n < 1 || dim < 1) throw ConfigError("synthetic data needs N >= 1 and D >= 1");
  if (!(high > low)) throw ConfigError("synthetic data needs high > low");
  kernel.validate(dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(low, high);
  std::normal_distribution<double> normal;
  SyntheticData data;
  data.X.resize(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) data.X(i, d) = coord(rng);
  }
  Vector xi(n);
  for (Index i = 0; i < n; ++i) xi(i) = normal(rng);
  const Matrix K = assemble_kernel_matrix(kernel, data.X, FloatFormat::fp64(), true);
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("synthetic GP covariance");
  data.y = llt.matrixL() * xi;
  return data;
}

}  // namespace lpgp
