#ifndef LPGP_TYPES_HPP
#define LPGP_TYPES_HPP

#include <Eigen/Core>

namespace lpgp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One point per row.
using Points = Eigen::MatrixXd;

}  // namespace lpgp

#endif
