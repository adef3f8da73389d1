#pragma once

#include <Eigen/Dense>
#include <vector>

namespace harness {

// Nearest-rank 90th percentile: sorted ascending, 1-based index
// ceil(0.9*N). Throws on empty input.
double cdf90(std::vector<double> errors);

struct PcaResult {
  Eigen::MatrixXd projection;            // M x k
  std::vector<double> explained_ratio;   // k, non-increasing
  Eigen::MatrixXd components;            // D x k principal axes
  Eigen::VectorXd mean;                  // D
};

// Mean-centered projection onto the top-k principal axes.
PcaResult pca_project(const Eigen::MatrixXd& x, int k);

}  // namespace harness
