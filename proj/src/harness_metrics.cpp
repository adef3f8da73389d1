#include "chanalign/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace harness {

double cdf90(std::vector<double> errors) {
  if (errors.empty()) throw std::invalid_argument("cdf90: empty error list");
  std::sort(errors.begin(), errors.end());
  size_t rank = static_cast<size_t>(
      std::ceil(0.9 * static_cast<double>(errors.size())));
  return errors[rank - 1];
}

PcaResult pca_project(const Eigen::MatrixXd& x, int k) {
  int m = static_cast<int>(x.rows());
  int d = static_cast<int>(x.cols());
  if (m < 2) throw std::invalid_argument("pca_project: need at least 2 rows");
  if (k < 1 || k > d) throw std::invalid_argument("pca_project: k out of range");

  PcaResult res;
  res.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - res.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(m - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // eigenvalues come back ascending; take the top k
  Eigen::VectorXd values = eig.eigenvalues().reverse();
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

  double total = std::max(values.sum(), 0.0);
  res.components = vectors.leftCols(k);
  res.projection = centered * res.components;
  res.explained_ratio.resize(static_cast<size_t>(k));
  for (int i = 0; i < k; i++) {
    double v = std::max(values[i], 0.0);
    res.explained_ratio[static_cast<size_t>(i)] = total > 0 ? v / total : 0.0;
  }
  return res;
}

}  // namespace harness
