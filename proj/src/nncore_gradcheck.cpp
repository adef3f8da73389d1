#include "chanalign/nncore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nncore {

GradCheckResult grad_check(const std::function<Tensor()>& forward, const std::vector<Tensor>& wrt,
                           double tol, double h, int max_coords, uint64_t seed) {
  for (const Tensor& t : wrt)
    if (t.grad().size() > 0) t.grad().setZero();

  Tensor loss = forward();
  backward(loss);
  std::vector<Eigen::ArrayXd> analytic;
  for (const Tensor& t : wrt)
    analytic.push_back(t.grad().size() > 0 ? t.grad() : Eigen::ArrayXd::Zero(t.size()).eval());

  std::mt19937_64 rng(seed);
  GradCheckResult res;
  res.pass = true;
  for (size_t ti = 0; ti < wrt.size(); ti++) {
    const Tensor& t = wrt[ti];
    std::vector<int64_t> coords(static_cast<size_t>(t.size()));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && static_cast<int64_t>(coords.size()) > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(max_coords));
    }
    for (int64_t c : coords) {
      double orig = t.data()[c];
      t.data()[c] = orig + h;
      double fp = forward().item();
      t.data()[c] = orig - h;
      double fm = forward().item();
      t.data()[c] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[ti][c];
      double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > res.max_err) {
        res.max_err = err;
        res.worst = "tensor" + std::to_string(ti) + "[" + std::to_string(c) + "]";
      }
    }
  }
  res.pass = res.max_err <= tol;
  return res;
}

}  // namespace nncore
