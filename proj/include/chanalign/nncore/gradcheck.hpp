#pragma once

#include <functional>
#include <string>
#include <vector>

#include "chanalign/nncore/tensor.hpp"

namespace nncore {

struct GradCheckResult {
  bool pass = false;
  double max_err = 0.0;
  std::string worst;  // "tensor_index[coord]" of the worst coordinate
};

// Compares analytic reverse-mode gradients against central finite
// differences. `forward` must rebuild the graph from the current data of
// the `wrt` tensors on every call and return a scalar loss.
// When max_coords > 0, a random subset of coordinates per tensor is
// checked (seeded); otherwise all coordinates are.
GradCheckResult grad_check(const std::function<Tensor()>& forward, const std::vector<Tensor>& wrt,
                           double tol = 1e-4, double h = 1e-5, int max_coords = -1,
                           uint64_t seed = 0);

}  // namespace nncore
