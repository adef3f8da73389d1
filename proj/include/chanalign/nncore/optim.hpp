#pragma once

#include <cstdint>

#include "chanalign/nncore/layers.hpp"

namespace nncore {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: the decay `w -= lr*wd*w` is applied
// separately from (and before) the bias-corrected adaptive update.
class AdamW {
 public:
  explicit AdamW(ParameterStore& params, AdamWConfig cfg = {});
  void step(double lr);
  void zero_grad() { params_->zero_grad(); }
  int64_t step_count() const { return t_; }

 private:
  ParameterStore* params_;
  AdamWConfig cfg_;
  std::vector<Eigen::ArrayXd> m_, v_;
  int64_t t_ = 0;
};

// Linear warmup from min_lr to max_lr over warmup_steps, cosine decay back
// to min_lr over the rest of the cycle, then restart.
struct LrSchedule {
  int warmup_steps = 200;
  int cycle_steps = 2000;
  double min_lr = 0.0;
  double max_lr = 5e-4;
};

double lr_at_step(const LrSchedule& sched, int64_t step);

}  // namespace nncore
