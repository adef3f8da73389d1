#include "chanalign/nncore/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace nncore {

AdamW::AdamW(ParameterStore& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(Eigen::ArrayXd::Zero(t.size()));
    v_.emplace_back(Eigen::ArrayXd::Zero(t.size()));
  }
}

void AdamW::step(double lr) {
  if (m_.size() != params_->items().size())
    throw std::invalid_argument("AdamW: parameter store changed size after construction");
  t_ += 1;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_->items().size(); i++) {
    Tensor t = params_->items()[i].second;
    if (!t.requires_grad()) continue;
    Eigen::ArrayXd& w = t.data();
    if (cfg_.weight_decay != 0.0) w -= lr * cfg_.weight_decay * w;
    if (t.grad().size() == 0) t.node()->ensure_grad();
    const Eigen::ArrayXd& g = t.grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
    w -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
  }
}

double lr_at_step(const LrSchedule& sched, int64_t step) {
  if (step < 0) throw std::invalid_argument("lr_at_step: negative step");
  int64_t phase = sched.cycle_steps > 0 ? step % sched.cycle_steps : step;
  if (phase <= sched.warmup_steps) {
    if (sched.warmup_steps == 0) return sched.max_lr;
    return sched.min_lr +
           (sched.max_lr - sched.min_lr) * static_cast<double>(phase) / sched.warmup_steps;
  }
  double progress = static_cast<double>(phase - sched.warmup_steps) /
                    static_cast<double>(sched.cycle_steps - sched.warmup_steps);
  return sched.min_lr + (sched.max_lr - sched.min_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace nncore
