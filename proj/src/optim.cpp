#include "varcon/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "varcon/types.hpp"

namespace varcon {

double lr_at(const LrSchedule& schedule, std::size_t step) {
  const std::size_t total = schedule.total_steps();
  const std::size_t warmup = std::min(schedule.warmup_steps(), total);
  if (step < warmup)
    return schedule.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t decay_steps = total - warmup;
  if (decay_steps == 0) return schedule.base_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(decay_steps));
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
              double lr) {
  if (grads.size() != params.size() || state.momentum_buffer.size() != params.size())
    throw ShapeMismatch("optimizer shapes disagree: params " + std::to_string(params.size()) +
                        ", grads " + std::to_string(grads.size()) + ", buffers " +
                        std::to_string(state.momentum_buffer.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& buf = state.momentum_buffer[i];
    buf = state.momentum * buf + (grads[i] + state.weight_decay * params[i]);
    params[i] -= lr * buf;
  }
  ++state.step_count;
}

double epsilon_step(double epsilon, double grad_epsilon, double lr, EpsilonBounds bounds) {
  return std::clamp(epsilon - lr * grad_epsilon, bounds.lo, bounds.hi);
}

}  // namespace varcon
