#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace varcon {

struct OptimizerState {
  std::vector<double> momentum_buffer;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t step_count = 0;

  OptimizerState() = default;
  OptimizerState(std::size_t parameter_count, double momentum_, double weight_decay_)
      : momentum_buffer(parameter_count, 0.0), momentum(momentum_), weight_decay(weight_decay_) {}
};

/// Linear warmup from 0 to base_lr, then cosine decay to 0.
struct LrSchedule {
  double base_lr = 0.05;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 1;
  std::size_t steps_per_epoch = 1;

  std::size_t total_steps() const { return total_epochs * steps_per_epoch; }
  std::size_t warmup_steps() const { return warmup_epochs * steps_per_epoch; }
};

double lr_at(const LrSchedule& schedule, std::size_t step);

/// buf <- m buf + (grad + wd param); param <- param - lr buf.
void sgd_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
              double lr);

struct EpsilonBounds {
  double lo = 0.0;
  double hi = 0.08;
};

/// clamp(eps - lr grad, lo, hi). No weight decay is applied to eps.
double epsilon_step(double epsilon, double grad_epsilon, double lr, EpsilonBounds bounds = {});

}  // namespace varcon
