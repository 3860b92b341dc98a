#pragma once

#include <cstdint>

namespace elas {

/// Linear ramp from 0 to base_lr over the first `warmup_fraction` of training,
/// then cosine annealing down to min_lr at the final step.
struct LrSchedule {
  double base_lr = 3e-3;
  double min_lr = 3e-4;
  double warmup_fraction = 0.1;
};

/// Learning rate for the update made at `step` (0-based) of `total`.
/// Steps past `total` are clamped to it.
double lr_at(const LrSchedule& schedule, std::int64_t step, std::int64_t total);

}  // namespace elas
