#include "elas/optim/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace elas {

double lr_at(const LrSchedule& schedule, std::int64_t step, std::int64_t total) {
  if (total <= 0) return schedule.base_lr;
  const double t = static_cast<double>(std::clamp<std::int64_t>(step, 0, total));
  const double n = static_cast<double>(total);
  const double warm = schedule.warmup_fraction * n;
  if (t < warm) return schedule.base_lr * t / warm;
  if (n <= warm) return schedule.base_lr;
  const double progress = (t - warm) / (n - warm);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return schedule.min_lr + (schedule.base_lr - schedule.min_lr) * cosine;
}

}  // namespace elas
