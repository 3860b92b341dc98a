#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "elas/trainer/config.hpp"
#include "elas/trainer/trainer.hpp"

namespace elas {

struct AblationRow {
  std::string label;
  std::int64_t warmup_steps = 0;
  SparsifierKind sparsifier = SparsifierKind::naive;
  RunStatus status = RunStatus::running;
  std::int64_t steps_completed = 0;
  double final_eval_loss = 0.0;  // NaN when diverged
  double final_ppl = 0.0;        // NaN when diverged
};

inline constexpr const char* kAblationHeader =
    "label,warmup_steps,sparsifier,status,steps_completed,final_eval_loss,final_ppl";

/// One run of `base` per warmup value, all with the same seed. Divergence is
/// recorded in its row and the sweep continues. Throws ConfigError up front
/// if any value is negative or exceeds total_steps.
std::vector<AblationRow> run_warmup_ablation(const TrainConfig& base, const std::vector<std::int64_t>& warmups);

/// One run of `base` per sparsifier variant.
std::vector<AblationRow> run_sparsifier_ablation(const TrainConfig& base,
                                                 const std::vector<SparsifierKind>& variants);

/// Same seed and data as `base`, trained with the given overrides; file
/// outputs of `base` are dropped so sweeps never clobber each other.
AblationRow run_ablation_point(TrainConfig cfg, const std::string& label);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace elas
