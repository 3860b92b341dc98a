#include "elas/trainer/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace elas {

AblationRow run_ablation_point(TrainConfig cfg, const std::string& label) {
  cfg.metrics_path.clear();
  cfg.checkpoint_path.clear();
  cfg.resume_from.clear();
  cfg.checkpoint_every = 0;
  cfg.validate();
  const TrainResult r = run_training(cfg);

  AblationRow row;
  row.label = label;
  row.warmup_steps = cfg.warmup_steps;
  row.sparsifier = cfg.sparsifier;
  row.status = r.status;
  row.steps_completed = r.steps_completed;
  if (r.status == RunStatus::completed) {
    row.final_eval_loss = r.final_row.eval_loss;
    row.final_ppl = r.final_row.eval_ppl;
  } else {
    row.final_eval_loss = row.final_ppl = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

std::vector<AblationRow> run_warmup_ablation(const TrainConfig& base, const std::vector<std::int64_t>& warmups) {
  for (const auto w : warmups) {
    if (w < 0 || w > base.total_steps) {
      throw ConfigError("warmup " + std::to_string(w) + " is outside [0, " + std::to_string(base.total_steps) + "]");
    }
  }
  std::vector<AblationRow> rows;
  for (const auto w : warmups) {
    TrainConfig cfg = base;
    cfg.warmup_steps = w;
    rows.push_back(run_ablation_point(cfg, "warmup=" + std::to_string(w)));
  }
  return rows;
}

std::vector<AblationRow> run_sparsifier_ablation(const TrainConfig& base,
                                                 const std::vector<SparsifierKind>& variants) {
  std::vector<AblationRow> rows;
  for (const auto kind : variants) {
    TrainConfig cfg = base;
    cfg.sparsifier = kind;
    cfg.sparse_training = true;
    rows.push_back(run_ablation_point(cfg, std::string(to_string(kind))));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = std::string(kAblationHeader) + "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.label + "," + std::to_string(r.warmup_steps) + "," + std::string(to_string(r.sparsifier)) + "," +
           to_string(r.status) + "," + std::to_string(r.steps_completed) + ",";
    const double values[2] = {r.final_eval_loss, r.final_ppl};
    for (int i = 0; i < 2; ++i) {
      if (i > 0) out += ',';
      if (std::isfinite(values[i])) {
        std::snprintf(buf, sizeof buf, "%.9g", values[i]);
        out += buf;
      } else {
        out += "NaN";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace elas
