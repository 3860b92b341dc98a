#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elas/model/transformer.hpp"
#include "elas/optim/optimizer.hpp"
#include "elas/optim/schedule.hpp"
#include "elas/sparsity24/sparsify.hpp"

namespace elas {

/// Everything that determines a training run.
///
/// Text form is flat `key = value` lines with `#` comments; see
/// to_config_text() for the full key list.
struct TrainConfig {
  ModelDims model;
  std::int64_t warmup_steps = 200;  // dense steps before 2:4 sparsity starts
  std::int64_t total_steps = 2000;
  std::int64_t refresh_every = 500;
  std::size_t batch_size = 8;
  LrSchedule schedule;
  AdamConfig adam;
  double grad_clip = 1.0;
  /// false trains the dense low-rank baseline; the sparsifier is never run.
  bool sparse_training = true;
  SparsifierKind sparsifier = SparsifierKind::naive;
  std::uint64_t seed = 0;

  std::string corpus_path;
  std::string metrics_path;
  std::string checkpoint_path;
  std::string resume_from;

  std::int64_t eval_interval = 100;
  std::size_t eval_batches = 4;
  double eval_fraction = 0.1;
  std::int64_t checkpoint_every = 0;
  /// Wall-clock timing goes into the metrics file only when set, so that
  /// metrics are byte-identical across reruns by default.
  bool record_timing = false;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// 2 layers, d_model 64, d_ff 256, rank 16, byte vocabulary, 2000 steps with
/// 200 dense warmup steps, over the bundled corpus.
TrainConfig desk_preset();

/// Sets one key from its text value. Throws ConfigError for unknown keys or
/// unparsable values.
void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Parses `key=value` text on top of `base`. Returns the keys that were set.
std::vector<std::string> parse_config_text(std::string_view text, TrainConfig& cfg);

/// Canonical text form; parse_config_text(to_config_text(c)) reproduces c.
std::string to_config_text(const TrainConfig& cfg);

/// Loads defaults ← file (if non-empty) ← `key=value` overrides. The seed
/// falls back to the ELAS_SEED environment variable only when neither the
/// file nor the overrides set it.
TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                        const TrainConfig& defaults = desk_preset());

/// Splits "key=value"; throws ConfigError without '='.
std::pair<std::string, std::string> split_setting(std::string_view setting);

}  // namespace elas
