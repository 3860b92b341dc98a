#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "elas/model/transformer.hpp"
#include "elas/optim/optimizer.hpp"
#include "elas/trainer/checkpoint.hpp"
#include "elas/trainer/config.hpp"
#include "elas/trainer/corpus.hpp"

namespace elas {

struct MetricsRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_ppl = 0.0;      // exp(eval_loss)
  double ffn_sparsity = 0.0;  // natural zero fraction of ReLU² outputs on eval
  double ms_per_step = 0.0;   // 0 unless timing is recorded
};

inline constexpr const char* kMetricsHeader =
    "step,lr,train_loss,eval_loss,eval_ppl,ffn_sparsity,ms_per_step";

/// One CSV line (no newline). Non-finite values print as NaN.
std::string format_metrics_row(const MetricsRow& row);
std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Parses a file produced by metrics_csv. Throws FormatError.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

enum class RunStatus { running, completed, diverged };
const char* to_string(RunStatus s) noexcept;

struct EvalResult {
  double loss = 0.0;
  double perplexity = 0.0;
  double ffn_sparsity = 0.0;
};

/// Mean token cross-entropy over `batches`. Throws ContractError when
/// `batches` is empty.
EvalResult evaluate(const TinyTransformer<float>& model, const std::vector<TokenBatch>& batches,
                    bool sparsity_on);

struct TrainResult {
  RunStatus status = RunStatus::running;
  std::int64_t steps_completed = 0;
  MetricsRow final_row;
  std::vector<MetricsRow> rows;
  std::string message;
};

/// Dense warmup followed by 2:4-sparse training of a TinyTransformer.
///
/// Step s (0-based) trains on corpus.train_batch(seed, s) with the FFN
/// activations sparsified iff sparse_training and s >= warmup_steps. A
/// metrics row is recorded before the update at every multiple of
/// eval_interval and once more after the last update. Evaluation sparsifies
/// once at least one sparse update has been made.
class Trainer {
 public:
  Trainer(TrainConfig cfg, Corpus corpus);

  /// Loads the corpus from cfg.corpus_path; resumes from cfg.resume_from
  /// when set.
  static Trainer from_config(const TrainConfig& cfg);

  /// Restores a run. The architecture and schedule come from the checkpoint;
  /// output paths, timing and resume settings come from `outputs` when
  /// given. Throws FormatError or ConfigError before building any state.
  static Trainer from_checkpoint(const Checkpoint& ckpt, const TrainConfig* outputs = nullptr);

  /// Makes one update (or the final row once total_steps is reached).
  /// Returns false when the run is finished or diverged.
  bool advance();

  /// Advances until completion, divergence or `stop_at` completed steps.
  /// Writes the metrics file and the final checkpoint when paths are set.
  TrainResult run(std::optional<std::int64_t> stop_at = std::nullopt);

  /// Evaluates on the eval split with the path the current step implies.
  EvalResult evaluate_now() const;

  Checkpoint to_checkpoint() const;
  void save_checkpoint(const std::string& path) const;
  void write_metrics(const std::string& path) const;

  const TrainConfig& config() const noexcept { return cfg_; }
  const TinyTransformer<float>& model() const noexcept { return model_; }
  const OptimizerState<float>& optimizer() const noexcept { return optim_; }
  const Corpus& corpus() const noexcept { return corpus_; }
  std::int64_t step() const noexcept { return step_; }
  RunStatus status() const noexcept { return status_; }
  const std::vector<MetricsRow>& rows() const noexcept { return rows_; }
  /// FFN sparsifier invocations made by training forward passes so far.
  std::int64_t sparsifier_calls() const noexcept { return sparsifier_calls_; }
  bool calibrated() const noexcept;
  const std::string& message() const noexcept { return message_; }
  TrainResult result() const;

 private:
  bool eval_sparse() const noexcept;
  void calibrate(const TokenBatch& batch);
  void record_row(std::int64_t s, double current_loss);
  void diverge(std::int64_t s, const std::string& why);
  void load_eval_batches();

  TrainConfig cfg_;
  Corpus corpus_;
  std::vector<TokenBatch> eval_batches_;
  TinyTransformer<float> model_;
  OptimizerState<float> optim_;
  std::int64_t step_ = 0;
  RunStatus status_ = RunStatus::running;
  std::vector<MetricsRow> rows_;
  double loss_sum_ = 0.0;
  std::int64_t loss_count_ = 0;
  double ms_sum_ = 0.0;
  std::int64_t sparsifier_calls_ = 0;
  std::string message_;
};

/// Trains per `cfg` (resuming if cfg.resume_from is set) to completion.
TrainResult run_training(const TrainConfig& cfg);

}  // namespace elas
