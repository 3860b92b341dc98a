#include "elas/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "elas/numerics/linalg.hpp"
#include "elas/optim/schedule.hpp"

namespace elas {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kRowFields = 7;

void append_double(std::string& out, const char* fmt, double v) {
  if (!std::isfinite(v)) {
    out += "NaN";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, fmt, v);
  out += buf;
}

SparsifierVariant initial_variant(SparsifierKind kind) {
  return {kind, std::nullopt, std::nullopt};
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
  std::string out = std::to_string(r.step);
  out += ',';
  append_double(out, "%.9g", r.lr);
  out += ',';
  append_double(out, "%.9g", r.train_loss);
  out += ',';
  append_double(out, "%.9g", r.eval_loss);
  out += ',';
  append_double(out, "%.9g", r.eval_ppl);
  out += ',';
  append_double(out, "%.6f", r.ffn_sparsity);
  out += ',';
  append_double(out, "%.3f", r.ms_per_step);
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) out += format_metrics_row(r) + "\n";
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics file has an unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell == "NaN" ? kNaN : std::strtod(cell.c_str(), nullptr));
    if (f.size() != kRowFields) throw FormatError("metrics row has " + std::to_string(f.size()) + " fields");
    rows.push_back({static_cast<std::int64_t>(f[0]), f[1], f[2], f[3], f[4], f[5], f[6]});
  }
  return rows;
}

const char* to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::completed: return "completed";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

EvalResult evaluate(const TinyTransformer<float>& model, const std::vector<TokenBatch>& batches,
                    bool sparsity_on) {
  if (batches.empty()) throw ContractError("evaluate: no eval batches");
  double loss_tokens = 0.0;
  double sparsity_tokens = 0.0;
  double tokens = 0.0;
  for (const auto& b : batches) {
    const auto fwd = model_forward(model, b, sparsity_on, /*keep_activations=*/false);
    const double n = static_cast<double>(b.tokens());
    loss_tokens += fwd.loss * n;
    sparsity_tokens += fwd.saved.natural_sparsity() * n;
    tokens += n;
  }
  EvalResult r;
  r.loss = loss_tokens / tokens;
  r.perplexity = std::exp(r.loss);
  r.ffn_sparsity = sparsity_tokens / tokens;
  return r;
}

Trainer::Trainer(TrainConfig cfg, Corpus corpus) : cfg_(std::move(cfg)), corpus_(std::move(corpus)) {
  cfg_.validate();
  model_ = TinyTransformer<float>::init(cfg_.model, cfg_.seed, initial_variant(cfg_.sparsifier));
  optim_ = OptimizerState<float>::for_model(model_, cfg_.adam, cfg_.refresh_every);
  load_eval_batches();
}

void Trainer::load_eval_batches() {
  eval_batches_ = corpus_.eval_batches(cfg_.eval_batches, cfg_.batch_size, cfg_.model.seq_len);
}

Trainer Trainer::from_config(const TrainConfig& cfg) {
  if (!cfg.resume_from.empty()) return from_checkpoint(Checkpoint::load(cfg.resume_from), &cfg);
  return Trainer(cfg, Corpus::from_file(cfg.corpus_path, cfg.eval_fraction));
}

bool Trainer::calibrated() const noexcept {
  for (const auto& l : model_.layers) {
    if (!l.ffn.sparsifier.scale) return false;
  }
  return true;
}

bool Trainer::eval_sparse() const noexcept {
  return cfg_.sparse_training && step_ > cfg_.warmup_steps;
}

EvalResult Trainer::evaluate_now() const { return evaluate(model_, eval_batches_, eval_sparse()); }

void Trainer::calibrate(const TokenBatch& batch) {
  // β per layer from that layer's dense ReLU² output on this batch.
  const auto fwd = model_forward(model_, batch, /*sparsity_on=*/false);
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const CalibrationResult c = calibrate_soft_scale(fwd.saved.layers[i].ffn.activation);
    model_.layers[i].ffn.sparsifier = SparsifierVariant::soft_activation_with_scale(c.scale);
  }
}

void Trainer::record_row(std::int64_t s, double current_loss) {
  const EvalResult ev = evaluate_now();
  MetricsRow row;
  row.step = s;
  row.lr = lr_at(cfg_.schedule, s, cfg_.total_steps);
  row.train_loss = loss_count_ > 0 ? loss_sum_ / static_cast<double>(loss_count_) : current_loss;
  row.eval_loss = ev.loss;
  row.eval_ppl = ev.perplexity;
  row.ffn_sparsity = ev.ffn_sparsity;
  row.ms_per_step = cfg_.record_timing && loss_count_ > 0 ? ms_sum_ / static_cast<double>(loss_count_) : 0.0;
  rows_.push_back(row);
  loss_sum_ = 0.0;
  loss_count_ = 0;
  ms_sum_ = 0.0;
}

void Trainer::diverge(std::int64_t s, const std::string& why) {
  MetricsRow row;
  row.step = s;
  row.lr = lr_at(cfg_.schedule, s, cfg_.total_steps);
  row.train_loss = row.eval_loss = row.eval_ppl = row.ffn_sparsity = kNaN;
  rows_.push_back(row);
  status_ = RunStatus::diverged;
  message_ = "diverged at step " + std::to_string(s) + ": " + why;
}

bool Trainer::advance() {
  if (status_ != RunStatus::running) return false;
  const std::int64_t s = step_;
  if (s >= cfg_.total_steps) {
    // Final row after the last update; with zero steps, report on batch 0.
    double current = kNaN;
    if (loss_count_ == 0) {
      current = model_forward(model_, corpus_.train_batch(cfg_.seed, s, cfg_.batch_size, cfg_.model.seq_len),
                              eval_sparse(), false)
                    .loss;
    }
    record_row(s, current);
    status_ = RunStatus::completed;
    return false;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const TokenBatch batch = corpus_.train_batch(cfg_.seed, s, cfg_.batch_size, cfg_.model.seq_len);
  const bool sparse = cfg_.sparse_training && s >= cfg_.warmup_steps;
  if (sparse && cfg_.sparsifier == SparsifierKind::soft_activation && !calibrated()) calibrate(batch);

  auto fwd = model_forward(model_, batch, sparse);
  sparsifier_calls_ += static_cast<std::int64_t>(fwd.saved.sparsifier_calls);
  if (!std::isfinite(fwd.loss)) {
    diverge(s, "non-finite training loss");
    return false;
  }
  const double loss = fwd.loss;
  if (s % cfg_.eval_interval == 0) record_row(s, loss);

  TinyTransformer<float> grads = model_backward(model_, fwd.saved);
  fwd = {};
  if (!std::isfinite(clip_grad_norm(grads, cfg_.grad_clip))) {
    diverge(s, "non-finite gradient norm");
    return false;
  }
  try {
    step_approx(optim_, model_, grads, lr_at(cfg_.schedule, s, cfg_.total_steps));
  } catch (const NumericError& e) {
    diverge(s, e.what());
    return false;
  }
  if (optim_.refresh_due(s)) {
    for (const auto& outcome : refresh_all(optim_, model_)) {
      if (!outcome.warning.empty()) std::clog << "warning: " << outcome.warning << "\n";
    }
  }

  loss_sum_ += loss;
  ++loss_count_;
  step_ = s + 1;
  optim_.step = step_;
  const auto t1 = std::chrono::steady_clock::now();
  ms_sum_ += std::chrono::duration<double, std::milli>(t1 - t0).count();

  if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_path.empty() && step_ % cfg_.checkpoint_every == 0 &&
      step_ < cfg_.total_steps) {
    save_checkpoint(cfg_.checkpoint_path);
  }
  return true;
}

TrainResult Trainer::result() const {
  TrainResult r;
  r.status = status_;
  r.steps_completed = step_;
  r.rows = rows_;
  if (!rows_.empty()) r.final_row = rows_.back();
  r.message = message_;
  return r;
}

TrainResult Trainer::run(std::optional<std::int64_t> stop_at) {
  while (status_ == RunStatus::running && (!stop_at || step_ < *stop_at)) advance();
  if (!cfg_.metrics_path.empty()) write_metrics(cfg_.metrics_path);
  if (!cfg_.checkpoint_path.empty() && status_ != RunStatus::diverged) save_checkpoint(cfg_.checkpoint_path);
  return result();
}

void Trainer::write_metrics(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write metrics file '" + path + "'");
  out << metrics_csv(rows_);
  if (!out) throw IoError("failed writing metrics file '" + path + "'");
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint c;
  c.put_text("config", to_config_text(cfg_));
  c.put_i64("state.step", {step_});
  c.put_i64("state.status", {static_cast<std::int64_t>(status_)});
  c.put_i64("state.sparsifier_calls", {sparsifier_calls_});
  c.put_i64("state.loss_count", {loss_count_});
  c.put_f64("state.loss_sum", {loss_sum_});
  c.put_f64("state.ms_sum", {ms_sum_});
  // Batches are a pure function of (seed, step), so these two fields are the
  // entire data-order RNG state.
  c.put_i64("rng.seed", {static_cast<std::int64_t>(cfg_.seed)});
  c.put_i64("rng.step", {step_});

  std::vector<double> scales;
  for (const auto& l : model_.layers) scales.push_back(l.ffn.sparsifier.scale.value_or(kNaN));
  c.put_f64("ffn.sparsifier_scale", scales);

  model_.for_each_parameter([&](const std::string& name, const Matrix& p) { c.put_matrix("model." + name, p); });
  std::vector<std::int64_t> steps;
  for (std::size_t i = 0; i < optim_.names.size(); ++i) {
    c.put_matrix("optim." + optim_.names[i] + ".m", optim_.moments[i].m);
    c.put_matrix("optim." + optim_.names[i] + ".v", optim_.moments[i].v);
    steps.push_back(optim_.moments[i].steps);
  }
  c.put_i64("optim.steps", steps);

  std::vector<double> flat;
  for (const auto& r : rows_) {
    flat.insert(flat.end(), {static_cast<double>(r.step), r.lr, r.train_loss, r.eval_loss, r.eval_ppl,
                             r.ffn_sparsity, r.ms_per_step});
  }
  c.put_f64("metrics.rows", flat);
  return c;
}

void Trainer::save_checkpoint(const std::string& path) const { to_checkpoint().save(path); }

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt, const TrainConfig* outputs) {
  // Everything is parsed into locals first; a bad checkpoint throws before a
  // Trainer exists.
  TrainConfig cfg = desk_preset();
  parse_config_text(ckpt.text("config"), cfg);
  cfg.resume_from.clear();
  if (outputs) {
    cfg.metrics_path = outputs->metrics_path;
    cfg.checkpoint_path = outputs->checkpoint_path;
    cfg.checkpoint_every = outputs->checkpoint_every;
    cfg.record_timing = outputs->record_timing;
    if (!outputs->corpus_path.empty()) cfg.corpus_path = outputs->corpus_path;
  }
  cfg.validate();

  auto scalar = [&](const std::string& name) {
    const auto v = ckpt.i64(name);
    if (v.size() != 1) throw FormatError("checkpoint record '" + name + "' must hold one value");
    return v[0];
  };
  auto scalar_f = [&](const std::string& name) {
    const auto v = ckpt.f64(name);
    if (v.size() != 1) throw FormatError("checkpoint record '" + name + "' must hold one value");
    return v[0];
  };
  const std::int64_t step = scalar("state.step");
  const std::int64_t status = scalar("state.status");
  if (step < 0 || step > cfg.total_steps) throw FormatError("checkpoint step out of range");
  if (status < 0 || status > static_cast<std::int64_t>(RunStatus::diverged)) {
    throw FormatError("checkpoint has an unknown run status");
  }

  TinyTransformer<float> model = TinyTransformer<float>::init(cfg.model, cfg.seed, initial_variant(cfg.sparsifier));
  model.for_each_parameter([&](const std::string& name, Matrix& p) {
    Matrix loaded = ckpt.matrix("model." + name);
    if (!loaded.same_shape(p)) throw FormatError("checkpoint tensor 'model." + name + "' has the wrong shape");
    p = std::move(loaded);
  });
  const auto scales = ckpt.f64("ffn.sparsifier_scale");
  if (scales.size() != model.layers.size()) throw FormatError("checkpoint sparsifier scales do not match layers");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (std::isfinite(scales[i])) {
      model.layers[i].ffn.sparsifier = SparsifierVariant::soft_activation_with_scale(scales[i]);
      if (cfg.sparsifier != SparsifierKind::soft_activation) {
        throw FormatError("checkpoint carries a calibrated scale for a non-calibrated sparsifier");
      }
    }
  }

  OptimizerState<float> optim = OptimizerState<float>::for_model(model, cfg.adam, cfg.refresh_every);
  const auto steps = ckpt.i64("optim.steps");
  if (steps.size() != optim.names.size()) throw FormatError("checkpoint optimizer state does not match model");
  for (std::size_t i = 0; i < optim.names.size(); ++i) {
    Matrix m = ckpt.matrix("optim." + optim.names[i] + ".m");
    Matrix v = ckpt.matrix("optim." + optim.names[i] + ".v");
    if (!m.same_shape(optim.moments[i].m) || !v.same_shape(optim.moments[i].v)) {
      throw FormatError("checkpoint moments for '" + optim.names[i] + "' have the wrong shape");
    }
    optim.moments[i] = {std::move(m), std::move(v), steps[i]};
  }
  optim.step = step;

  const auto flat = ckpt.f64("metrics.rows");
  if (flat.size() % kRowFields != 0) throw FormatError("checkpoint metrics rows are malformed");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < flat.size(); i += kRowFields) {
    rows.push_back({static_cast<std::int64_t>(flat[i]), flat[i + 1], flat[i + 2], flat[i + 3], flat[i + 4],
                    flat[i + 5], flat[i + 6]});
  }

  const std::int64_t calls = scalar("state.sparsifier_calls");
  const std::int64_t loss_count = scalar("state.loss_count");
  const double loss_sum = scalar_f("state.loss_sum");
  const double ms_sum = scalar_f("state.ms_sum");

  Trainer t(cfg, Corpus::from_file(cfg.corpus_path, cfg.eval_fraction));
  t.model_ = std::move(model);
  t.optim_ = std::move(optim);
  t.step_ = step;
  t.status_ = static_cast<RunStatus>(status);
  t.rows_ = std::move(rows);
  t.sparsifier_calls_ = calls;
  t.loss_count_ = loss_count;
  t.loss_sum_ = loss_sum;
  t.ms_sum_ = ms_sum;
  return t;
}

TrainResult run_training(const TrainConfig& cfg) { return Trainer::from_config(cfg).run(); }

}  // namespace elas
