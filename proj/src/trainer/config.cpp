#include "elas/trainer/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef ELAS_DEFAULT_CORPUS
#define ELAS_DEFAULT_CORPUS "data/corpus.txt"
#endif

namespace elas {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" +
                    std::string(value) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (warmup_steps < 0 || warmup_steps > total_steps) fail("warmup_steps must lie in [0, total_steps]");
  if (refresh_every < 0) fail("refresh_every must be non-negative");
  if (batch_size == 0) fail("batch_size must be positive");
  if (eval_interval <= 0) fail("eval_interval must be positive");
  if (eval_batches == 0) fail("eval_batches must be positive");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) fail("eval_fraction must lie in (0, 1)");
  if (!(schedule.base_lr >= 0.0) || !(schedule.min_lr >= 0.0)) fail("learning rates must be non-negative");
  if (!(schedule.warmup_fraction >= 0.0 && schedule.warmup_fraction <= 1.0))
    fail("lr_warmup_fraction must lie in [0, 1]");
  if (sparse_training && model.d_ff % 4 != 0) fail("d_ff must be a multiple of 4 for 2:4 sparsity");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
}

TrainConfig desk_preset() {
  TrainConfig cfg;
  cfg.model = ModelDims{256, 64, 256, 4, 2, 64, 16, 16};
  cfg.total_steps = 2000;
  cfg.warmup_steps = 200;
  cfg.refresh_every = 500;
  cfg.batch_size = 8;
  cfg.schedule = LrSchedule{3e-3, 3e-4, 0.1};
  cfg.corpus_path = ELAS_DEFAULT_CORPUS;
  return cfg;
}

void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  auto size = [&] { return parse_int<std::size_t>(key, value); };
  auto i64 = [&] { return parse_int<std::int64_t>(key, value); };
  auto real = [&] { return parse_double(key, value); };

  if (key == "vocab") cfg.model.vocab = size();
  else if (key == "d_model") cfg.model.d_model = size();
  else if (key == "d_ff") cfg.model.d_ff = size();
  else if (key == "heads") cfg.model.heads = size();
  else if (key == "layers") cfg.model.layers = size();
  else if (key == "seq_len") cfg.model.seq_len = size();
  else if (key == "r_attn") cfg.model.r_attn = size();
  else if (key == "r_mlp") cfg.model.r_mlp = size();
  else if (key == "rank") cfg.model.r_attn = cfg.model.r_mlp = size();
  else if (key == "warmup_steps") cfg.warmup_steps = i64();
  else if (key == "total_steps") cfg.total_steps = i64();
  else if (key == "refresh_every") cfg.refresh_every = i64();
  else if (key == "batch_size") cfg.batch_size = size();
  else if (key == "lr") cfg.schedule.base_lr = real();
  else if (key == "min_lr") cfg.schedule.min_lr = real();
  else if (key == "lr_warmup_fraction") cfg.schedule.warmup_fraction = real();
  else if (key == "beta1") cfg.adam.beta1 = real();
  else if (key == "beta2") cfg.adam.beta2 = real();
  else if (key == "eps") cfg.adam.eps = real();
  else if (key == "weight_decay") cfg.adam.weight_decay = real();
  else if (key == "grad_clip") cfg.grad_clip = real();
  else if (key == "sparse_training") cfg.sparse_training = parse_bool(key, value);
  else if (key == "sparsifier") cfg.sparsifier = parse_sparsifier_kind(value);
  else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "corpus") cfg.corpus_path = std::string(value);
  else if (key == "metrics") cfg.metrics_path = std::string(value);
  else if (key == "checkpoint") cfg.checkpoint_path = std::string(value);
  else if (key == "resume_from") cfg.resume_from = std::string(value);
  else if (key == "eval_interval") cfg.eval_interval = i64();
  else if (key == "eval_batches") cfg.eval_batches = size();
  else if (key == "eval_fraction") cfg.eval_fraction = real();
  else if (key == "checkpoint_every") cfg.checkpoint_every = i64();
  else if (key == "record_timing") cfg.record_timing = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::pair<std::string, std::string> split_setting(std::string_view setting) {
  const auto eq = setting.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(setting) + "'");
  }
  return {std::string(trim(setting.substr(0, eq))), std::string(trim(setting.substr(eq + 1)))};
}

std::vector<std::string> parse_config_text(std::string_view text, TrainConfig& cfg) {
  std::vector<std::string> keys;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      auto [key, value] = split_setting(line);
      apply_setting(cfg, key, value);
      keys.push_back(std::move(key));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return keys;
}

std::string to_config_text(const TrainConfig& c) {
  std::ostringstream out;
  out << "vocab = " << c.model.vocab << "\n"
      << "d_model = " << c.model.d_model << "\n"
      << "d_ff = " << c.model.d_ff << "\n"
      << "heads = " << c.model.heads << "\n"
      << "layers = " << c.model.layers << "\n"
      << "seq_len = " << c.model.seq_len << "\n"
      << "r_attn = " << c.model.r_attn << "\n"
      << "r_mlp = " << c.model.r_mlp << "\n"
      << "warmup_steps = " << c.warmup_steps << "\n"
      << "total_steps = " << c.total_steps << "\n"
      << "refresh_every = " << c.refresh_every << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "lr = " << format_double(c.schedule.base_lr) << "\n"
      << "min_lr = " << format_double(c.schedule.min_lr) << "\n"
      << "lr_warmup_fraction = " << format_double(c.schedule.warmup_fraction) << "\n"
      << "beta1 = " << format_double(c.adam.beta1) << "\n"
      << "beta2 = " << format_double(c.adam.beta2) << "\n"
      << "eps = " << format_double(c.adam.eps) << "\n"
      << "weight_decay = " << format_double(c.adam.weight_decay) << "\n"
      << "grad_clip = " << format_double(c.grad_clip) << "\n"
      << "sparse_training = " << (c.sparse_training ? "true" : "false") << "\n"
      << "sparsifier = " << to_string(c.sparsifier) << "\n"
      << "seed = " << c.seed << "\n"
      << "corpus = " << c.corpus_path << "\n"
      << "metrics = " << c.metrics_path << "\n"
      << "checkpoint = " << c.checkpoint_path << "\n"
      << "resume_from = " << c.resume_from << "\n"
      << "eval_interval = " << c.eval_interval << "\n"
      << "eval_batches = " << c.eval_batches << "\n"
      << "eval_fraction = " << format_double(c.eval_fraction) << "\n"
      << "checkpoint_every = " << c.checkpoint_every << "\n"
      << "record_timing = " << (c.record_timing ? "true" : "false") << "\n";
  return out.str();
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                        const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  bool seed_set = false;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    const auto keys = parse_config_text(text.str(), cfg);
    seed_set = std::find(keys.begin(), keys.end(), "seed") != keys.end();
  }
  for (const auto& o : overrides) {
    auto [key, value] = split_setting(o);
    apply_setting(cfg, key, value);
    seed_set = seed_set || key == "seed";
  }
  if (!seed_set) {
    if (const char* env = std::getenv("ELAS_SEED"); env && *env) {
      apply_setting(cfg, "seed", env);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace elas
