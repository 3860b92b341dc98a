// Command-line front end: training, evaluation, ablation sweeps, the memory
// cost model and microbenchmarks.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "elas/bench/bench.hpp"
#include "elas/costmodel/costmodel.hpp"
#include "elas/trainer/ablation.hpp"
#include "elas/trainer/trainer.hpp"

namespace {

// 0 ok, 1 runtime failure, 2 bad usage or config, 3 training diverged.
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

template <typename T, typename F>
std::vector<T> parse_list(const std::string& text, F&& parse_one) {
  std::vector<T> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_one(item));
  }
  if (out.empty()) throw elas::ConfigError("empty list '" + text + "'");
  return out;
}

std::int64_t parse_i64(const std::string& s) {
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw elas::ConfigError("expected an integer, got '" + s + "'");
  return v;
}

void write_output(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw elas::IoError("cannot write '" + path + "'");
  out << body;
  if (!out) throw elas::IoError("failed writing '" + path + "'");
  std::cerr << "wrote " << path << "\n";
}

void print_row(const elas::MetricsRow& r) {
  std::printf("step %lld  eval_loss %.6f  eval_ppl %.4f  ffn_sparsity %.4f\n", static_cast<long long>(r.step),
              r.eval_loss, r.eval_ppl, r.ffn_sparsity);
}


}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank training with 2:4 activation sparsity"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--override", overrides, "key=value, applied after the config file")->take_all();
  };

  auto* train = app.add_subcommand("train", "train a model; exits 3 if training diverges");
  add_config_opts(train);
  std::int64_t stop_at = -1;
  train->add_option("--stop-at", stop_at, "stop after this many completed steps (checkpoint still written)")
      ->check(CLI::NonNegativeNumber);

  std::string checkpoint_path, eval_corpus;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its eval split");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--corpus", eval_corpus, "corpus file (default: the one it was trained on)");

  std::string warmup_list = "0,100,200,400", out_path;
  auto* ablate_warmup = app.add_subcommand("ablate-warmup", "one run per dense-warmup length");
  add_config_opts(ablate_warmup);
  ablate_warmup->add_option("--list", warmup_list, "comma-separated warmup step counts");
  ablate_warmup->add_option("--out", out_path, "csv output (default stdout)");

  std::string variant_list = "naive,soft_weights,soft_activation";
  auto* ablate_sparsifier = app.add_subcommand("ablate-sparsifier", "one run per 2:4 sparsifier");
  add_config_opts(ablate_sparsifier);
  ablate_sparsifier->add_option("--variants", variant_list, "comma-separated sparsifiers");
  ablate_sparsifier->add_option("--out", out_path, "csv output (default stdout)");

  std::string preset = "1b", batches = "1,2,4,8,16,32,64,128", format = "text", tables_dir;
  std::size_t seq = 2048;
  auto* costmodel = app.add_subcommand("costmodel", "FFN activation memory and FLOP model");
  costmodel->add_option("--preset", preset, "60m, 130m, 350m or 1b");
  costmodel->add_option("--seq", seq, "sequence length");
  costmodel->add_option("--batches", batches, "comma-separated batch sizes");
  costmodel->add_option("--out", out_path, "memory table path; .csv selects csv");
  costmodel->add_option("--format", format, "csv or text for stdout / --tables-dir")
      ->check(CLI::IsMember({"csv", "text"}));
  costmodel->add_option("--tables-dir", tables_dir, "write memory, ratio and flops tables here");

  std::string op = "sparsify";
  std::vector<std::string> shapes{"4096x4096"};
  std::string bench_variants = "naive,soft_weights,soft_activation";
  elas::bench::BenchOptions bench_opts;
  std::int64_t probe_steps = 200;
  auto* bench = app.add_subcommand("bench", "microbenchmarks and the natural-sparsity probe");
  bench->add_option("--op", op, "sparsify, spmm, pack or probe")
      ->check(CLI::IsMember({"sparsify", "spmm", "pack", "probe"}));
  bench->add_option("--shape", shapes, "MxN (repeatable)")->take_all();
  bench->add_option("--variants", bench_variants, "sparsifiers for --op sparsify");
  bench->add_option("--reps", bench_opts.repetitions, "timed repetitions (median reported)");
  bench->add_option("--threads", bench_opts.threads, "worker threads for --op sparsify");
  bench->add_option("--seed", bench_opts.seed, "input seed");
  bench->add_option("--steps", probe_steps, "training steps for --op probe");
  bench->add_option("--out", out_path, "csv output (default stdout)");
  add_config_opts(bench);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const elas::TrainConfig cfg = elas::load_config(config_path, overrides);
      elas::Trainer trainer = elas::Trainer::from_config(cfg);
      const elas::TrainResult r =
          stop_at >= 0 ? trainer.run(stop_at) : trainer.run();
      if (r.status == elas::RunStatus::diverged) {
        std::cerr << r.message << "\n";
        return kExitDiverged;
      }
      if (r.status == elas::RunStatus::running) {
        std::printf("stopped after step %lld of %lld\n", static_cast<long long>(r.steps_completed),
                    static_cast<long long>(cfg.total_steps));
        return 0;
      }
      print_row(r.final_row);
      return 0;
    }
    if (*eval) {
      const elas::Checkpoint ckpt = elas::Checkpoint::load(checkpoint_path);
      elas::TrainConfig outputs;
      outputs.corpus_path = eval_corpus;
      const elas::Trainer t = elas::Trainer::from_checkpoint(ckpt, &outputs);
      const elas::EvalResult e = t.evaluate_now();
      std::printf("step %lld  eval_loss %.6f  eval_ppl %.4f  ffn_sparsity %.4f\n",
                  static_cast<long long>(t.step()), e.loss, e.perplexity, e.ffn_sparsity);
      return 0;
    }
    if (*ablate_warmup) {
      const elas::TrainConfig cfg = elas::load_config(config_path, overrides);
      const auto rows = elas::run_warmup_ablation(cfg, parse_list<std::int64_t>(warmup_list, parse_i64));
      write_output(out_path, elas::ablation_csv(rows));
      return 0;  // a diverged run inside a sweep is a result, not a failure
    }
    if (*ablate_sparsifier) {
      const elas::TrainConfig cfg = elas::load_config(config_path, overrides);
      const auto kinds = parse_list<elas::SparsifierKind>(
          variant_list, [](const std::string& s) { return elas::parse_sparsifier_kind(s); });
      const auto rows = elas::run_sparsifier_ablation(cfg, kinds);
      write_output(out_path, elas::ablation_csv(rows));
      return 0;  // a diverged run inside a sweep is a result, not a failure
    }
    if (*costmodel) {
      namespace cost = elas::cost;
      const cost::ModelPreset& p = cost::find_preset(preset);
      const auto b = parse_list<std::size_t>(batches, [](const std::string& s) {
        const auto v = parse_i64(s);
        if (v <= 0) throw elas::ConfigError("batch sizes must be positive");
        return static_cast<std::size_t>(v);
      });
      if (seq == 0) throw elas::ConfigError("--seq must be positive");
      const auto fmt = format == "csv" ? cost::TableFormat::csv : cost::TableFormat::text;
      if (!out_path.empty()) {
        const bool csv = out_path.size() >= 4 && out_path.compare(out_path.size() - 4, 4, ".csv") == 0;
        write_output(out_path, cost::memory_table(p, seq, b, csv ? cost::TableFormat::csv : cost::TableFormat::text));
      }
      if (!tables_dir.empty()) {
        for (const auto& path : cost::emit_tables(tables_dir, p, seq, b, fmt)) std::cerr << "wrote " << path << "\n";
      }
      if (out_path.empty() && tables_dir.empty()) {
        std::cout << cost::memory_table(p, seq, b, fmt) << "\n"
                  << cost::ratio_table(p, seq, b, fmt) << "\n"
                  << cost::flop_table(p, seq, fmt);
      }
      return 0;
    }
    if (*bench) {
      namespace bench_ns = elas::bench;
      if (op == "probe") {
        elas::Trainer t = elas::Trainer::from_config(elas::load_config(config_path, overrides));
        write_output(out_path, bench_ns::probe_csv(bench_ns::probe_natural_sparsity(t, probe_steps)));
        return 0;
      }
      std::vector<bench_ns::Shape> parsed;
      for (const auto& s : shapes) parsed.push_back(bench_ns::parse_shape(s));
      std::vector<bench_ns::BenchReport> reports;
      if (op == "sparsify") {
        reports = bench_ns::bench_sparsify(
            parsed, parse_list<std::string>(bench_variants, [](const std::string& s) { return s; }), bench_opts);
      } else if (op == "spmm") {
        reports = bench_ns::bench_spmm(parsed, bench_opts);
      } else {
        reports = bench_ns::bench_pack(parsed, bench_opts);
      }
      write_output(out_path, bench_ns::reports_csv(reports));
      for (const auto& r : reports) {
        if (!r.matches_oracle()) {
          std::cerr << "error: " << r.op << "/" << r.variant << " output differs from its oracle\n";
          return kExitFailure;
        }
      }
      return 0;
    }
  } catch (const elas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
