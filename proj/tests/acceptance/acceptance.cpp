// Acceptance suite. Each criterion prints exactly one line:
//   criterion N: PASS|FAIL  <name>  <measured values>
// and the process exits non-zero if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "elas/costmodel/costmodel.hpp"
#include "elas/model/ffn.hpp"
#include "elas/model/transformer.hpp"
#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"
#include "elas/optim/optimizer.hpp"
#include "elas/sparsity24/packed24.hpp"
#include "elas/sparsity24/sparsify.hpp"
#include "elas/trainer/ablation.hpp"
#include "elas/trainer/trainer.hpp"

using namespace elas;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "elas_acceptance";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TrainConfig desk() {
  TrainConfig c = desk_preset();
  c.corpus_path = std::string(ELAS_TEST_DATA_DIR) + "/corpus.txt";
  return c;
}

// --- 1: pattern and oracle suite ---------------------------------------------

Matrix random_case(std::mt19937_64& rng, std::size_t kind) {
  const std::size_t rows = 1 + rng() % 64;
  const std::size_t cols = 4 * (1 + rng() % 64);
  Matrix z(rows, cols);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  std::cauchy_distribution<float> cauchy(0.0f, 1.0f);
  for (auto& v : z.values()) {
    switch (kind) {
      case 0: v = normal(rng); break;
      case 1: v = uniform(rng); break;
      case 2: v = 0.0f; break;
      case 3: v = static_cast<float>(static_cast<int>(rng() % 5) - 2); break;  // many ties
      case 4: v = std::max(0.0f, normal(rng)), v *= v; break;                 // ReLU²-like
      case 5: v = cauchy(rng); break;
      default: v = 0.75f; break;                                             // all tied
    }
  }
  return z;
}

Outcome criterion_pattern() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  constexpr std::size_t kCases = 1400;
  std::size_t failures = 0, checked = 0;
  std::string first_failure;
  for (std::size_t i = 0; i < kCases; ++i) {
    const Matrix z = random_case(rng, i % 7);
    std::vector<std::string> why;
    const Mask24 mask = mask_top2(z);
    if (mask.keep != oracle::brute_force_keep(z)) why.push_back("keep-set");

    const Matrix naive = sparsify_naive(z);
    for (std::size_t k = 0; k < z.size(); ++k)
      if (naive.data()[k] != (mask.keep[k] ? z.data()[k] : 0.0f)) {
        why.push_back("naive values");
        break;
      }

    const auto cal = calibrate_soft_scale(z);
    const Matrix soft_w = sparsify(z, SparsifierVariant::soft_weights());
    const Matrix soft_a = sparsify(z, SparsifierVariant::soft_activation_with_scale(cal.scale));
    const char* names[] = {"naive", "soft_weights", "soft_activation"};
    int v = 0;
    for (const Matrix* out : {&naive, &soft_w, &soft_a}) {
      if (!oracle::satisfies_pattern(*out)) why.push_back(std::string(names[v]) + " pattern");
      // Soft variants never keep anything outside the naive support.
      for (std::size_t k = 0; k < z.size(); ++k)
        if (!mask.keep[k] && out->data()[k] != 0.0f) {
          why.push_back(std::string(names[v]) + " support");
          break;
        }
      ++v;
    }
    if (!why.empty() && first_failure.empty())
      first_failure = fmt(", first failure: case %zu (kind %zu) %s", i, i % 7, why.front().c_str());
    failures += !why.empty();
    ++checked;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 10.0,
          fmt("%zu matrices x 3 variants, %zu failures, %.2f s (limit 10 s)%s", checked, failures, secs,
              first_failure.c_str())};
}

// --- 2: activation-memory table ----------------------------------------------

Outcome criterion_memory_table() {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> batches{1, 2, 4, 8, 16, 32, 64, 128};
  const double dense_ref[] = {1.42, 2.84, 5.68, 11.36, 22.71, 45.43, 90.85, 181.71};
  const double sparse_ref[] = {0.80, 1.59, 3.18, 6.36, 12.72, 25.44, 50.88, 101.76};
  const auto& p = cost::find_preset("1B");
  double worst = 0.0;
  bool exact_ratio = true;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto m = cost::ffn_activation_memory(p, batches[i], 2048);
    worst = std::max({worst, std::abs(m.dense_gb - dense_ref[i]) / dense_ref[i],
                      std::abs(m.sparse_gb - sparse_ref[i]) / sparse_ref[i]});
    exact_ratio = exact_ratio && m.sparse_gb / m.dense_gb == 9.0 / 16.0 &&
                  cost::ffn_activation_bytes(p, batches[i], 2048, true) ==
                      cost::ffn_activation_bytes(p, batches[i], 2048, false) * 9.0 / 16.0;
  }
  const double secs = seconds_since(t0);
  return {worst <= 0.015 && exact_ratio && secs < 1.0,
          fmt("16 cells, worst rel err %.4f (limit 0.015), ratio exactly 9/16: %s, %.3f s", worst,
              exact_ratio ? "yes" : "no", secs)};
}

// --- 3: gradients ------------------------------------------------------------

double probe(const MatrixD& y, const MatrixD& w) { return inner(y, w); }

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::map<std::string, double> err;

  {
    auto layer = LowRankLinear<double>::xavier(24, 32, 4, 1);
    MatrixD x = normal_matrix<double>(8, 32, 1.0, 2);
    const MatrixD w = normal_matrix<double>(8, 24, 1.0, 3);
    const auto g = lr_backward(layer, x, w);
    auto f = [&] { return probe(lr_forward(layer, x), w); };
    err["lowrank"] = std::max({oracle::grad_rel_error(g.A, oracle::numeric_gradient(layer.A, f)),
                               oracle::grad_rel_error(g.B, oracle::numeric_gradient(layer.B, f)),
                               oracle::grad_rel_error(g.x, oracle::numeric_gradient(x, f))});
  }
  {
    MatrixD z = normal_matrix<double>(8, 16, 1.0, 4);
    const MatrixD w = normal_matrix<double>(8, 16, 1.0, 5);
    auto f = [&] { return probe(relu2_forward(z), w); };
    err["relu2"] = oracle::grad_rel_error(relu2_backward(z, w), oracle::numeric_gradient(z, f));
  }
  {
    auto ffn = SparseFfn<double>::xavier(16, 64, 4, 6);
    MatrixD x = normal_matrix<double>(8, 16, 1.0, 7);
    const MatrixD w = normal_matrix<double>(8, 16, 1.0, 8);
    const auto g = ffn_backward(ffn, ffn_forward(ffn, x, false).saved, w);
    auto f = [&] { return probe(ffn_forward(ffn, x, false).y, w); };
    err["ffn"] = std::max({oracle::grad_rel_error(g.up_A, oracle::numeric_gradient(ffn.up.A, f)),
                           oracle::grad_rel_error(g.up_B, oracle::numeric_gradient(ffn.up.B, f)),
                           oracle::grad_rel_error(g.down_A, oracle::numeric_gradient(ffn.down.A, f)),
                           oracle::grad_rel_error(g.down_B, oracle::numeric_gradient(ffn.down.B, f)),
                           oracle::grad_rel_error(g.x, oracle::numeric_gradient(x, f))});
  }
  {
    const ModelDims d{32, 16, 64, 2, 2, 8, 4, 4};
    auto model = TinyTransformer<double>::init(d, 9);
    TokenBatch batch{2, 8, {}, {}};
    std::mt19937_64 rng(10);
    for (std::size_t i = 0; i < batch.tokens(); ++i) {
      batch.inputs.push_back(static_cast<std::int32_t>(rng() % d.vocab));
      batch.targets.push_back(static_cast<std::int32_t>(rng() % d.vocab));
    }
    auto grads = model_backward(model, model_forward(model, batch, false).saved);
    std::map<std::string, MatrixD*> g;
    grads.for_each_parameter([&](const std::string& n, MatrixD& m) { g[n] = &m; });
    auto f = [&] { return model_forward(model, batch, false, false).loss; };
    double worst = 0.0;
    model.for_each_parameter([&](const std::string& n, MatrixD& p) {
      worst = std::max(worst, oracle::grad_rel_error(*g[n], oracle::numeric_gradient(p, f)));
    });
    err["transformer"] = worst;
  }

  bool ste = true;
  for (const auto& v : {SparsifierVariant::naive(), SparsifierVariant::soft_weights(),
                        SparsifierVariant::soft_activation_with_scale(1.3)}) {
    const auto ffn = SparseFfn<float>::xavier(16, 64, 4, 11, v);
    const Matrix x = normal_matrix<float>(8, 16, 1.0, 12);
    const auto g = ffn_backward(ffn, ffn_forward(ffn, x, true).saved, normal_matrix<float>(8, 16, 1.0, 13));
    ste = ste && g.activation == g.activation_sparse;
  }

  double worst = 0.0;
  for (const auto& [k, e] : err) worst = std::max(worst, e);
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && ste && secs < 60.0,
          fmt("rel err lowrank %.1e relu2 %.1e ffn %.1e transformer %.1e (limit 1e-3), STE exact: %s, %.1f s",
              err["lowrank"], err["relu2"], err["ffn"], err["transformer"], ste ? "yes" : "no", secs)};
}

// --- 4: refresh invariance ---------------------------------------------------

Outcome criterion_refresh() {
  std::mt19937_64 rng(4);
  double worst_first = 0.0, worst_second = 0.0;
  bool moments_zeroed = true, all_refreshed = true;
  for (int i = 0; i < 100; ++i) {
    const std::size_t d_out = 8 + rng() % 89, d_in = 8 + rng() % 89;
    const std::size_t rank = 1 + rng() % (std::min(d_out, d_in) / 2);
    auto layer = LowRankLinear<float>::xavier(d_out, d_in, rank, rng());
    const float c = std::exp(std::uniform_real_distribution<float>(-2.3f, 2.3f)(rng));
    for (auto& v : layer.A.values()) v *= c;
    for (auto& v : layer.B.values()) v /= c;

    OptimizerState<float> state;
    state.names = {"l.A", "l.B"};
    for (const Matrix* p : {&layer.A, &layer.B}) {
      state.moments.push_back({normal_matrix<float>(p->rows(), p->cols(), 1.0, rng()),
                               uniform_matrix<float>(p->rows(), p->cols(), 0.0, 1.0, rng()), 17});
    }
    const MatrixD before = layer.product().cast<double>();
    const auto first = step_exact_refresh(state, "l", layer);
    const MatrixD mid = layer.product().cast<double>();
    const auto second = step_exact_refresh(state, "l", layer);
    const MatrixD after = layer.product().cast<double>();

    worst_first = std::max(worst_first, relative_error(mid, before));
    worst_second = std::max(worst_second, relative_error(after, mid));
    all_refreshed = all_refreshed && first.refreshed && second.refreshed;
    for (const auto& m : state.moments)
      moments_zeroed = moments_zeroed && m.steps == 0 && frobenius_norm(m.m) == 0.0 && frobenius_norm(m.v) == 0.0;
  }
  return {worst_first < 1e-5 && worst_second < 1e-6 && moments_zeroed && all_refreshed,
          fmt("100 layers, first refresh %.1e (limit 1e-5), second %.1e (limit 1e-6), moments zeroed: %s",
              worst_first, worst_second, moments_zeroed ? "yes" : "no")};
}

// --- 5: spmm and packing -----------------------------------------------------

Outcome criterion_spmm() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  bool exact = true;
  std::size_t n_cases = 0;
  auto check = [&](std::size_t m, std::size_t k, std::size_t n) {
    const Matrix sparse = sparsify_naive(normal_matrix<float>(m, k, 1.0, rng()));
    const Matrix w = normal_matrix<float>(k, n, 1.0, rng());
    const Matrix g = normal_matrix<float>(m, n, 1.0, rng());
    const Packed24<float> p = pack(sparse);
    const MatrixD ref = oracle::naive_matmul(sparse.cast<double>(), w.cast<double>());
    const MatrixD ref_tn = oracle::naive_matmul(transpose(sparse).cast<double>(), g.cast<double>());
    worst = std::max({worst, relative_error(spmm(p, w).cast<double>(), ref),
                      relative_error(spmm_tn(p, g).cast<double>(), ref_tn)});
    exact = exact && unpack(p) == sparse && deserialize_packed(serialize_packed(p)) == p &&
            pack_with_mask(sparse, mask_of(p)) == p;
    ++n_cases;
  };
  check(256, 256, 256);
  for (int i = 0; i < 60; ++i) check(1 + rng() % 256, 4 * (1 + rng() % 64), 1 + rng() % 256);
  return {worst < 1e-5 && exact,
          fmt("%zu instances up to 256x256, worst rel err %.1e (limit 1e-5), round trips exact: %s", n_cases,
              worst, exact ? "yes" : "no")};
}

// --- 6: desk-scale parity ----------------------------------------------------

Outcome criterion_parity() {
  const auto t0 = Clock::now();
  TrainConfig sparse = desk();
  TrainConfig dense = desk();
  dense.sparse_training = false;
  const auto a = run_training(sparse);
  const auto b = run_training(dense);
  if (a.status != RunStatus::completed || b.status != RunStatus::completed) {
    return {false, fmt("runs did not complete (sparse %s, dense %s)", to_string(a.status), to_string(b.status))};
  }
  const double ea = a.rows.back().eval_loss, eb = b.rows.back().eval_loss;
  const double gap = std::abs(ea - eb) / eb;
  const double red_a = 1.0 - ea / a.rows.front().eval_loss;
  const double red_b = 1.0 - eb / b.rows.front().eval_loss;
  return {gap <= 0.05 && red_a >= 0.20 && red_b >= 0.20,
          fmt("final eval loss sparse %.4f dense %.4f, gap %.2f%% (limit 5%%), reduction %.1f%% / %.1f%% "
              "(min 20%%), %.0f s",
              ea, eb, 100 * gap, 100 * red_a, 100 * red_b, seconds_since(t0))};
}

// --- 7: warmup sweep ---------------------------------------------------------

Outcome criterion_warmup_sweep() {
  const auto t0 = Clock::now();
  const std::vector<std::int64_t> warmups{0, 100, 200, 400};
  const auto first = run_warmup_ablation(desk(), warmups);
  const auto again = run_warmup_ablation(desk(), warmups);
  const bool deterministic = ablation_csv(first) == ablation_csv(again);
  bool complete = first.size() == warmups.size();
  std::string losses;
  for (const auto& r : first) {
    complete = complete && (r.status == RunStatus::completed || r.status == RunStatus::diverged);
    losses += fmt(" w%lld=%.4f", static_cast<long long>(r.warmup_steps), r.final_eval_loss);
  }

  // Divergence handling: a sweep whose middle point is forced to blow up
  // must still finish, with that point recorded as NaN.
  TrainConfig tiny = desk();
  tiny.model = ModelDims{256, 16, 32, 2, 1, 16, 4, 4};
  tiny.total_steps = 12;
  tiny.warmup_steps = 0;
  tiny.eval_interval = 4;
  tiny.eval_batches = 1;
  std::vector<AblationRow> forced;
  for (double lr : {3e-3, 1e30, 3e-3}) {
    TrainConfig c = tiny;
    c.schedule.base_lr = c.schedule.min_lr = lr;
    c.grad_clip = 0.0;
    forced.push_back(run_ablation_point(c, fmt("lr%g", lr)));
  }
  const bool nan_row = forced[1].status == RunStatus::diverged && std::isnan(forced[1].final_eval_loss) &&
                       ablation_csv(forced).find("NaN") != std::string::npos &&
                       forced[2].status == RunStatus::completed;

  return {complete && deterministic && nan_row,
          fmt("4 warmups completed:%s, rerun identical: %s, forced divergence recorded as NaN: %s, %.0f s",
              losses.c_str(), deterministic ? "yes" : "no", nan_row ? "yes" : "no", seconds_since(t0))};
}

// --- 8: determinism and resume -----------------------------------------------

Outcome criterion_resume() {
  const auto t0 = Clock::now();
  const fs::path dir = scratch_dir();
  TrainConfig c = desk();
  c.metrics_path = (dir / "run_a.csv").string();
  run_training(c);
  c.metrics_path = (dir / "run_b.csv").string();
  run_training(c);
  const std::string a = slurp(dir / "run_a.csv");
  const bool identical = !a.empty() && a == slurp(dir / "run_b.csv");

  const std::int64_t mid = c.total_steps / 2;
  TrainConfig half = desk();
  half.checkpoint_path = (dir / "mid.ckpt").string();
  {
    Trainer t = Trainer::from_config(half);
    t.run(mid);
  }
  TrainConfig resumed = desk();
  resumed.resume_from = (dir / "mid.ckpt").string();
  resumed.metrics_path = (dir / "resumed.csv").string();
  const auto r = run_training(resumed);
  const std::string b = slurp(dir / "resumed.csv");
  const auto full_rows = parse_metrics_csv(a);
  std::size_t after_mid = 0;
  for (const auto& row : full_rows) after_mid += row.step > mid;
  const bool reproduced = r.status == RunStatus::completed && b == a;
  return {identical && reproduced,
          fmt("reruns byte-identical: %s, resume at step %lld reproduces the %zu later rows exactly: %s, %.0f s",
              identical ? "yes" : "no", static_cast<long long>(mid), after_mid, reproduced ? "yes" : "no",
              seconds_since(t0))};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"2:4 pattern and oracle suite", criterion_pattern},
      {"activation-memory table", criterion_memory_table},
      {"gradient correctness", criterion_gradients},
      {"refresh invariance", criterion_refresh},
      {"spmm oracle equivalence", criterion_spmm},
      {"desk-scale training parity", criterion_parity},
      {"warmup ablation sweep", criterion_warmup_sweep},
      {"determinism and resume", criterion_resume},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elas acceptance suite"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "criterion number(s) to run; default all")
      ->check(CLI::Range(1, static_cast<int>(criteria().size())));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria().size()); ++i) selected.push_back(i);

  bool ok = true;
  for (int n : selected) {
    const auto& [name, fn] = criteria()[n - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s  %s\n", n, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
