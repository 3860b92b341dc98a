#include "elas/bench/bench.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>
#include <utility>

#include "elas/numerics/init.hpp"
#include "elas/numerics/linalg.hpp"
#include "elas/sparsity24/packed24.hpp"
#include "elas/trainer/trainer.hpp"

namespace elas::bench {

namespace {

constexpr double kBenchSoftScale = 1.5;

SparsifierVariant variant_by_name(const std::string& name) {
  switch (parse_sparsifier_kind(name)) {
    case SparsifierKind::naive: return SparsifierVariant::naive();
    case SparsifierKind::soft_weights: return SparsifierVariant::soft_weights();
    case SparsifierKind::soft_activation: return SparsifierVariant::soft_activation_with_scale(kBenchSoftScale);
  }
  throw ConfigError("unknown sparsifier '" + name + "'");
}

template <typename F>
double median_ns(std::size_t reps, F&& body) {
  std::vector<double> ns;
  ns.reserve(reps);
  body();  // warm cache
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  const std::size_t n = ns.size();
  return n % 2 ? ns[n / 2] : 0.5 * (ns[n / 2 - 1] + ns[n / 2]);
}

// Library and oracle agree on the soft threshold: shrink by the third-largest
// magnitude, in the element type.
float soft_shrink(float x, float theta) {
  const float s = std::abs(x) - theta;
  return s > 0.0f ? std::copysign(s, x) : 0.0f;
}

}  // namespace

Shape parse_shape(std::string_view text) {
  const auto x = text.find('x');
  Shape s;
  auto parse = [&](std::string_view part, std::size_t& out) {
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc{} && p == part.data() + part.size() && out > 0;
  };
  if (x == std::string_view::npos || !parse(text.substr(0, x), s.rows) || !parse(text.substr(x + 1), s.cols)) {
    throw ConfigError("expected a shape like 4096x4096, got '" + std::string(text) + "'");
  }
  return s;
}

std::string to_string(const Shape& s) { return std::to_string(s.rows) + "x" + std::to_string(s.cols); }

std::uint64_t checksum(std::span<const float> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : values) {
    std::uint32_t bits = v == 0.0f ? 0u : std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Matrix oracle_sparsify(const Matrix& z, const SparsifierVariant& variant) {
  require_group_aligned(z.cols(), "oracle_sparsify");
  Matrix out(z.rows(), z.cols());
  const std::size_t groups = z.size() / 4;
  if (variant.kind == SparsifierKind::naive) {
    static constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (std::size_t g = 0; g < groups; ++g) {
      const float* in = z.data() + 4 * g;
      int best = 0;
      // Float squares are exact in long double; keeping the sum as an exact
      // (sum, error) pair stops tiny entries from rounding into false ties.
      std::pair<long double, long double> best_energy{-1.0L, 0.0L};
      for (int p = 0; p < 6; ++p) {
        const long double a2 = static_cast<long double>(in[kPairs[p][0]]) * in[kPairs[p][0]];
        const long double b2 = static_cast<long double>(in[kPairs[p][1]]) * in[kPairs[p][1]];
        const long double s = a2 + b2, bb = s - a2;
        const std::pair<long double, long double> e{s, (a2 - (s - bb)) + (b2 - bb)};
        if (e > best_energy) {
          best_energy = e;
          best = p;
        }
      }
      for (int k : kPairs[best]) out.data()[4 * g + k] = in[k];
    }
    return out;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const float* in = z.data() + 4 * g;
    float mags[4] = {std::abs(in[0]), std::abs(in[1]), std::abs(in[2]), std::abs(in[3])};
    std::sort(mags, mags + 4, [](float a, float b) { return a > b; });
    for (int i = 0; i < 4; ++i) {
      const float v = soft_shrink(in[i], mags[2]);
      out.data()[4 * g + i] = v;
      num += static_cast<double>(v) * static_cast<double>(in[i]);
      den += static_cast<double>(v) * static_cast<double>(v);
    }
  }
  double beta = 1.0;
  if (variant.kind == SparsifierKind::soft_weights) beta = den > 0.0 ? num / den : 1.0;
  else if (variant.scale) beta = *variant.scale;
  if (beta != 1.0)
    for (float& v : out.values()) v = static_cast<float>(beta * static_cast<double>(v));
  return out;
}

Matrix sparsify_parallel(const Matrix& z, const SparsifierVariant& variant, std::size_t threads) {
  if (threads <= 1 || variant.kind == SparsifierKind::soft_weights || z.rows() < 2) return sparsify(z, variant);
  threads = std::min(threads, z.rows());
  Matrix out(z.rows(), z.cols());
  std::vector<std::thread> pool;
  const std::size_t chunk = (z.rows() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t r0 = t * chunk, r1 = std::min(z.rows(), r0 + chunk);
    if (r0 >= r1) break;
    pool.emplace_back([&, r0, r1] {
      Matrix part(r1 - r0, z.cols(),
                  std::vector<float>(z.data() + r0 * z.cols(), z.data() + r1 * z.cols()));
      const Matrix done = sparsify(part, variant);
      std::copy(done.data(), done.data() + done.size(), out.data() + r0 * z.cols());
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

std::vector<BenchReport> bench_sparsify(const std::vector<Shape>& shapes, const std::vector<std::string>& variants,
                                        const BenchOptions& options) {
  std::vector<BenchReport> reports;
  for (const auto& shape : shapes) {
    require_group_aligned(shape.cols, "bench_sparsify");
    const Matrix z = normal_matrix<float>(shape.rows, shape.cols, 1.0, mix_seed(options.seed, shape.rows * 31 + shape.cols));
    for (const auto& name : variants) {
      const SparsifierVariant variant = variant_by_name(name);
      BenchReport r;
      r.op = "sparsify";
      r.variant = name + (options.threads > 1 ? "@" + std::to_string(options.threads) + "t" : "");
      r.shape = shape;
      r.repetitions = options.repetitions;
      Matrix out;
      r.checksum = checksum(sparsify_parallel(z, variant, options.threads).values());
      r.median_ns = median_ns(options.repetitions, [&] {
        out = sparsify_parallel(z, variant, options.threads);
        r.stable = r.stable && checksum(out.values()) == r.checksum;
      });
      r.throughput = static_cast<double>(z.size()) / (r.median_ns * 1e-9);
      r.oracle_checksum = checksum(oracle_sparsify(z, variant).values());
      reports.push_back(r);
    }
  }
  return reports;
}

std::vector<BenchReport> bench_spmm(const std::vector<Shape>& shapes, const BenchOptions& options) {
  std::vector<BenchReport> reports;
  for (const auto& shape : shapes) {
    require_group_aligned(shape.cols, "bench_spmm");
    const std::uint64_t s = mix_seed(options.seed, shape.rows * 131 + shape.cols);
    const Matrix a = sparsify_naive(normal_matrix<float>(shape.rows, shape.cols, 1.0, mix_seed(s, 0)));
    const Matrix w = normal_matrix<float>(shape.cols, shape.cols, 1.0, mix_seed(s, 1));
    const Packed24Tensor packed = pack(a);
    const std::uint64_t oracle = checksum(matmul(a, w).values());
    for (const bool sparse : {true, false}) {
      BenchReport r;
      r.op = "spmm";
      r.variant = sparse ? "packed24" : "dense";
      r.shape = shape;
      r.repetitions = options.repetitions;
      auto run = [&] { return sparse ? spmm(packed, w) : matmul(a, w); };
      r.checksum = checksum(run().values());
      r.median_ns = median_ns(options.repetitions, [&] { r.stable = r.stable && checksum(run().values()) == r.checksum; });
      r.throughput = static_cast<double>(a.size()) / (r.median_ns * 1e-9);
      r.oracle_checksum = oracle;
      reports.push_back(r);
    }
  }
  return reports;
}

std::vector<BenchReport> bench_pack(const std::vector<Shape>& shapes, const BenchOptions& options) {
  std::vector<BenchReport> reports;
  for (const auto& shape : shapes) {
    require_group_aligned(shape.cols, "bench_pack");
    const Matrix a = sparsify_naive(
        normal_matrix<float>(shape.rows, shape.cols, 1.0, mix_seed(options.seed, shape.rows * 17 + shape.cols)));
    BenchReport r;
    r.op = "pack";
    r.variant = "pack+unpack";
    r.shape = shape;
    r.repetitions = options.repetitions;
    auto run = [&] { return unpack(pack(a)); };
    r.checksum = checksum(run().values());
    r.median_ns = median_ns(options.repetitions, [&] { r.stable = r.stable && checksum(run().values()) == r.checksum; });
    r.throughput = static_cast<double>(a.size()) / (r.median_ns * 1e-9);
    r.oracle_checksum = checksum(a.values());
    reports.push_back(r);
  }
  return reports;
}

std::string reports_csv(const std::vector<BenchReport>& reports) {
  std::string out = std::string(kReportHeader) + "\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%zu,%.0f,%.6e,%016llx,%016llx,%s,%s\n", r.op.c_str(), r.variant.c_str(),
                  to_string(r.shape).c_str(), r.repetitions, r.median_ns, r.throughput,
                  static_cast<unsigned long long>(r.checksum), static_cast<unsigned long long>(r.oracle_checksum),
                  r.matches_oracle() ? "true" : "false", r.stable ? "true" : "false");
    out += buf;
  }
  return out;
}

std::vector<SparsityPoint> probe_natural_sparsity(Trainer& trainer, std::int64_t steps) {
  std::vector<SparsityPoint> points;
  const TrainConfig& cfg = trainer.config();
  for (std::int64_t i = 0; i < steps && trainer.step() < cfg.total_steps; ++i) {
    const std::int64_t s = trainer.step();
    const TokenBatch batch = trainer.corpus().train_batch(cfg.seed, s, cfg.batch_size, cfg.model.seq_len);
    const auto fwd = model_forward(trainer.model(), batch, /*sparsity_on=*/false, /*keep_activations=*/false);
    for (std::size_t l = 0; l < fwd.saved.layers.size(); ++l) {
      points.push_back({s, "layers." + std::to_string(l) + ".ffn", fwd.saved.layers[l].ffn.natural_sparsity});
    }
    points.push_back({s, "all", fwd.saved.natural_sparsity()});
    if (!trainer.advance()) break;
  }
  return points;
}

std::string probe_csv(const std::vector<SparsityPoint>& points) {
  std::string out = std::string(kProbeHeader) + "\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%.6f\n", static_cast<long long>(p.step), p.layer.c_str(), p.fraction);
    out += buf;
  }
  return out;
}

}  // namespace elas::bench
