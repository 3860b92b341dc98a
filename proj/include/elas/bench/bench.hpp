#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elas/numerics/matrix.hpp"
#include "elas/sparsity24/sparsify.hpp"

namespace elas {
class Trainer;
}

namespace elas::bench {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// "MxN" → {M, N}. Throws ConfigError.
Shape parse_shape(std::string_view text);
std::string to_string(const Shape& s);

struct BenchReport {
  std::string op;
  std::string variant;
  Shape shape;
  std::size_t repetitions = 0;
  double median_ns = 0.0;
  double throughput = 0.0;  // input elements per second
  std::uint64_t checksum = 0;
  std::uint64_t oracle_checksum = 0;
  /// Every repetition produced the same checksum.
  bool stable = true;

  bool matches_oracle() const noexcept { return checksum == oracle_checksum; }
};

struct BenchOptions {
  std::size_t repetitions = 30;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

/// FNV-1a over the bit patterns of `values`, with -0 folded into +0.
std::uint64_t checksum(std::span<const float> values);

/// Reference 2:4 sparsifiers written independently of the library kernels:
/// naive keeps the best of the six two-element subsets by energy (first in
/// lexicographic order on ties); the soft variants sort each group.
Matrix oracle_sparsify(const Matrix& z, const SparsifierVariant& variant);

/// Library sparsify over row chunks on `threads` workers. Output is
/// independent of the thread count. soft_weights fits one global scale and
/// runs on a single worker.
Matrix sparsify_parallel(const Matrix& z, const SparsifierVariant& variant, std::size_t threads);

/// Variants are given by name; soft_activation uses a fixed scale of 1.5.
std::vector<BenchReport> bench_sparsify(const std::vector<Shape>& shapes, const std::vector<std::string>& variants,
                                        const BenchOptions& options = {});

/// Packed M×K activation times a K×K weight, against masked dense matmul.
/// Reports "spmm" and "dense" rows per shape.
std::vector<BenchReport> bench_spmm(const std::vector<Shape>& shapes, const BenchOptions& options = {});

/// pack then unpack; the oracle is the masked input itself.
std::vector<BenchReport> bench_pack(const std::vector<Shape>& shapes, const BenchOptions& options = {});

inline constexpr const char* kReportHeader =
    "op,variant,shape,repetitions,median_ns,throughput_elems_per_s,checksum,oracle_checksum,matches_oracle,stable";
std::string reports_csv(const std::vector<BenchReport>& reports);

struct SparsityPoint {
  std::int64_t step = 0;
  std::string layer;  // "layers.<i>.ffn" or "all"
  double fraction = 0.0;
};

/// Trains `steps` more steps, recording before each update the exact-zero
/// fraction of every layer's ReLU² output on that step's batch.
std::vector<SparsityPoint> probe_natural_sparsity(Trainer& trainer, std::int64_t steps);

inline constexpr const char* kProbeHeader = "step,layer,zero_fraction";
std::string probe_csv(const std::vector<SparsityPoint>& points);

}  // namespace elas::bench
