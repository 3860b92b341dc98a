#pragma once

#include <cstdint>
#include <random>

#include "elas/numerics/matrix.hpp"

namespace elas {

/// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw. Unlike
/// std::uniform_real_distribution this is identical across standard libraries.
inline double unit_uniform(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// i.i.d. U[-√(6/(rows+cols)), +√(6/(rows+cols))], a pure function of its arguments.
template <typename T>
BasicMatrix<T> xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// i.i.d. U[lo, hi), a pure function of its arguments.
template <typename T>
BasicMatrix<T> uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi,
                              std::uint64_t seed);

/// i.i.d. standard normal (Box-Muller over unit_uniform), scaled by stddev.
template <typename T>
BasicMatrix<T> normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                             std::uint64_t seed);

}  // namespace elas
