#pragma once

#include <cstdint>

#include "elas/numerics/matrix.hpp"

namespace elas {

// Layout convention used by every model component: activations are
// (tokens × features), one token per row. A layer with weight W (d_out × d_in)
// maps x (n × d_in) to x·Wᵀ (n × d_out).

/// Rank-r factorization W = A·B with A (d_out × r) and B (r × d_in).
template <typename T>
struct LowRankLinear {
  BasicMatrix<T> A;
  BasicMatrix<T> B;

  std::size_t rank() const noexcept { return A.cols(); }
  std::size_t d_out() const noexcept { return A.rows(); }
  std::size_t d_in() const noexcept { return B.cols(); }

  /// Both factors Xavier-uniform, seeded from (seed, 0) and (seed, 1).
  static LowRankLinear xavier(std::size_t d_out, std::size_t d_in, std::size_t rank,
                              std::uint64_t seed);
  static LowRankLinear from_factors(BasicMatrix<T> a, BasicMatrix<T> b);

  /// Throws ContractError for mismatched factors or rank > min(d_out, d_in).
  void validate() const;
  /// rank > min(d_out, d_in) / 2, where the factorization saves little.
  bool rank_exceeds_half() const noexcept;

  /// Materialized A·B; for tests and refresh only, never used on the forward path.
  BasicMatrix<T> product() const;
};

template <typename T>
struct LowRankGrads {
  BasicMatrix<T> A;
  BasicMatrix<T> B;
  BasicMatrix<T> x;
};

/// x·Bᵀ·Aᵀ, evaluated right to left through the rank-r bottleneck.
template <typename T>
BasicMatrix<T> lr_forward(const LowRankLinear<T>& layer, const BasicMatrix<T>& x);

/// With h = x·Bᵀ: grad_A = gyᵀ·h, grad_B = (gy·A)ᵀ·x, grad_x = gy·A·B.
template <typename T>
LowRankGrads<T> lr_backward(const LowRankLinear<T>& layer, const BasicMatrix<T>& x,
                            const BasicMatrix<T>& grad_y);

/// (max(0, z))².
template <typename T>
BasicMatrix<T> relu2_forward(const BasicMatrix<T>& z);

/// 2·max(0, z) ⊙ grad_out.
template <typename T>
BasicMatrix<T> relu2_backward(const BasicMatrix<T>& z, const BasicMatrix<T>& grad_out);

}  // namespace elas
