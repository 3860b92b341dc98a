#pragma once

#include <cstdint>

#include "elas/model/lowrank.hpp"
#include "elas/sparsity24/packed24.hpp"
#include "elas/sparsity24/sparsify.hpp"

namespace elas {

/// Low-rank feed-forward block y = W_down · ReLU²(W_up · x), with optional 2:4
/// sparsification of the ReLU² output before the down projection.
template <typename T>
struct SparseFfn {
  LowRankLinear<T> up;    // d_ff × d_model
  LowRankLinear<T> down;  // d_model × d_ff
  SparsifierVariant sparsifier;
  bool sparsity_enabled = true;

  std::size_t d_model() const noexcept { return up.d_in(); }
  std::size_t d_ff() const noexcept { return up.d_out(); }

  static SparseFfn xavier(std::size_t d_model, std::size_t d_ff, std::size_t rank,
                          std::uint64_t seed, SparsifierVariant variant = {});
  /// Throws ContractError on mismatched projections and ShapeError when
  /// sparsity is enabled with d_ff not a multiple of 4.
  void validate() const;
};

enum class StorageTag { dense, packed24 };

/// What ffn_backward needs from ffn_forward.
///
/// Dense path: the pre-activation z and the activation a, both dense.
/// Sparse path: the sparsified activation and z restricted to the same 2:4
/// support, both packed. z is zero off the support, so the ReLU² derivative
/// is zero at dropped positions.
template <typename T>
struct FfnSaved {
  const void* owner = nullptr;
  StorageTag storage = StorageTag::dense;
  BasicMatrix<T> input;
  BasicMatrix<T> pre_activation;
  BasicMatrix<T> activation;
  Packed24<T> pre_activation_packed;
  Packed24<T> activation_packed;
  /// Fraction of exact zeros in the ReLU² output before any masking.
  double natural_sparsity = 0.0;

  std::size_t tokens() const noexcept { return input.rows(); }
  /// Bytes held by the two saved intermediates at `element_bytes` per
  /// value, with 2-bit position codes for packed storage.
  double intermediate_bytes(double element_bytes) const noexcept;
};

template <typename T>
struct FfnForward {
  BasicMatrix<T> y;
  FfnSaved<T> saved;
};

template <typename T>
struct FfnGrads {
  BasicMatrix<T> up_A, up_B;
  BasicMatrix<T> down_A, down_B;
  BasicMatrix<T> x;
  /// ∂L/∂a_sparse, the gradient arriving at the sparsifier output.
  BasicMatrix<T> activation_sparse;
  /// ∂L/∂a, the gradient leaving the sparsifier towards ReLU².
  BasicMatrix<T> activation;
};

/// Runs the sparse path when both `sparsity_on` and ffn.sparsity_enabled hold.
template <typename T>
FfnForward<T> ffn_forward(const SparseFfn<T>& ffn, const BasicMatrix<T>& x, bool sparsity_on);

/// Throws ContractError when `saved` came from another block or its shapes
/// disagree with `grad_y`.
template <typename T>
FfnGrads<T> ffn_backward(const SparseFfn<T>& ffn, const FfnSaved<T>& saved,
                         const BasicMatrix<T>& grad_y);

}  // namespace elas
