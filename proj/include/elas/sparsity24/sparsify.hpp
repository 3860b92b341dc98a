#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elas/numerics/matrix.hpp"

namespace elas {

/// One flag per element; in every aligned group of four along a row exactly
/// two flags are set.
struct Mask24 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  bool operator()(std::size_t r, std::size_t c) const noexcept { return keep[r * cols + c] != 0; }
  std::size_t groups_per_row() const noexcept { return cols / 4; }
  /// The two kept positions (0..3, ascending) of group `g` in row `r`.
  std::pair<std::uint8_t, std::uint8_t> kept(std::size_t r, std::size_t g) const noexcept;

  friend bool operator==(const Mask24&, const Mask24&) = default;
};

enum class SparsifierKind { naive, soft_weights, soft_activation };

std::string_view to_string(SparsifierKind kind);
/// Parses "naive", "soft_weights" or "soft_activation"; throws ConfigError otherwise.
SparsifierKind parse_sparsifier_kind(std::string_view name);

/// Which 2:4 sparsifier to run and its per-layer parameters.
struct SparsifierVariant {
  SparsifierKind kind = SparsifierKind::naive;
  /// Fitted output scale β. Required for soft_activation.
  std::optional<double> scale;
  /// Batch the soft_activation scale was fitted on, if retained.
  std::optional<Matrix> calibration_batch;

  static SparsifierVariant naive() { return {}; }
  static SparsifierVariant soft_weights() { return {SparsifierKind::soft_weights, {}, {}}; }
  /// Fits β on `batch` and keeps the batch.
  static SparsifierVariant soft_activation(const Matrix& batch);
  static SparsifierVariant soft_activation_with_scale(double scale) {
    return {SparsifierKind::soft_activation, scale, {}};
  }

  /// Throws ConfigError when `scale` is present but not finite and positive.
  void validate() const;
};

struct CalibrationResult {
  double scale = 1.0;
  /// Set when the soft-thresholded batch was all zero and the scale fell back to 1.
  bool degenerate = false;
};

/// Throws ShapeError unless cols is a multiple of four.
void require_group_aligned(std::size_t cols, std::string_view op);

/// Top-2 |z| per aligned group of four; ties go to the lower index.
template <typename T>
Mask24 mask_top2(const BasicMatrix<T>& z);

/// mask_top2(z) ⊙ z.
template <typename T>
BasicMatrix<T> sparsify_naive(const BasicMatrix<T>& z);

/// Element-wise product with a precomputed mask.
template <typename T>
BasicMatrix<T> apply_mask(const BasicMatrix<T>& z, const Mask24& mask);

/// Per group, threshold θ = third-largest magnitude: sign(z)·max(|z| − θ, 0).
/// At most two entries per group survive, and they lie inside mask_top2(z).
template <typename T>
BasicMatrix<T> soft_threshold24(const BasicMatrix<T>& z);

/// Soft threshold followed by the per-tensor least-squares scale
/// β = ⟨S, z⟩ / ⟨S, S⟩ (β = 1 when S is all zero), refit on every call.
template <typename T>
BasicMatrix<T> sparsify_soft_weights(const BasicMatrix<T>& z, const SparsifierVariant& variant);

/// Soft threshold scaled by the variant's calibrated β. Throws ConfigError if
/// the variant has no scale.
template <typename T>
BasicMatrix<T> sparsify_soft_activation(const BasicMatrix<T>& z, const SparsifierVariant& variant);

/// Least-squares scale for soft-thresholding `batch`.
template <typename T>
CalibrationResult calibrate_soft_scale(const BasicMatrix<T>& batch);

/// Dispatches on variant.kind.
template <typename T>
BasicMatrix<T> sparsify(const BasicMatrix<T>& z, const SparsifierVariant& variant);

/// Straight-through backward rule: the gradient passes through unchanged.
template <typename T>
BasicMatrix<T> ste_backward(const BasicMatrix<T>& grad_out);

/// Row and group of the first aligned group with more than two nonzeros.
template <typename T>
std::optional<std::pair<std::size_t, std::size_t>> first_pattern_violation(const BasicMatrix<T>& z);

template <typename T>
bool satisfies_24(const BasicMatrix<T>& z) {
  return z.cols() % 4 == 0 && !first_pattern_violation(z).has_value();
}

/// Fraction of entries that are exactly zero.
template <typename T>
double zero_fraction(const BasicMatrix<T>& z);

}  // namespace elas
