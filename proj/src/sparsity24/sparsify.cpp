#include "elas/sparsity24/sparsify.hpp"

#include <cmath>

#include "elas/numerics/linalg.hpp"

namespace elas {

namespace {

// Indices of the two largest magnitudes among four, lower index on ties,
// returned in ascending order.
template <typename T>
std::pair<std::uint8_t, std::uint8_t> top2_positions(const T* g) {
  const T m0 = std::abs(g[0]), m1 = std::abs(g[1]), m2 = std::abs(g[2]), m3 = std::abs(g[3]);
  const T mags[4] = {m0, m1, m2, m3};
  std::uint8_t first = 0;
  for (std::uint8_t i = 1; i < 4; ++i)
    if (mags[i] > mags[first]) first = i;
  std::uint8_t second = first == 0 ? 1 : 0;
  for (std::uint8_t i = second + 1; i < 4; ++i)
    if (i != first && mags[i] > mags[second]) second = i;
  return first < second ? std::pair{first, second} : std::pair{second, first};
}

// Third-largest magnitude of a group (the soft threshold).
template <typename T>
T third_largest_magnitude(const T* g) {
  T m[4] = {std::abs(g[0]), std::abs(g[1]), std::abs(g[2]), std::abs(g[3])};
  // Four-element sorting network, descending.
  auto order = [](T& a, T& b) {
    if (a < b) std::swap(a, b);
  };
  order(m[0], m[1]);
  order(m[2], m[3]);
  order(m[0], m[2]);
  order(m[1], m[3]);
  order(m[1], m[2]);
  return m[2];
}

struct ScaleFit {
  double numerator = 0.0;    // ⟨S, z⟩
  double denominator = 0.0;  // ⟨S, S⟩
};

template <typename T>
BasicMatrix<T> soft_threshold_with_fit(const BasicMatrix<T>& z, ScaleFit* fit) {
  require_group_aligned(z.cols(), "soft_threshold24");
  BasicMatrix<T> out(z.rows(), z.cols());
  const std::size_t groups = z.size() / 4;
  const T* src = z.data();
  T* dst = out.data();
  double num = 0.0, den = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const T* in = src + 4 * g;
    const T theta = third_largest_magnitude(in);
    for (int i = 0; i < 4; ++i) {
      const T shrunk = std::abs(in[i]) - theta;
      const T v = shrunk > T{0} ? std::copysign(shrunk, in[i]) : T{0};
      dst[4 * g + i] = v;
      num += static_cast<double>(v) * static_cast<double>(in[i]);
      den += static_cast<double>(v) * static_cast<double>(v);
    }
  }
  if (fit) *fit = {num, den};
  return out;
}

}  // namespace

std::pair<std::uint8_t, std::uint8_t> Mask24::kept(std::size_t r, std::size_t g) const noexcept {
  const std::uint8_t* base = keep.data() + r * cols + 4 * g;
  std::uint8_t found[2] = {0, 0};
  int n = 0;
  for (std::uint8_t i = 0; i < 4 && n < 2; ++i)
    if (base[i]) found[n++] = i;
  return {found[0], found[1]};
}

std::string_view to_string(SparsifierKind kind) {
  switch (kind) {
    case SparsifierKind::naive: return "naive";
    case SparsifierKind::soft_weights: return "soft_weights";
    case SparsifierKind::soft_activation: return "soft_activation";
  }
  return "unknown";
}

SparsifierKind parse_sparsifier_kind(std::string_view name) {
  if (name == "naive") return SparsifierKind::naive;
  if (name == "soft_weights") return SparsifierKind::soft_weights;
  if (name == "soft_activation") return SparsifierKind::soft_activation;
  throw ConfigError("unknown sparsifier '" + std::string(name) +
                    "' (expected naive, soft_weights or soft_activation)");
}

SparsifierVariant SparsifierVariant::soft_activation(const Matrix& batch) {
  SparsifierVariant v;
  v.kind = SparsifierKind::soft_activation;
  v.scale = calibrate_soft_scale(batch).scale;
  v.calibration_batch = batch;
  return v;
}

void SparsifierVariant::validate() const {
  if (scale && !(std::isfinite(*scale) && *scale > 0.0)) {
    throw ConfigError("sparsifier scale must be finite and positive, got " +
                      std::to_string(*scale));
  }
}

void require_group_aligned(std::size_t cols, std::string_view op) {
  if (cols % 4 != 0) {
    throw ShapeError(std::string(op) + ": column count " + std::to_string(cols) +
                     " is not a multiple of 4");
  }
}

template <typename T>
Mask24 mask_top2(const BasicMatrix<T>& z) {
  require_group_aligned(z.cols(), "mask_top2");
  Mask24 mask{z.rows(), z.cols(), std::vector<std::uint8_t>(z.size(), 0)};
  const std::size_t groups = z.size() / 4;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto [a, b] = top2_positions(z.data() + 4 * g);
    mask.keep[4 * g + a] = 1;
    mask.keep[4 * g + b] = 1;
  }
  return mask;
}

template <typename T>
BasicMatrix<T> apply_mask(const BasicMatrix<T>& z, const Mask24& mask) {
  if (mask.rows != z.rows() || mask.cols != z.cols()) {
    throw ContractError("apply_mask: mask " + shape_string(mask.rows, mask.cols) +
                        " vs matrix " + shape_string(z));
  }
  BasicMatrix<T> out(z.rows(), z.cols());
  const T* src = z.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) dst[i] = mask.keep[i] ? src[i] : T{0};
  return out;
}

template <typename T>
BasicMatrix<T> sparsify_naive(const BasicMatrix<T>& z) {
  require_group_aligned(z.cols(), "sparsify_naive");
  BasicMatrix<T> out(z.rows(), z.cols());
  const std::size_t groups = z.size() / 4;
  for (std::size_t g = 0; g < groups; ++g) {
    const T* in = z.data() + 4 * g;
    const auto [a, b] = top2_positions(in);
    out.data()[4 * g + a] = in[a];
    out.data()[4 * g + b] = in[b];
  }
  return out;
}

template <typename T>
BasicMatrix<T> soft_threshold24(const BasicMatrix<T>& z) {
  return soft_threshold_with_fit(z, nullptr);
}

template <typename T>
CalibrationResult calibrate_soft_scale(const BasicMatrix<T>& batch) {
  if (batch.empty()) throw ShapeError("calibrate_soft_scale: empty calibration batch");
  ScaleFit fit;
  soft_threshold_with_fit(batch, &fit);
  if (fit.denominator == 0.0) return {1.0, true};
  const double beta = fit.numerator / fit.denominator;
  if (!(std::isfinite(beta) && beta > 0.0)) return {1.0, true};
  return {beta, false};
}

template <typename T>
BasicMatrix<T> sparsify_soft_weights(const BasicMatrix<T>& z, const SparsifierVariant& variant) {
  if (variant.kind != SparsifierKind::soft_weights) {
    throw ConfigError("sparsify_soft_weights called with variant " +
                      std::string(to_string(variant.kind)));
  }
  ScaleFit fit;
  BasicMatrix<T> out = soft_threshold_with_fit(z, &fit);
  const double beta = fit.denominator > 0.0 ? fit.numerator / fit.denominator : 1.0;
  if (beta != 1.0)
    for (T& v : out.values()) v = static_cast<T>(beta * static_cast<double>(v));
  return out;
}

template <typename T>
BasicMatrix<T> sparsify_soft_activation(const BasicMatrix<T>& z, const SparsifierVariant& variant) {
  if (variant.kind != SparsifierKind::soft_activation) {
    throw ConfigError("sparsify_soft_activation called with variant " +
                      std::string(to_string(variant.kind)));
  }
  if (!variant.scale) {
    throw ConfigError("soft_activation sparsifier used before its scale was calibrated");
  }
  variant.validate();
  BasicMatrix<T> out = soft_threshold_with_fit(z, nullptr);
  const double beta = *variant.scale;
  if (beta != 1.0)
    for (T& v : out.values()) v = static_cast<T>(beta * static_cast<double>(v));
  return out;
}

template <typename T>
BasicMatrix<T> sparsify(const BasicMatrix<T>& z, const SparsifierVariant& variant) {
  switch (variant.kind) {
    case SparsifierKind::naive: return sparsify_naive(z);
    case SparsifierKind::soft_weights: return sparsify_soft_weights(z, variant);
    case SparsifierKind::soft_activation: return sparsify_soft_activation(z, variant);
  }
  throw ConfigError("unknown sparsifier kind");
}

template <typename T>
BasicMatrix<T> ste_backward(const BasicMatrix<T>& grad_out) {
  return grad_out;
}

template <typename T>
std::optional<std::pair<std::size_t, std::size_t>> first_pattern_violation(const BasicMatrix<T>& z) {
  require_group_aligned(z.cols(), "pattern check");
  const std::size_t per_row = z.cols() / 4;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const T* row = z.data() + r * z.cols();
    for (std::size_t g = 0; g < per_row; ++g) {
      int nonzeros = 0;
      for (int i = 0; i < 4; ++i) nonzeros += row[4 * g + i] != T{0};
      if (nonzeros > 2) return std::pair{r, g};
    }
  }
  return std::nullopt;
}

template <typename T>
double zero_fraction(const BasicMatrix<T>& z) {
  if (z.empty()) return 0.0;
  std::size_t zeros = 0;
  for (T v : z.values()) zeros += v == T{0};
  return static_cast<double>(zeros) / static_cast<double>(z.size());
}

#define ELAS_INSTANTIATE_SPARSIFY(T)                                                         \
  template Mask24 mask_top2(const BasicMatrix<T>&);                                          \
  template BasicMatrix<T> apply_mask(const BasicMatrix<T>&, const Mask24&);                  \
  template BasicMatrix<T> sparsify_naive(const BasicMatrix<T>&);                             \
  template BasicMatrix<T> soft_threshold24(const BasicMatrix<T>&);                           \
  template BasicMatrix<T> sparsify_soft_weights(const BasicMatrix<T>&,                       \
                                                const SparsifierVariant&);                   \
  template BasicMatrix<T> sparsify_soft_activation(const BasicMatrix<T>&,                    \
                                                   const SparsifierVariant&);                \
  template CalibrationResult calibrate_soft_scale(const BasicMatrix<T>&);                    \
  template BasicMatrix<T> sparsify(const BasicMatrix<T>&, const SparsifierVariant&);         \
  template BasicMatrix<T> ste_backward(const BasicMatrix<T>&);                               \
  template std::optional<std::pair<std::size_t, std::size_t>> first_pattern_violation(       \
      const BasicMatrix<T>&);                                                                \
  template double zero_fraction(const BasicMatrix<T>&);

ELAS_INSTANTIATE_SPARSIFY(float)
ELAS_INSTANTIATE_SPARSIFY(double)

#undef ELAS_INSTANTIATE_SPARSIFY

}  // namespace elas
