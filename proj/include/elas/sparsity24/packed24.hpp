#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "elas/numerics/matrix.hpp"
#include "elas/sparsity24/sparsify.hpp"

namespace elas {

/// 2:4-compressed matrix: two kept values per aligned group of four, plus the
/// in-group position (0..3) of each kept value.
///
/// Layout is group-major: group g of row r owns values[2·(r·cols/4 + g) + {0,1}],
/// and the two positions of a group are distinct and ascending. Groups with
/// fewer than two nonzeros are filled with zero values at the lowest unused
/// positions, so every group stores exactly two entries.
template <typename T>
struct Packed24 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;
  std::vector<std::uint8_t> meta;

  std::size_t groups() const noexcept { return values.size() / 2; }

  /// Bytes held by this encoding when values are `value_bytes` wide and each
  /// position code takes two bits.
  double storage_bytes(double value_bytes) const noexcept {
    return static_cast<double>(values.size()) * (value_bytes + 0.25);
  }

  friend bool operator==(const Packed24&, const Packed24&) = default;
};

using Packed24Tensor = Packed24<float>;

/// Encodes a matrix that already satisfies the 2:4 pattern. Throws
/// ShapeError for unaligned widths and PatternError naming the first
/// offending (row, group) when some group has more than two nonzeros.
template <typename T>
Packed24<T> pack(const BasicMatrix<T>& z_sparse);

/// Encodes the entries of `z` at the positions flagged by `mask`, regardless of
/// their values. Used to store tensors that share a mask with another one.
template <typename T>
Packed24<T> pack_with_mask(const BasicMatrix<T>& z, const Mask24& mask);

/// Decodes to dense. Throws FormatError on inconsistent sizes, out-of-range,
/// duplicate or non-ascending positions.
template <typename T>
BasicMatrix<T> unpack(const Packed24<T>& p);

/// Throws FormatError unless `p` satisfies the invariants above.
template <typename T>
void validate(const Packed24<T>& p);

/// The mask encoded by the position metadata.
template <typename T>
Mask24 mask_of(const Packed24<T>& p);

/// unpack(p) · w, reading only the packed values and positions.
template <typename T>
BasicMatrix<T> spmm(const Packed24<T>& p, const BasicMatrix<T>& w);

/// unpack(p)ᵀ · g, reading only the packed values and positions.
template <typename T>
BasicMatrix<T> spmm_tn(const Packed24<T>& p, const BasicMatrix<T>& g);

/// Little-endian: rows (u64), cols (u64), values (raw IEEE-754), then one
/// byte per kept value holding its position in the low two bits.
void write_packed(std::ostream& out, const Packed24<float>& p);
Packed24<float> read_packed(std::istream& in);
std::vector<std::uint8_t> serialize_packed(const Packed24<float>& p);
Packed24<float> deserialize_packed(const std::vector<std::uint8_t>& bytes);

}  // namespace elas
