#include "elas/sparsity24/packed24.hpp"

#include <istream>
#include <iterator>
#include <ostream>

#include "elas/numerics/byteio.hpp"

namespace elas {

namespace {

template <typename T>
Packed24<T> empty_packed(std::size_t rows, std::size_t cols) {
  Packed24<T> p;
  p.rows = rows;
  p.cols = cols;
  p.values.resize(rows * cols / 2);
  p.meta.resize(rows * cols / 2);
  return p;
}

}  // namespace

template <typename T>
Packed24<T> pack(const BasicMatrix<T>& z_sparse) {
  require_group_aligned(z_sparse.cols(), "pack");
  Packed24<T> p = empty_packed<T>(z_sparse.rows(), z_sparse.cols());
  const std::size_t per_row = z_sparse.cols() / 4;
  for (std::size_t r = 0; r < z_sparse.rows(); ++r) {
    for (std::size_t g = 0; g < per_row; ++g) {
      const T* in = z_sparse.data() + r * z_sparse.cols() + 4 * g;
      bool used[4] = {false, false, false, false};
      int count = 0;
      for (int i = 0; i < 4; ++i) {
        if (in[i] != T{0}) {
          if (count == 2) {
            throw PatternError(r, g,
                               "pack: row " + std::to_string(r) + " group " + std::to_string(g) +
                                   " has more than two nonzeros");
          }
          used[i] = true;
          ++count;
        }
      }
      for (int i = 0; i < 4 && count < 2; ++i) {
        if (!used[i]) {
          used[i] = true;
          ++count;
        }
      }
      const std::size_t slot = 2 * (r * per_row + g);
      int k = 0;
      for (std::uint8_t i = 0; i < 4; ++i) {
        if (!used[i]) continue;
        p.values[slot + k] = in[i];
        p.meta[slot + k] = i;
        ++k;
      }
    }
  }
  return p;
}

template <typename T>
Packed24<T> pack_with_mask(const BasicMatrix<T>& z, const Mask24& mask) {
  if (mask.rows != z.rows() || mask.cols != z.cols()) {
    throw ContractError("pack_with_mask: mask " + shape_string(mask.rows, mask.cols) +
                        " vs matrix " + shape_string(z));
  }
  require_group_aligned(z.cols(), "pack_with_mask");
  Packed24<T> p = empty_packed<T>(z.rows(), z.cols());
  const std::size_t groups = z.size() / 4;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::uint8_t* flags = mask.keep.data() + 4 * g;
    int k = 0;
    for (std::uint8_t i = 0; i < 4; ++i) {
      if (!flags[i]) continue;
      if (k == 2) throw FormatError("pack_with_mask: mask keeps more than two entries per group");
      p.values[2 * g + k] = z.data()[4 * g + i];
      p.meta[2 * g + k] = i;
      ++k;
    }
    if (k != 2) throw FormatError("pack_with_mask: mask keeps fewer than two entries per group");
  }
  return p;
}

template <typename T>
void validate(const Packed24<T>& p) {
  if (p.cols % 4 != 0) throw FormatError("packed tensor width is not a multiple of 4");
  const std::size_t expected = p.rows * p.cols / 2;
  if (p.values.size() != expected || p.meta.size() != expected) {
    throw FormatError("packed tensor " + shape_string(p.rows, p.cols) + " expects " +
                      std::to_string(expected) + " values and codes, has " +
                      std::to_string(p.values.size()) + " and " + std::to_string(p.meta.size()));
  }
  for (std::size_t g = 0; g < expected / 2; ++g) {
    const std::uint8_t a = p.meta[2 * g], b = p.meta[2 * g + 1];
    if (a > 3 || b > 3) throw FormatError("packed position code out of range in group " + std::to_string(g));
    if (a == b) throw FormatError("duplicate packed position in group " + std::to_string(g));
    if (a > b) throw FormatError("packed positions not ascending in group " + std::to_string(g));
  }
}

template <typename T>
BasicMatrix<T> unpack(const Packed24<T>& p) {
  validate(p);
  BasicMatrix<T> z(p.rows, p.cols);
  for (std::size_t g = 0; g < p.groups(); ++g) {
    z.data()[4 * g + p.meta[2 * g]] = p.values[2 * g];
    z.data()[4 * g + p.meta[2 * g + 1]] = p.values[2 * g + 1];
  }
  return z;
}

template <typename T>
Mask24 mask_of(const Packed24<T>& p) {
  validate(p);
  Mask24 mask{p.rows, p.cols, std::vector<std::uint8_t>(p.rows * p.cols, 0)};
  for (std::size_t g = 0; g < p.groups(); ++g) {
    mask.keep[4 * g + p.meta[2 * g]] = 1;
    mask.keep[4 * g + p.meta[2 * g + 1]] = 1;
  }
  return mask;
}

template <typename T>
BasicMatrix<T> spmm(const Packed24<T>& p, const BasicMatrix<T>& w) {
  if (p.cols != w.rows()) {
    throw ContractError("spmm: packed " + shape_string(p.rows, p.cols) + " x " + shape_string(w));
  }
  const std::size_t n = w.cols();
  const std::size_t per_row = p.cols / 4;
  BasicMatrix<T> out(p.rows, n);
  for (std::size_t r = 0; r < p.rows; ++r) {
    T* dst = out.data() + r * n;
    const std::size_t base = 2 * r * per_row;
    for (std::size_t g = 0; g < per_row; ++g) {
      for (std::size_t k = 0; k < 2; ++k) {
        const T v = p.values[base + 2 * g + k];
        if (v == T{0}) continue;
        const T* wrow = w.data() + (4 * g + p.meta[base + 2 * g + k]) * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += v * wrow[j];
      }
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> spmm_tn(const Packed24<T>& p, const BasicMatrix<T>& g) {
  if (p.rows != g.rows()) {
    throw ContractError("spmm_tn: packed " + shape_string(p.rows, p.cols) + "^T x " +
                        shape_string(g));
  }
  const std::size_t n = g.cols();
  const std::size_t per_row = p.cols / 4;
  BasicMatrix<T> out(p.cols, n);
  for (std::size_t r = 0; r < p.rows; ++r) {
    const T* grow = g.data() + r * n;
    const std::size_t base = 2 * r * per_row;
    for (std::size_t grp = 0; grp < per_row; ++grp) {
      for (std::size_t k = 0; k < 2; ++k) {
        const T v = p.values[base + 2 * grp + k];
        if (v == T{0}) continue;
        T* dst = out.data() + (4 * grp + p.meta[base + 2 * grp + k]) * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += v * grow[j];
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_packed(const Packed24<float>& p) {
  validate(p);
  ByteWriter w;
  w.u64(p.rows);
  w.u64(p.cols);
  for (float v : p.values) w.f32(v);
  for (std::uint8_t m : p.meta) w.u8(m & 0x3);
  return w.take();
}

Packed24<float> deserialize_packed(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  Packed24<float> p;
  p.rows = r.u64();
  p.cols = r.u64();
  if (p.cols % 4 != 0) throw FormatError("packed tensor width is not a multiple of 4");
  const std::size_t kept = p.rows * p.cols / 2;
  if (kept * 5 > r.remaining()) throw FormatError("packed tensor payload truncated");
  p.values.resize(kept);
  p.meta.resize(kept);
  for (auto& v : p.values) v = r.f32();
  for (auto& m : p.meta) {
    const std::uint8_t byte = r.u8();
    if (byte > 3) throw FormatError("packed position byte uses more than two bits");
    m = byte;
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after packed tensor");
  validate(p);
  return p;
}

void write_packed(std::ostream& out, const Packed24<float>& p) {
  const auto bytes = serialize_packed(p);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write_packed: stream write failed");
}

Packed24<float> read_packed(std::istream& in) {
  char header[16];
  if (!in.read(header, sizeof header)) throw FormatError("read_packed: truncated header");
  ByteReader hr(std::span(reinterpret_cast<const std::uint8_t*>(header), sizeof header));
  const std::uint64_t rows = hr.u64(), cols = hr.u64();
  if (cols % 4 != 0) throw FormatError("packed tensor width is not a multiple of 4");
  const std::size_t kept = rows * cols / 2;
  std::vector<std::uint8_t> bytes(16 + kept * 5);
  std::copy(header, header + 16, reinterpret_cast<char*>(bytes.data()));
  if (!in.read(reinterpret_cast<char*>(bytes.data() + 16), static_cast<std::streamsize>(kept * 5)))
    throw FormatError("read_packed: truncated payload");
  return deserialize_packed(bytes);
}

#define ELAS_INSTANTIATE_PACKED(T)                                                  \
  template Packed24<T> pack(const BasicMatrix<T>&);                                 \
  template Packed24<T> pack_with_mask(const BasicMatrix<T>&, const Mask24&);        \
  template void validate(const Packed24<T>&);                                       \
  template BasicMatrix<T> unpack(const Packed24<T>&);                               \
  template Mask24 mask_of(const Packed24<T>&);                                      \
  template BasicMatrix<T> spmm(const Packed24<T>&, const BasicMatrix<T>&);          \
  template BasicMatrix<T> spmm_tn(const Packed24<T>&, const BasicMatrix<T>&);

ELAS_INSTANTIATE_PACKED(float)
ELAS_INSTANTIATE_PACKED(double)

#undef ELAS_INSTANTIATE_PACKED

}  // namespace elas
