#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elas/numerics/matrix.hpp"
#include "elas/sparsity24/packed24.hpp"

namespace elas {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2, text = 3, packed24 = 4 };

/// One named tensor; payload is raw little-endian data.
struct CheckpointRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;
};

/// In-memory form of a checkpoint file.
///
/// On disk: "ELAS", u32 version, u64 record count, then per record
/// {u32 name length, name, u8 dtype, u32 ndim, u64 dims[ndim], u64 payload
/// length, payload}, then the CRC32 of every preceding byte.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put_matrix(const std::string& name, const Matrix& m);
  void put_f64(const std::string& name, const std::vector<double>& values);
  void put_i64(const std::string& name, const std::vector<std::int64_t>& values);
  void put_text(const std::string& name, const std::string& text);
  void put_packed(const std::string& name, const Packed24<float>& p);

  bool contains(const std::string& name) const noexcept;
  /// Getters throw FormatError when the record is missing or has the wrong
  /// dtype or shape.
  Matrix matrix(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;
  std::string text(const std::string& name) const;
  Packed24<float> packed(const std::string& name) const;

  const std::vector<CheckpointRecord>& records() const noexcept { return records_; }

  std::vector<std::uint8_t> encode() const;
  /// Parses and validates the whole buffer. Throws FormatError on bad magic,
  /// unsupported version, truncation, trailing bytes or CRC mismatch.
  static Checkpoint decode(const std::vector<std::uint8_t>& bytes);

  /// Writes via a temporary file and rename. Throws IoError.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  const CheckpointRecord& find(const std::string& name, DType dtype) const;
  void put(CheckpointRecord record);

  std::vector<CheckpointRecord> records_;
};

}  // namespace elas
