#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "elas/model/transformer.hpp"

namespace elas {

/// Byte-level token stream split into a leading train part and a trailing,
/// disjoint eval part.
class Corpus {
 public:
  /// `eval_fraction` of the bytes (rounded down) go to the eval split.
  /// Throws ConfigError when either split would be empty; lengths against
  /// the sequence length are checked at batch time.
  static Corpus from_bytes(std::vector<std::uint8_t> bytes, double eval_fraction);
  /// Throws IoError when the file cannot be read.
  static Corpus from_file(const std::string& path, double eval_fraction);

  std::span<const std::uint8_t> train() const noexcept;
  std::span<const std::uint8_t> eval() const noexcept;
  std::size_t size() const noexcept { return bytes_.size(); }
  std::size_t split_offset() const noexcept { return split_; }

  /// Training batch for `step`: a pure function of (seed, step). Windows are
  /// drawn uniformly from the train split. Throws ContractError if the split
  /// is shorter than seq + 1.
  TokenBatch train_batch(std::uint64_t seed, std::int64_t step, std::size_t batch,
                         std::size_t seq) const;

  /// Fixed eval batches with evenly spaced windows over the eval split.
  /// Throws ContractError on an empty or too-short split.
  std::vector<TokenBatch> eval_batches(std::size_t count, std::size_t batch, std::size_t seq) const;

 private:
  Corpus(std::vector<std::uint8_t> bytes, std::size_t split) : bytes_(std::move(bytes)), split_(split) {}

  std::vector<std::uint8_t> bytes_;
  std::size_t split_ = 0;
};

/// Fills a batch from explicit window starts within `stream`.
TokenBatch batch_from_offsets(std::span<const std::uint8_t> stream,
                              std::span<const std::size_t> offsets, std::size_t seq);

}  // namespace elas
