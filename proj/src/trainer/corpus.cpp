#include "elas/trainer/corpus.hpp"

#include <fstream>
#include <iterator>
#include <random>

#include "elas/numerics/errors.hpp"
#include "elas/numerics/init.hpp"

namespace elas {

Corpus Corpus::from_bytes(std::vector<std::uint8_t> bytes, double eval_fraction) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ConfigError("eval_fraction must lie in (0, 1)");
  }
  const auto eval_len = static_cast<std::size_t>(static_cast<double>(bytes.size()) * eval_fraction);
  if (eval_len == 0 || eval_len == bytes.size()) {
    throw ConfigError("corpus of " + std::to_string(bytes.size()) +
                      " bytes leaves an empty train or eval split");
  }
  const std::size_t split = bytes.size() - eval_len;
  return Corpus(std::move(bytes), split);
}

Corpus Corpus::from_file(const std::string& path, double eval_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading corpus '" + path + "'");
  return from_bytes(std::move(bytes), eval_fraction);
}

std::span<const std::uint8_t> Corpus::train() const noexcept {
  return std::span<const std::uint8_t>(bytes_).first(split_);
}

std::span<const std::uint8_t> Corpus::eval() const noexcept {
  return std::span<const std::uint8_t>(bytes_).subspan(split_);
}

TokenBatch batch_from_offsets(std::span<const std::uint8_t> stream,
                              std::span<const std::size_t> offsets, std::size_t seq) {
  TokenBatch b;
  b.batch = offsets.size();
  b.seq = seq;
  b.inputs.reserve(b.tokens());
  b.targets.reserve(b.tokens());
  for (const std::size_t off : offsets) {
    if (off + seq + 1 > stream.size()) throw ContractError("batch window runs past the end of the split");
    for (std::size_t t = 0; t < seq; ++t) {
      b.inputs.push_back(stream[off + t]);
      b.targets.push_back(stream[off + t + 1]);
    }
  }
  return b;
}

TokenBatch Corpus::train_batch(std::uint64_t seed, std::int64_t step, std::size_t batch,
                               std::size_t seq) const {
  const auto data = train();
  if (data.size() < seq + 1) {
    throw ContractError("train split of " + std::to_string(data.size()) +
                        " bytes is shorter than one sequence");
  }
  const std::uint64_t windows = data.size() - seq;
  std::mt19937_64 rng(mix_seed(seed, 0x7261696eULL + static_cast<std::uint64_t>(step) * 0x100000001b3ULL));
  std::vector<std::size_t> offsets(batch);
  // Plain modulo: the bias for corpora of < 2^32 bytes is far below anything
  // that matters here, and it keeps batches identical across standard libraries.
  for (auto& off : offsets) off = static_cast<std::size_t>(rng() % windows);
  return batch_from_offsets(data, offsets, seq);
}

std::vector<TokenBatch> Corpus::eval_batches(std::size_t count, std::size_t batch, std::size_t seq) const {
  const auto data = eval();
  if (data.empty()) throw ContractError("eval split is empty");
  if (data.size() < seq + 1) {
    throw ContractError("eval split of " + std::to_string(data.size()) +
                        " bytes is shorter than one sequence");
  }
  const std::size_t windows = count * batch;
  const std::size_t last = data.size() - seq - 1;
  std::vector<TokenBatch> out;
  out.reserve(count);
  std::vector<std::size_t> offsets(batch);
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t w = c * batch + i;
      offsets[i] = windows > 1 ? w * last / (windows - 1) : 0;
    }
    out.push_back(batch_from_offsets(data, offsets, seq));
  }
  return out;
}

}  // namespace elas
