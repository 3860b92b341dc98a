#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace elas::cost {

/// Architecture of one of the reference LLaMA-style model sizes.
struct ModelPreset {
  std::string name;  // "60M", "130M", "350M", "1B"
  std::size_t hidden = 0;
  std::size_t intermediate = 0;
  std::size_t heads = 0;
  std::size_t layers = 0;
  double training_tokens = 0.0;
  std::size_t rank = 0;  // low-rank factor rank used for this size
};

const std::vector<ModelPreset>& model_presets();
/// Case-insensitive ("1b", "1B"). Throws std::invalid_argument.
const ModelPreset& find_preset(std::string_view name);

/// Packed 2:4 storage relative to dense 16-bit storage: half the values plus
/// 2 bits of position per kept value, (1 + 1/8) / 2.
inline constexpr double kPackedRatio = 9.0 / 16.0;
inline constexpr double kBytesPerGb = 1e9;

struct MemoryEstimate {
  double dense_gb = 0.0;
  double sparse_gb = 0.0;
  double ratio = 0.0;  // sparse_gb / dense_gb
};

/// Bytes of the two saved FFN intermediates (pre- and post-activation) over
/// all layers at 2 bytes per element; packed 2:4 storage when `sparse`.
double ffn_activation_bytes(const ModelPreset& preset, std::size_t batch, std::size_t seq_len, bool sparse);

/// Both variants in decimal GB.
MemoryEstimate ffn_activation_memory(const ModelPreset& preset, std::size_t batch, std::size_t seq_len);

/// Multiply-add counts of one FFN forward over batch·seq tokens, full-rank
/// projections. Only the down projection consumes the 2:4 activation.
struct FlopModel {
  double tokens = 0.0;
  double up_macs = 0.0;
  double down_dense_macs = 0.0;
  double down_sparse_macs = 0.0;
  double gemm_ratio = 0.0;          // down_sparse / down_dense
  double gemm_ideal_speedup = 0.0;  // 1 / gemm_ratio
  double ffn_ideal_speedup = 0.0;   // whole block, up projection unchanged
};

FlopModel spmm_flop_model(const ModelPreset& preset, std::size_t seq_len, std::size_t batch = 1);

/// Hardware FFN speedup reported for this preset and sequence length, when
/// one exists. Context only; nothing here predicts it.
std::optional<double> measured_ffn_speedup(const ModelPreset& preset, std::size_t seq_len);

/// Reference activation-memory figures for the 1B preset at sequence length
/// 2048, per batch in reference_batches().
const std::vector<std::size_t>& reference_batches();
const std::vector<double>& reference_dense_gb();
const std::vector<double>& reference_sparse_gb();

enum class TableFormat { csv, text };

/// Memory table: one row per variant (dense low-rank, sparse), one column
/// per batch. Values printed with 4 decimals; csv and text carry the same
/// numbers.
std::string memory_table(const ModelPreset& preset, std::size_t seq_len,
                         const std::vector<std::size_t>& batches, TableFormat format);

/// Ratio table: sparse/dense per batch, plus the reference ratio where the
/// preset and sequence length have reference figures.
std::string ratio_table(const ModelPreset& preset, std::size_t seq_len,
                        const std::vector<std::size_t>& batches, TableFormat format);

/// FLOP summary for one preset.
std::string flop_table(const ModelPreset& preset, std::size_t seq_len, TableFormat format);

/// Writes memory, ratio and FLOP tables into `dir` as
/// {memory,ratio,flops}.{csv,txt}. Returns the written paths. Throws
/// std::runtime_error on IO failure.
std::vector<std::string> emit_tables(const std::string& dir, const ModelPreset& preset, std::size_t seq_len,
                                     const std::vector<std::size_t>& batches, TableFormat format);

}  // namespace elas::cost
