#include "elas/costmodel/costmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace elas::cost {

namespace {

struct MeasuredRow {
  const char* preset;
  double speedup[7];
};

constexpr std::size_t kMeasuredSeq[7] = {512, 2048, 4096, 8192, 16384, 32768, 65536};
constexpr MeasuredRow kMeasured[] = {
    {"60M", {0.50, 1.57, 1.75, 1.50, 1.55, 1.59, 1.55}},
    {"130M", {0.75, 1.56, 1.80, 1.52, 1.51, 1.53, 1.52}},
    {"350M", {1.29, 1.87, 1.86, 1.82, 1.85, 1.88, 1.88}},
    {"1B", {2.05, 2.47, 2.48, 2.55, 2.63, 2.73, 2.75}},
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool has_reference(const ModelPreset& p, std::size_t seq_len) { return p.name == "1B" && seq_len == 2048; }

std::optional<double> reference_at(const std::vector<double>& ref, std::size_t batch) {
  const auto& b = reference_batches();
  const auto it = std::find(b.begin(), b.end(), batch);
  if (it == b.end()) return std::nullopt;
  return ref[static_cast<std::size_t>(it - b.begin())];
}

// Renders rows of cells as csv or as a right-aligned text grid.
std::string render(const std::vector<std::vector<std::string>>& rows, TableFormat format) {
  std::string out;
  if (format == TableFormat::csv) {
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    }
    return out;
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        out += r[i] + std::string(width[i] - r[i].size(), ' ');
      } else {
        out += "  " + std::string(width[i] - r[i].size(), ' ') + r[i];
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"60M", 512, 1376, 8, 8, 1.3e9, 128},
      {"130M", 768, 2048, 12, 12, 2.6e9, 256},
      {"350M", 1024, 2736, 16, 24, 6.4e9, 256},
      {"1B", 2048, 5461, 24, 32, 13.1e9, 512},
  };
  return presets;
}

const ModelPreset& find_preset(std::string_view name) {
  const std::string want = lower(name);
  for (const auto& p : model_presets()) {
    if (lower(p.name) == want) return p;
  }
  throw std::invalid_argument("unknown model preset '" + std::string(name) + "' (expected 60m, 130m, 350m or 1b)");
}

double ffn_activation_bytes(const ModelPreset& p, std::size_t batch, std::size_t seq_len, bool sparse) {
  constexpr double kSavedIntermediates = 2.0;
  constexpr double kBytesPerElement = 2.0;
  const double dense = kSavedIntermediates * static_cast<double>(batch) * static_cast<double>(seq_len) *
                       static_cast<double>(p.intermediate) * static_cast<double>(p.layers) * kBytesPerElement;
  return sparse ? dense * kPackedRatio : dense;
}

MemoryEstimate ffn_activation_memory(const ModelPreset& p, std::size_t batch, std::size_t seq_len) {
  MemoryEstimate e;
  e.dense_gb = ffn_activation_bytes(p, batch, seq_len, false) / kBytesPerGb;
  e.sparse_gb = ffn_activation_bytes(p, batch, seq_len, true) / kBytesPerGb;
  e.ratio = e.dense_gb > 0.0 ? e.sparse_gb / e.dense_gb : kPackedRatio;
  return e;
}

FlopModel spmm_flop_model(const ModelPreset& p, std::size_t seq_len, std::size_t batch) {
  FlopModel f;
  f.tokens = static_cast<double>(seq_len) * static_cast<double>(batch);
  const double h = static_cast<double>(p.hidden);
  const double ff = static_cast<double>(p.intermediate);
  f.up_macs = f.tokens * h * ff;
  f.down_dense_macs = f.tokens * ff * h;
  // Two of every four activation operands are zero.
  f.down_sparse_macs = f.down_dense_macs / 2.0;
  f.gemm_ratio = f.down_dense_macs > 0.0 ? f.down_sparse_macs / f.down_dense_macs : 0.5;
  f.gemm_ideal_speedup = 1.0 / f.gemm_ratio;
  const double dense_total = f.up_macs + f.down_dense_macs;
  const double sparse_total = f.up_macs + f.down_sparse_macs;
  f.ffn_ideal_speedup = sparse_total > 0.0 ? dense_total / sparse_total : 1.0;
  return f;
}

std::optional<double> measured_ffn_speedup(const ModelPreset& p, std::size_t seq_len) {
  for (const auto& row : kMeasured) {
    if (p.name != row.preset) continue;
    for (std::size_t i = 0; i < 7; ++i) {
      if (kMeasuredSeq[i] == seq_len) return row.speedup[i];
    }
  }
  return std::nullopt;
}

const std::vector<std::size_t>& reference_batches() {
  static const std::vector<std::size_t> b = {1, 2, 4, 8, 16, 32, 64, 128};
  return b;
}

const std::vector<double>& reference_dense_gb() {
  static const std::vector<double> v = {1.42, 2.84, 5.68, 11.36, 22.71, 45.43, 90.85, 181.71};
  return v;
}

const std::vector<double>& reference_sparse_gb() {
  static const std::vector<double> v = {0.80, 1.59, 3.18, 6.36, 12.72, 25.44, 50.88, 101.76};
  return v;
}

std::string memory_table(const ModelPreset& p, std::size_t seq_len, const std::vector<std::size_t>& batches,
                         TableFormat format) {
  std::vector<std::vector<std::string>> rows(1);
  rows[0].push_back("variant");
  for (auto b : batches) rows[0].push_back("batch_" + std::to_string(b));
  std::vector<std::string> dense{"dense_lowrank_gb"}, sparse{"sparse24_gb"};
  for (auto b : batches) {
    const auto e = ffn_activation_memory(p, b, seq_len);
    dense.push_back(fmt("%.4f", e.dense_gb));
    sparse.push_back(fmt("%.4f", e.sparse_gb));
  }
  rows.push_back(dense);
  rows.push_back(sparse);
  if (has_reference(p, seq_len)) {
    std::vector<std::string> rd{"reference_dense_gb"}, rs{"reference_sparse_gb"};
    for (auto b : batches) {
      const auto d = reference_at(reference_dense_gb(), b);
      const auto s = reference_at(reference_sparse_gb(), b);
      rd.push_back(d ? fmt("%.2f", *d) : "");
      rs.push_back(s ? fmt("%.2f", *s) : "");
    }
    rows.push_back(rd);
    rows.push_back(rs);
  }
  return render(rows, format);
}

std::string ratio_table(const ModelPreset& p, std::size_t seq_len, const std::vector<std::size_t>& batches,
                        TableFormat format) {
  std::vector<std::vector<std::string>> rows{{"batch", "model_ratio"}};
  const bool ref = has_reference(p, seq_len);
  if (ref) rows[0].insert(rows[0].end(), {"reference_ratio", "dense_rel_err", "sparse_rel_err"});
  for (auto b : batches) {
    const auto e = ffn_activation_memory(p, b, seq_len);
    std::vector<std::string> r{std::to_string(b), fmt("%.6f", e.ratio)};
    if (ref) {
      const auto d = reference_at(reference_dense_gb(), b);
      const auto s = reference_at(reference_sparse_gb(), b);
      if (d && s) {
        r.push_back(fmt("%.6f", *s / *d));
        r.push_back(fmt("%.6f", (e.dense_gb - *d) / *d));
        r.push_back(fmt("%.6f", (e.sparse_gb - *s) / *s));
      } else {
        r.insert(r.end(), {"", "", ""});
      }
    }
    rows.push_back(r);
  }
  return render(rows, format);
}

std::string flop_table(const ModelPreset& p, std::size_t seq_len, TableFormat format) {
  const FlopModel f = spmm_flop_model(p, seq_len);
  const auto measured = measured_ffn_speedup(p, seq_len);
  std::vector<std::vector<std::string>> rows{
      {"quantity", "value"},
      {"preset", p.name},
      {"seq_len", std::to_string(seq_len)},
      {"up_macs", fmt("%.6e", f.up_macs)},
      {"down_dense_macs", fmt("%.6e", f.down_dense_macs)},
      {"down_sparse_macs", fmt("%.6e", f.down_sparse_macs)},
      {"sparse_gemm_ratio", fmt("%.6f", f.gemm_ratio)},
      {"sparse_gemm_ideal_speedup", fmt("%.6f", f.gemm_ideal_speedup)},
      {"ffn_ideal_speedup", fmt("%.6f", f.ffn_ideal_speedup)},
      {"measured_ffn_speedup_hw", measured ? fmt("%.2f", *measured) : "n/a"},
  };
  return render(rows, format);
}

std::vector<std::string> emit_tables(const std::string& dir, const ModelPreset& p, std::size_t seq_len,
                                     const std::vector<std::size_t>& batches, TableFormat format) {
  const std::string ext = format == TableFormat::csv ? ".csv" : ".txt";
  const std::pair<const char*, std::string> files[] = {
      {"memory", memory_table(p, seq_len, batches, format)},
      {"ratio", ratio_table(p, seq_len, batches, format)},
      {"flops", flop_table(p, seq_len, format)},
  };
  std::vector<std::string> written;
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create '" + dir + "': " + ec.message());
  }
  for (const auto& [stem, body] : files) {
    const std::string path = (dir.empty() ? std::string(".") : dir) + "/" + stem + ext;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << body;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
    written.push_back(path);
  }
  return written;
}

}  // namespace elas::cost
