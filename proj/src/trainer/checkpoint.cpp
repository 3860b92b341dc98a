#include "elas/trainer/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "elas/numerics/byteio.hpp"

namespace elas {

namespace {

constexpr char kMagic[4] = {'E', 'L', 'A', 'S'};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::size_t element_bytes(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64:
    case DType::i64: return 8;
    case DType::text: return 1;
    case DType::packed24: return 0;
  }
  return 0;
}

}  // namespace

void Checkpoint::put(CheckpointRecord record) {
  for (auto& r : records_) {
    if (r.name == record.name) {
      r = std::move(record);
      return;
    }
  }
  records_.push_back(std::move(record));
}

void Checkpoint::put_matrix(const std::string& name, const Matrix& m) {
  ByteWriter w;
  for (float v : m.values()) w.f32(v);
  put({name, DType::f32, {m.rows(), m.cols()}, w.take()});
}

void Checkpoint::put_f64(const std::string& name, const std::vector<double>& values) {
  ByteWriter w;
  for (double v : values) w.f64(v);
  put({name, DType::f64, {values.size()}, w.take()});
}

void Checkpoint::put_i64(const std::string& name, const std::vector<std::int64_t>& values) {
  ByteWriter w;
  for (auto v : values) w.i64(v);
  put({name, DType::i64, {values.size()}, w.take()});
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  put({name, DType::text, {text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())});
}

void Checkpoint::put_packed(const std::string& name, const Packed24<float>& p) {
  put({name, DType::packed24, {p.rows, p.cols}, serialize_packed(p)});
}

bool Checkpoint::contains(const std::string& name) const noexcept {
  for (const auto& r : records_) {
    if (r.name == name) return true;
  }
  return false;
}

const CheckpointRecord& Checkpoint::find(const std::string& name, DType dtype) const {
  for (const auto& r : records_) {
    if (r.name != name) continue;
    if (r.dtype != dtype) throw FormatError("checkpoint record '" + name + "' has an unexpected dtype");
    return r;
  }
  throw FormatError("checkpoint has no record '" + name + "'");
}

Matrix Checkpoint::matrix(const std::string& name) const {
  const auto& r = find(name, DType::f32);
  if (r.dims.size() != 2) throw FormatError("checkpoint record '" + name + "' is not a matrix");
  ByteReader in(r.payload);
  Matrix m(r.dims[0], r.dims[1]);
  for (auto& v : m.values()) v = in.f32();
  return m;
}

std::vector<double> Checkpoint::f64(const std::string& name) const {
  const auto& r = find(name, DType::f64);
  ByteReader in(r.payload);
  std::vector<double> out(r.payload.size() / 8);
  for (auto& v : out) v = in.f64();
  return out;
}

std::vector<std::int64_t> Checkpoint::i64(const std::string& name) const {
  const auto& r = find(name, DType::i64);
  ByteReader in(r.payload);
  std::vector<std::int64_t> out(r.payload.size() / 8);
  for (auto& v : out) v = in.i64();
  return out;
}

std::string Checkpoint::text(const std::string& name) const {
  const auto& r = find(name, DType::text);
  return std::string(r.payload.begin(), r.payload.end());
}

Packed24<float> Checkpoint::packed(const std::string& name) const {
  return deserialize_packed(find(name, DType::packed24).payload);
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u64(records_.size());
  for (const auto& r : records_) {
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.text(r.name);
    w.u8(static_cast<std::uint8_t>(r.dtype));
    w.u32(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) w.u64(d);
    w.u64(r.payload.size());
    w.raw(r.payload);
  }
  const auto& body = w.bytes();
  w.u32(crc32_of(body.data(), body.size()));
  return w.take();
}

Checkpoint Checkpoint::decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 4) throw FormatError("checkpoint truncated: header incomplete");
  for (int i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) throw FormatError("not a checkpoint: bad magic");
  }
  ByteReader in(bytes);
  in.raw(4);
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t body = bytes.size() - 4;
  ByteReader tail(std::span<const std::uint8_t>(bytes).subspan(body));
  const std::uint32_t stored = tail.u32();
  if (stored != crc32_of(bytes.data(), body)) throw FormatError("checkpoint CRC mismatch (corrupt or truncated)");

  ByteReader rd(std::span<const std::uint8_t>(bytes).first(body));
  rd.raw(8);
  const std::uint64_t count = rd.u64();
  Checkpoint out;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = rd.text(rd.u32());
    const std::uint8_t tag = rd.u8();
    if (tag > static_cast<std::uint8_t>(DType::packed24)) {
      throw FormatError("checkpoint record '" + r.name + "' has unknown dtype " + std::to_string(tag));
    }
    r.dtype = static_cast<DType>(tag);
    const std::uint32_t ndim = rd.u32();
    if (ndim > 8) throw FormatError("checkpoint record '" + r.name + "' has too many dims");
    for (std::uint32_t d = 0; d < ndim; ++d) r.dims.push_back(rd.u64());
    const std::uint64_t len = rd.u64();
    const auto payload = rd.raw(len);
    r.payload.assign(payload.begin(), payload.end());
    if (const auto eb = element_bytes(r.dtype); eb != 0 && len != element_count(r.dims) * eb) {
      throw FormatError("checkpoint record '" + r.name + "' payload does not match its dims");
    }
    if (r.dtype == DType::packed24) deserialize_packed(r.payload);  // validates
    out.records_.push_back(std::move(r));
  }
  if (rd.remaining() != 0) throw FormatError("checkpoint has trailing bytes after its records");
  return out;
}

void Checkpoint::save(const std::string& path) const {
  const auto bytes = encode();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace elas
