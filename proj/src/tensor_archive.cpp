#include "rddm/tensor_archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "rddm/errors.hpp"

namespace rddm {

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

// 22 + 21 + 21 bits, each small enough to be an exact f32 integer
constexpr const char* kBitSuffix[3] = {"~1", "~2", "~3"};
constexpr int kBitShift[3] = {42, 21, 0};
constexpr std::uint64_t kBitMask[3] = {(1ull << 22) - 1, (1ull << 21) - 1, (1ull << 21) - 1};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void get_floats(float* dst, std::size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) {
      throw FormatError(std::string("truncated ") + what, pos_);
    }
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint32_t> dims_of(std::span<const std::size_t> shape) {
  std::vector<std::uint32_t> dims;
  for (auto d : shape) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("dimension too large for archive");
    dims.push_back(static_cast<std::uint32_t>(d));
  }
  return dims;
}

Shape shape_of(const ArchiveEntry& e) { return Shape(e.dims.begin(), e.dims.end()); }

}  // namespace

const ArchiveEntry* TensorArchive::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const ArchiveEntry& TensorArchive::at(std::string_view name) const {
  if (const auto* e = find(name)) return *e;
  throw FormatError("archive has no tensor named '" + std::string(name) + "'", 0);
}

void TensorArchive::add(ArchiveEntry entry) {
  if (entry.name.empty() || entry.name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError("archive tensor names must be 1..65535 bytes");
  }
  if (entry.dims.size() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("archive rank too large");
  std::size_t n = 1;
  for (auto d : entry.dims) n *= d;
  if (n != entry.values.size()) throw DimensionError("archive entry '" + entry.name + "' dims disagree with payload");
  if (find(entry.name)) throw ContractError("duplicate archive tensor '" + entry.name + "'");
  entries.push_back(std::move(entry));
}

void TensorArchive::add_tensor(const std::string& name, const Tensor& t) {
  ArchiveEntry e{name, dims_of(t.shape()), {}};
  e.values.reserve(t.numel());
  for (double v : t.data()) e.values.push_back(static_cast<float>(v));
  add(std::move(e));
}

Tensor TensorArchive::tensor(std::string_view name) const {
  const auto& e = at(name);
  return Tensor::from(shape_of(e), std::vector<double>(e.values.begin(), e.values.end()));
}

void TensorArchive::add_exact(const std::string& name, std::span<const std::size_t> shape,
                              std::span<const double> values) {
  const auto dims = dims_of(shape);
  ArchiveEntry nearest{name, dims, {}};
  std::vector<ArchiveEntry> parts;
  for (const char* suffix : kBitSuffix) parts.push_back({name + suffix, dims, {}});
  for (double v : values) {
    nearest.values.push_back(static_cast<float>(std::clamp<double>(v, std::numeric_limits<float>::lowest(),
                                                                   std::numeric_limits<float>::max())));
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 3; ++k) parts[k].values.push_back(static_cast<float>((bits >> kBitShift[k]) & kBitMask[k]));
  }
  add(std::move(nearest));
  for (auto& p : parts) add(std::move(p));
}

void TensorArchive::add_exact(const std::string& name, const Tensor& t) { add_exact(name, t.shape(), t.data()); }

std::vector<double> TensorArchive::exact_values(std::string_view name) const {
  const auto& head = at(name);
  const ArchiveEntry* parts[3];
  for (int k = 0; k < 3; ++k) {
    parts[k] = &at(std::string(name) + kBitSuffix[k]);
    if (parts[k]->dims != head.dims) {
      throw FormatError("bit tensors of '" + std::string(name) + "' have mismatched dims", 0);
    }
  }
  std::vector<double> out(head.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 3; ++k) {
      const float f = parts[k]->values[i];
      if (!(f >= 0.0f) || f != std::floor(f) || static_cast<std::uint64_t>(f) > kBitMask[k]) {
        throw FormatError("bit tensor '" + parts[k]->name + "' holds an invalid value", 0);
      }
      bits |= static_cast<std::uint64_t>(f) << kBitShift[k];
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

Tensor TensorArchive::exact_tensor(std::string_view name) const {
  return Tensor::from(shape_of(at(name)), exact_values(name));
}

void TensorArchive::add_text(const std::string& name, std::string_view text) {
  ArchiveEntry e{name, {static_cast<std::uint32_t>(std::max<std::size_t>(text.size(), 1))}, {}};
  for (unsigned char c : text) e.values.push_back(static_cast<float>(c));
  // zero-length text is stored as a single NUL so every dim stays positive
  if (text.empty()) e.values.push_back(0.0f);
  add(std::move(e));
}

std::string TensorArchive::text(std::string_view name) const {
  const auto& e = at(name);
  std::string out;
  for (float v : e.values) {
    if (v < 0.0f || v > 255.0f || v != static_cast<float>(static_cast<int>(v))) {
      throw FormatError("text tensor '" + std::string(name) + "' holds a non-byte value", 0);
    }
    if (v != 0.0f) out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
  if (archive.magic.size() != 4) throw ContractError("archive magic must be 4 bytes");
  std::vector<std::uint8_t> out(archive.magic.begin(), archive.magic.end());
  put<std::uint32_t>(out, archive.version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.entries.size()));
  for (const auto& e : archive.entries) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint32_t>(out, d);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(e.values.data());
    out.insert(out.end(), raw, raw + e.values.size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes, std::string_view expected_magic) {
  if (bytes.size() < 16) throw FormatError("file too short for an archive header", bytes.size());
  Reader in(bytes.first(bytes.size() - 4));
  TensorArchive archive;
  archive.magic = in.get_string(4, "magic");
  if (archive.magic != expected_magic) {
    throw FormatError("bad magic '" + archive.magic + "', expected '" + std::string(expected_magic) + "'", 0);
  }
  archive.version = in.get<std::uint32_t>("version");
  if (archive.version != TensorArchive::kVersion) {
    throw FormatError("unsupported format version " + std::to_string(archive.version), 4);
  }

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (stored_crc != crc32_of(bytes.first(bytes.size() - 4))) {
    throw FormatError("CRC32 mismatch (corrupt or truncated file)", bytes.size() - 4);
  }

  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t entry_start = in.pos();
    ArchiveEntry e;
    e.name = in.get_string(in.get<std::uint16_t>("name length"), "name");
    if (e.name.empty()) throw FormatError("empty tensor name", entry_start);
    const auto rank = in.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t at = in.pos();
      e.dims.push_back(in.get<std::uint32_t>("dims"));
      if (e.dims.back() == 0) throw FormatError("zero dimension in '" + e.name + "'", at);
      n *= e.dims.back();
      if (n > bytes.size()) throw FormatError("tensor '" + e.name + "' larger than the file", at);
    }
    e.values.resize(n);
    in.get_floats(e.values.data(), n, "payload");
    if (archive.find(e.name)) throw FormatError("duplicate tensor name '" + e.name + "'", entry_start);
    archive.entries.push_back(std::move(e));
  }
  if (in.pos() != bytes.size() - 4) throw FormatError("trailing bytes after the last tensor", in.pos());
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  const auto bytes = encode_archive(archive);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path, std::string_view expected_magic) {
  return decode_archive(read_file_bytes(path), expected_magic);
}

}  // namespace rddm
