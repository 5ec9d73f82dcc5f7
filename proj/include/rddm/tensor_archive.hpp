#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

/// Binary named-tensor table shared by checkpoints ("RDDM") and image
/// datasets ("RDDI"). Little-endian layout:
///
///   magic[4] | version u32 | count u32
///   count x { name_len u16 | name (UTF-8) | rank u8 | dims u32 x rank | f32 x prod(dims) }
///   crc32 u32 over every preceding byte
struct ArchiveEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct TensorArchive {
  static constexpr std::uint32_t kVersion = 1;

  std::string magic;  // exactly 4 bytes
  std::uint32_t version = kVersion;
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(std::string_view name) const;
  const ArchiveEntry& at(std::string_view name) const;
  void add(ArchiveEntry entry);

  /// Stores f32-rounded values under `name`.
  void add_tensor(const std::string& name, const Tensor& t);
  /// Rebuilds a double tensor from `name`.
  Tensor tensor(std::string_view name) const;

  /// Stores doubles losslessly: `name` holds the nearest float (saturated to
  /// the f32 range) and `name~1..3` the 64-bit pattern as 22/21/21-bit
  /// integers. Readers that only want single precision can ignore the parts.
  void add_exact(const std::string& name, std::span<const std::size_t> shape, std::span<const double> values);
  void add_exact(const std::string& name, const Tensor& t);
  std::vector<double> exact_values(std::string_view name) const;
  Tensor exact_tensor(std::string_view name) const;

  /// UTF-8 text stored as a rank-1 tensor of byte values.
  void add_text(const std::string& name, std::string_view text);
  std::string text(std::string_view name) const;
};

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
/// Throws FormatError (with the failing byte offset) on bad magic, version,
/// CRC, truncation or trailing bytes.
TensorArchive decode_archive(std::span<const std::uint8_t> bytes, std::string_view expected_magic);

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path, std::string_view expected_magic);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace rddm
