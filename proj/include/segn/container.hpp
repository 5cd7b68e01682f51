#pragma once

// SEGN container framing shared by cubes, zone series, sequence stores and
// checkpoints:
//
//   offset 0   "SEGN"                    4 bytes
//   offset 4   format version            u32 little-endian
//   offset 8   header length N           u64 little-endian
//   offset 16  UTF-8 JSON header         N bytes
//   offset 16+N payload                  independently DEFLATE-compressed sections
//
// Section offsets recorded in the header are relative to the payload start.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segn/error.hpp"

namespace segn::io {

static_assert(std::endian::native == std::endian::little, "SEGN containers assume a little-endian host");

inline constexpr char kMagic[4] = {'S', 'E', 'G', 'N'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kPreambleBytes = 16;

using json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

struct SectionInfo {
  std::uint64_t offset = 0;
  std::uint64_t compressed_length = 0;
  std::uint64_t raw_length = 0;
  std::uint32_t crc32 = 0;

  json to_json() const;
  static SectionInfo from_json(const json& j);
};

std::uint32_t crc32(std::span<const std::uint8_t> data);
Bytes deflate_bytes(std::span<const std::uint8_t> raw);
/// Throws FormatError when the stream is not valid DEFLATE or inflates to the
/// wrong length.
Bytes inflate_bytes(std::span<const std::uint8_t> compressed, std::uint64_t raw_length);

/// Streams compressed sections into a side file, then writes preamble,
/// header and payload into the final path on finalize().
class ContainerWriter {
 public:
  explicit ContainerWriter(std::filesystem::path path);
  ~ContainerWriter();
  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  SectionInfo add_section(std::span<const std::uint8_t> raw);
  void finalize(const json& header);

 private:
  std::filesystem::path path_;
  std::filesystem::path part_path_;
  std::ofstream part_;
  std::uint64_t payload_bytes_ = 0;
  bool finalized_ = false;
};

class ContainerReader {
 public:
  explicit ContainerReader(std::filesystem::path path);

  const json& header() const { return header_; }
  std::uint32_t version() const { return version_; }
  std::uint64_t payload_start() const { return payload_start_; }
  std::uint64_t file_size() const { return file_size_; }
  const std::filesystem::path& path() const { return path_; }

  /// Reads, inflates and CRC-checks a section. label names the section in
  /// ChecksumError messages.
  Bytes read_section(const SectionInfo& info, const std::string& label) const;

 private:
  std::filesystem::path path_;
  json header_;
  std::uint32_t version_ = 0;
  std::uint64_t payload_start_ = 0;
  std::uint64_t file_size_ = 0;
};

/// Header "kind" field, or empty when absent.
std::string container_kind(const json& header);

// Little-endian packing helpers.
inline void put_f32(Bytes& out, float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_i32(Bytes& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
inline float get_f32(const std::uint8_t* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::int32_t get_i32(const std::uint8_t* p) { return static_cast<std::int32_t>(get_u32(p)); }

/// Row-major bit packing, least significant bit first within each byte.
Bytes pack_bits(std::span<const std::uint8_t> flags);
std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count);

}  // namespace segn::io
