#include "segn/container.hpp"

#include <zlib.h>

#include <array>

namespace segn::io {

json SectionInfo::to_json() const {
  return {{"offset", offset}, {"compressed_length", compressed_length}, {"raw_length", raw_length}, {"crc32", crc32}};
}

SectionInfo SectionInfo::from_json(const json& j) {
  try {
    SectionInfo s;
    s.offset = j.at("offset").get<std::uint64_t>();
    s.compressed_length = j.at("compressed_length").get<std::uint64_t>();
    s.raw_length = j.at("raw_length").get<std::uint64_t>();
    s.crc32 = j.at("crc32").get<std::uint32_t>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad section entry in header: ") + e.what());
  }
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
    crc = ::crc32(crc, data.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

Bytes deflate_bytes(std::span<const std::uint8_t> raw) {
  z_stream zs{};
  if (deflateInit(&zs, Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw Error(ErrorKind::IoError, "deflateInit failed");
  }
  Bytes out(deflateBound(&zs, static_cast<uLong>(raw.size())));
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::IoError, "deflate failed");
  out.resize(produced);
  return out;
}

Bytes inflate_bytes(std::span<const std::uint8_t> compressed, std::uint64_t raw_length) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error(ErrorKind::IoError, "inflateInit failed");
  Bytes out(raw_length);
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != raw_length) {
    throw Error(ErrorKind::FormatError, "corrupt DEFLATE stream");
  }
  return out;
}

ContainerWriter::ContainerWriter(std::filesystem::path path)
    : path_(std::move(path)), part_path_(path_.string() + ".part") {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  part_.open(part_path_, std::ios::binary | std::ios::trunc);
  if (!part_) throw Error(ErrorKind::IoError, "cannot open " + part_path_.string() + " for writing");
}

ContainerWriter::~ContainerWriter() {
  if (!finalized_) {
    part_.close();
    std::error_code ec;
    std::filesystem::remove(part_path_, ec);
  }
}

SectionInfo ContainerWriter::add_section(std::span<const std::uint8_t> raw) {
  SectionInfo info;
  info.offset = payload_bytes_;
  info.raw_length = raw.size();
  info.crc32 = crc32(raw);
  const Bytes packed = deflate_bytes(raw);
  info.compressed_length = packed.size();
  part_.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!part_) throw Error(ErrorKind::IoError, "write failed on " + part_path_.string());
  payload_bytes_ += packed.size();
  return info;
}

void ContainerWriter::finalize(const json& header) {
  part_.close();
  const std::string text = header.dump();
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path_.string() + " for writing");
  Bytes pre;
  pre.insert(pre.end(), kMagic, kMagic + 4);
  put_u32(pre, kFormatVersion);
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int i = 0; i < 8; ++i) pre.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.write(reinterpret_cast<const char*>(pre.data()), static_cast<std::streamsize>(pre.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::ifstream in(part_path_, std::ios::binary);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    out.write(buf.data(), in.gcount());
  }
  out.close();
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path_.string());
  in.close();
  std::filesystem::remove(part_path_);
  finalized_ = true;
}

ContainerReader::ContainerReader(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path_.string());
  file_size_ = std::filesystem::file_size(path_);
  std::uint8_t pre[kPreambleBytes];
  in.read(reinterpret_cast<char*>(pre), kPreambleBytes);
  if (in.gcount() < static_cast<std::streamsize>(kPreambleBytes)) {
    throw Error(ErrorKind::FormatError,
                "truncated preamble at byte " + std::to_string(in.gcount()) + " of " + path_.string());
  }
  if (std::memcmp(pre, kMagic, 4) != 0) {
    throw Error(ErrorKind::FormatError, "bad magic at byte 0 of " + path_.string());
  }
  version_ = get_u32(pre + 4);
  if (version_ != kFormatVersion) {
    throw Error(ErrorKind::FormatError, "unsupported format version " + std::to_string(version_) +
                                            " at byte 4 (supported: " + std::to_string(kFormatVersion) + ")");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(pre[8 + i]) << (8 * i);
  if (len > file_size_ - kPreambleBytes) {
    throw Error(ErrorKind::FormatError, "header of " + std::to_string(len) + " bytes truncated at byte " +
                                            std::to_string(file_size_));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  try {
    header_ = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, "malformed JSON header at byte 16: " + std::string(e.what()));
  }
  payload_start_ = kPreambleBytes + len;
}

Bytes ContainerReader::read_section(const SectionInfo& info, const std::string& label) const {
  const std::uint64_t begin = payload_start_ + info.offset;
  if (begin + info.compressed_length > file_size_) {
    throw Error(ErrorKind::FormatError, label + " extends past end of file: bytes " + std::to_string(begin) + ".." +
                                            std::to_string(begin + info.compressed_length) + " of " +
                                            std::to_string(file_size_));
  }
  std::ifstream in(path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(begin));
  Bytes packed(info.compressed_length);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (in.gcount() != static_cast<std::streamsize>(packed.size())) {
    throw Error(ErrorKind::FormatError, label + " truncated at byte " + std::to_string(begin + in.gcount()));
  }
  Bytes raw;
  try {
    raw = inflate_bytes(packed, info.raw_length);
  } catch (const Error&) {
    throw Error(ErrorKind::ChecksumError, label + " failed to decompress (byte offset " + std::to_string(begin) + ")");
  }
  if (crc32(raw) != info.crc32) {
    throw Error(ErrorKind::ChecksumError, label + " CRC32 mismatch (byte offset " + std::to_string(begin) + ")");
  }
  return raw;
}

std::string container_kind(const json& header) {
  if (header.is_object() && header.contains("kind") && header["kind"].is_string()) {
    return header["kind"].get<std::string>();
  }
  return {};
}

Bytes pack_bits(std::span<const std::uint8_t> flags) {
  Bytes out((flags.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count) {
  if (packed.size() * 8 < count) throw Error(ErrorKind::FormatError, "bit-packed mask too short");
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return out;
}

}  // namespace segn::io
