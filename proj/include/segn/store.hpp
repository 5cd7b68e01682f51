#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "segn/container.hpp"
#include "segn/features.hpp"

namespace segn {

inline constexpr std::size_t kDefaultChunkSize = 10000;

struct ChunkInfo {
  io::SectionInfo section;
  std::size_t sample_count = 0;
};

struct StoreHeader {
  std::uint32_t version = io::kFormatVersion;
  FeatureLayout layout;
  std::optional<StandardizationStats> standardization;
  std::string dtype = "f32le";
  std::size_t sequence_length = kSequenceLength;
  std::size_t chunk_size = kDefaultChunkSize;
  std::vector<ChunkInfo> chunks;
  std::vector<std::string> file_ids;
  /// Free-form provenance (epoch date, grid bounds, ...).
  io::json metadata = io::json::object();

  std::size_t total_samples() const;
  std::size_t record_bytes() const;
  io::json to_json() const;
  static StoreHeader from_json(const io::json& j);
};

/// Streaming writer: buffers at most one chunk of samples.
class StoreWriter {
 public:
  StoreWriter(std::filesystem::path path, FeatureLayout layout, std::size_t chunk_size = kDefaultChunkSize,
              io::json metadata = io::json::object(),
              std::optional<StandardizationStats> standardization = std::nullopt);

  /// Throws LayoutMismatch if the sample width differs from the layout.
  void add(const SequenceSample& sample);
  StoreHeader finish();

  std::size_t peak_buffered_samples() const { return peak_buffered_; }

 private:
  void flush();

  io::ContainerWriter writer_;
  StoreHeader header_;
  std::unordered_map<std::string, std::uint32_t> file_index_;
  std::vector<SequenceSample> buffer_;
  std::size_t peak_buffered_ = 0;
  bool finished_ = false;
};

StoreHeader write_store(std::span<const SequenceSample> samples, const std::filesystem::path& path,
                        const FeatureLayout& layout, std::size_t chunk_size = kDefaultChunkSize,
                        io::json metadata = io::json::object());
/// Drains the builder. Adds the cube's epoch_date to metadata unless present.
StoreHeader write_store(SequenceBuilder& builder, const std::filesystem::path& path,
                        std::size_t chunk_size = kDefaultChunkSize, io::json metadata = io::json::object());

enum class Split : std::uint8_t { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  std::uint64_t seed = 0;

  std::size_t count(Split s) const;
  io::json to_json() const;
  static SplitAssignment from_json(const io::json& j);
  void save(const std::filesystem::path& path) const;
  static SplitAssignment load(const std::filesystem::path& path);
};

/// Seeded shuffle of the distinct ids, then floor(0.7n) train, max(1,
/// floor(0.1n)) val and the remainder test. Throws TooFewFiles below 3 ids.
SplitAssignment split_by_file(std::vector<std::string> file_ids, std::uint64_t seed);

class StoreReader {
 public:
  explicit StoreReader(std::filesystem::path path);

  const StoreHeader& header() const { return header_; }
  std::size_t num_chunks() const { return header_.chunks.size(); }

  /// Throws BadIndex or ChecksumError (naming the chunk).
  std::vector<SequenceSample> read_chunk(std::size_t index) const;

  /// Per-file-id membership mask for one split, indexed by the store's file table.
  std::vector<bool> split_mask(const SplitAssignment& split, Split which) const;

  /// Visit chunks in the given order (default ascending), passing only the
  /// samples allowed by mask when one is given. One chunk resident at a time.
  void for_each_chunk(const std::function<void(std::vector<SequenceSample>&)>& fn,
                      const std::vector<bool>* mask = nullptr, std::span<const std::size_t> order = {}) const;

  std::size_t peak_buffered_samples() const { return peak_buffered_; }

  /// Forward iterator over samples, optionally restricted to one split.
  class Stream {
   public:
    std::optional<SequenceSample> next();

   private:
    friend class StoreReader;
    Stream(const StoreReader& reader, std::optional<std::vector<bool>> mask);
    const StoreReader* reader_;
    std::optional<std::vector<bool>> mask_;
    std::vector<SequenceSample> chunk_;
    std::size_t chunk_index_ = 0;
    std::size_t pos_ = 0;
  };

  Stream iterate() const;
  Stream iterate(const SplitAssignment& split, Split which) const;

 private:
  void note_buffered(std::size_t n) const;

  std::vector<SequenceSample> decode_chunk(std::size_t index, const std::vector<bool>* mask) const;

  io::ContainerReader container_;
  StoreHeader header_;
  mutable std::size_t peak_buffered_ = 0;
};

}  // namespace segn
