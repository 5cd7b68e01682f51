#include "segn/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "segn/rng.hpp"

namespace segn {

using io::json;

std::size_t StoreHeader::total_samples() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c.sample_count;
  return n;
}

std::size_t StoreHeader::record_bytes() const { return sequence_length * layout.total() * 4 + 1 + 4 + 4 + 4 + 4; }

json StoreHeader::to_json() const {
  json chunk_list = json::array();
  for (const auto& c : chunks) {
    json e = c.section.to_json();
    e["sample_count"] = c.sample_count;
    chunk_list.push_back(e);
  }
  return {{"kind", "store"},
          {"version", version},
          {"layout", layout.to_json()},
          {"standardization", standardization ? standardization->to_json() : json(nullptr)},
          {"dtype", dtype},
          {"sequence_length", sequence_length},
          {"chunk_size", chunk_size},
          {"total_samples", total_samples()},
          {"record_layout", "features f32le[seq*D], label u8, lat f32le, lon f32le, week_start_day i32le, file_index u32le"},
          {"chunks", chunk_list},
          {"file_ids", file_ids},
          {"metadata", metadata}};
}

StoreHeader StoreHeader::from_json(const json& j) {
  StoreHeader h;
  try {
    if (j.at("kind").get<std::string>() != "store") throw Error(ErrorKind::FormatError, "container is not a sequence store");
    h.version = j.at("version").get<std::uint32_t>();
    h.layout = FeatureLayout::from_json(j.at("layout"));
    if (!j.at("standardization").is_null()) h.standardization = StandardizationStats::from_json(j.at("standardization"));
    h.dtype = j.at("dtype").get<std::string>();
    if (h.dtype != "f32le") throw Error(ErrorKind::FormatError, "unsupported store dtype '" + h.dtype + "'");
    h.sequence_length = j.at("sequence_length").get<std::size_t>();
    h.chunk_size = j.at("chunk_size").get<std::size_t>();
    for (const auto& c : j.at("chunks")) {
      h.chunks.push_back({io::SectionInfo::from_json(c), c.at("sample_count").get<std::size_t>()});
    }
    h.file_ids = j.at("file_ids").get<std::vector<std::string>>();
    h.metadata = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad store header: ") + e.what());
  }
  return h;
}

// ---------------------------------------------------------------------------

StoreWriter::StoreWriter(std::filesystem::path path, FeatureLayout layout, std::size_t chunk_size, json metadata,
                         std::optional<StandardizationStats> standardization)
    : writer_(std::move(path)) {
  if (chunk_size == 0) throw Error(ErrorKind::BadConfig, "chunk size must be positive");
  header_.layout = std::move(layout);
  header_.chunk_size = chunk_size;
  header_.metadata = std::move(metadata);
  header_.standardization = std::move(standardization);
  buffer_.reserve(std::min<std::size_t>(chunk_size, 1 << 16));
}

void StoreWriter::add(const SequenceSample& sample) {
  if (sample.features.size() != header_.sequence_length * header_.layout.total()) {
    throw Error(ErrorKind::LayoutMismatch, "sample has " + std::to_string(sample.features.size()) +
                                               " values, layout expects " +
                                               std::to_string(header_.sequence_length * header_.layout.total()));
  }
  if (sample.label > 1) throw Error(ErrorKind::BadLabel, "sample label must be 0 or 1");
  buffer_.push_back(sample);
  peak_buffered_ = std::max(peak_buffered_, buffer_.size());
  if (buffer_.size() == header_.chunk_size) flush();
}

void StoreWriter::flush() {
  if (buffer_.empty()) return;
  io::Bytes raw;
  raw.reserve(buffer_.size() * header_.record_bytes());
  for (const auto& s : buffer_) {
    auto [it, inserted] = file_index_.try_emplace(s.source_file_id, static_cast<std::uint32_t>(header_.file_ids.size()));
    if (inserted) header_.file_ids.push_back(s.source_file_id);
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(s.features.data());
    raw.insert(raw.end(), bytes, bytes + s.features.size() * 4);
    raw.push_back(s.label);
    io::put_f32(raw, s.lat);
    io::put_f32(raw, s.lon);
    io::put_i32(raw, s.week_start_day);
    io::put_u32(raw, it->second);
  }
  header_.chunks.push_back({writer_.add_section(raw), buffer_.size()});
  buffer_.clear();
}

StoreHeader StoreWriter::finish() {
  if (finished_) return header_;
  flush();
  writer_.finalize(header_.to_json());
  finished_ = true;
  return header_;
}

StoreHeader write_store(std::span<const SequenceSample> samples, const std::filesystem::path& path,
                        const FeatureLayout& layout, std::size_t chunk_size, json metadata) {
  StoreWriter w(path, layout, chunk_size, std::move(metadata));
  for (const auto& s : samples) w.add(s);
  return w.finish();
}

StoreHeader write_store(SequenceBuilder& builder, const std::filesystem::path& path, std::size_t chunk_size,
                        json metadata) {
  if (!metadata.is_object()) metadata = json::object();
  if (!metadata.contains("epoch_date")) metadata["epoch_date"] = format_date(builder.context().epoch());
  StoreWriter w(path, builder.layout(), chunk_size, std::move(metadata));
  while (auto s = builder.next()) w.add(*s);
  return w.finish();
}

// ---------------------------------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::FormatError, "unknown split '" + std::string(s) + "'");
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [&](const auto& kv) { return kv.second == s; }));
}

json SplitAssignment::to_json() const {
  json a = json::object();
  for (const auto& [id, s] : assignment) a[id] = split_name(s);
  return {{"kind", "split"},
          {"seed", seed},
          {"counts", {{"train", count(Split::Train)}, {"val", count(Split::Val)}, {"test", count(Split::Test)}}},
          {"assignment", a}};
}

SplitAssignment SplitAssignment::from_json(const json& j) {
  SplitAssignment s;
  try {
    if (j.value("kind", std::string()) != "split") throw Error(ErrorKind::FormatError, "not a split assignment file");
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [id, v] : j.at("assignment").items()) s.assignment[id] = parse_split(v.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad split file: ") + e.what());
  }
  return s;
}

void SplitAssignment::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

SplitAssignment SplitAssignment::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::FormatError, "malformed split file " + path.string() + " at byte " +
                                            std::to_string(e.byte) + ": " + e.what());
  }
}

SplitAssignment split_by_file(std::vector<std::string> file_ids, std::uint64_t seed) {
  std::sort(file_ids.begin(), file_ids.end());
  file_ids.erase(std::unique(file_ids.begin(), file_ids.end()), file_ids.end());
  const std::size_t n = file_ids.size();
  if (n < 3) throw Error(ErrorKind::TooFewFiles, "split needs at least 3 distinct file ids, got " + std::to_string(n));
  Rng rng(seed);
  rng.shuffle(file_ids.begin(), file_ids.end());
  const std::size_t n_val = std::max<std::size_t>(1, n / 10);
  const std::size_t n_train = std::min(n * 7 / 10, n - n_val - 1);
  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    out.assignment[file_ids[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
  }
  return out;
}

// ---------------------------------------------------------------------------

StoreReader::StoreReader(std::filesystem::path path)
    : container_(std::move(path)), header_(StoreHeader::from_json(container_.header())) {
  header_.version = container_.version();
  for (const auto& c : header_.chunks) {
    if (c.section.raw_length != c.sample_count * header_.record_bytes()) {
      throw Error(ErrorKind::FormatError, "chunk length does not match its sample count");
    }
  }
}

void StoreReader::note_buffered(std::size_t n) const { peak_buffered_ = std::max(peak_buffered_, n); }

std::vector<SequenceSample> StoreReader::decode_chunk(std::size_t index, const std::vector<bool>* mask) const {
  if (index >= header_.chunks.size()) {
    throw Error(ErrorKind::BadIndex, "chunk " + std::to_string(index) + " out of range (store has " +
                                         std::to_string(header_.chunks.size()) + ")");
  }
  const auto& info = header_.chunks[index];
  const io::Bytes raw = container_.read_section(info.section, "chunk " + std::to_string(index));
  const std::size_t D = header_.layout.total(), values = header_.sequence_length * D;
  const std::size_t rec = header_.record_bytes();
  std::vector<SequenceSample> out;
  out.reserve(info.sample_count);
  for (std::size_t k = 0; k < info.sample_count; ++k) {
    const std::uint8_t* p = raw.data() + k * rec;
    const std::uint32_t file = io::get_u32(p + values * 4 + 13);
    if (file >= header_.file_ids.size()) {
      throw Error(ErrorKind::FormatError, "chunk " + std::to_string(index) + " references unknown file id");
    }
    if (mask && !(*mask)[file]) continue;
    SequenceSample s;
    s.features.resize(values);
    std::memcpy(s.features.data(), p, values * 4);
    p += values * 4;
    s.label = p[0];
    s.lat = io::get_f32(p + 1);
    s.lon = io::get_f32(p + 5);
    s.week_start_day = io::get_i32(p + 9);
    s.source_file_id = header_.file_ids[file];
    out.push_back(std::move(s));
  }
  note_buffered(out.size());
  return out;
}

std::vector<SequenceSample> StoreReader::read_chunk(std::size_t index) const { return decode_chunk(index, nullptr); }

std::vector<bool> StoreReader::split_mask(const SplitAssignment& split, Split which) const {
  std::vector<bool> mask(header_.file_ids.size(), false);
  for (std::size_t i = 0; i < header_.file_ids.size(); ++i) {
    auto it = split.assignment.find(header_.file_ids[i]);
    if (it == split.assignment.end()) {
      throw Error(ErrorKind::LayoutMismatch, "file id '" + header_.file_ids[i] + "' missing from split assignment");
    }
    mask[i] = it->second == which;
  }
  return mask;
}

void StoreReader::for_each_chunk(const std::function<void(std::vector<SequenceSample>&)>& fn,
                                 const std::vector<bool>* mask, std::span<const std::size_t> order) const {
  const std::size_t n = order.empty() ? header_.chunks.size() : order.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto samples = decode_chunk(order.empty() ? i : order[i], mask);
    fn(samples);
  }
}

StoreReader::Stream::Stream(const StoreReader& reader, std::optional<std::vector<bool>> mask)
    : reader_(&reader), mask_(std::move(mask)) {}

std::optional<SequenceSample> StoreReader::Stream::next() {
  while (pos_ >= chunk_.size()) {
    if (chunk_index_ >= reader_->num_chunks()) return std::nullopt;
    chunk_.clear();
    chunk_.shrink_to_fit();
    chunk_ = reader_->decode_chunk(chunk_index_++, mask_ ? &*mask_ : nullptr);
    pos_ = 0;
  }
  return std::move(chunk_[pos_++]);
}

StoreReader::Stream StoreReader::iterate() const { return Stream(*this, std::nullopt); }

StoreReader::Stream StoreReader::iterate(const SplitAssignment& split, Split which) const {
  return Stream(*this, split_mask(split, which));
}

}  // namespace segn
