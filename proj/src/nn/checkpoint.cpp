#include "segn/nn/checkpoint.hpp"

#include <unordered_map>

namespace segn::nn {

void save_parameters(const std::filesystem::path& path, const ParameterList<float>& params, io::json extra) {
  io::Bytes raw;
  raw.reserve(count_parameters(params) * 4);
  io::json table = io::json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    table.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    for (float v : p->value.values()) io::put_f32(raw, v);
    offset += p->size();
  }
  io::ContainerWriter writer(path);
  const auto info = writer.add_section(raw);
  io::json header = extra.is_object() ? std::move(extra) : io::json::object();
  header["kind"] = "checkpoint";
  header["dtype"] = "f32le";
  header["param_count"] = offset;
  header["params"] = std::move(table);
  header["section"] = info.to_json();
  writer.finalize(header);
}

io::json read_checkpoint_header(const std::filesystem::path& path) {
  io::ContainerReader reader(path);
  if (io::container_kind(reader.header()) != "checkpoint") {
    throw Error(ErrorKind::FormatError, path.string() + ": not a checkpoint (kind \"" +
                                            io::container_kind(reader.header()) + "\")");
  }
  return reader.header();
}

io::json load_parameters(const std::filesystem::path& path, const ParameterList<float>& params) {
  io::ContainerReader reader(path);
  const auto& h = reader.header();
  if (io::container_kind(h) != "checkpoint") {
    throw Error(ErrorKind::FormatError, path.string() + ": not a checkpoint (kind \"" + io::container_kind(h) + "\")");
  }
  struct Entry {
    std::vector<std::size_t> shape;
    std::size_t offset;
  };
  std::unordered_map<std::string, Entry> table;
  io::SectionInfo section;
  std::size_t total = 0;
  try {
    for (const auto& e : h.at("params")) {
      table[e.at("name").get<std::string>()] = {e.at("shape").get<std::vector<std::size_t>>(),
                                                e.at("offset").get<std::size_t>()};
    }
    section = io::SectionInfo::from_json(h.at("section"));
    total = h.at("param_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": malformed checkpoint header: " + e.what());
  }
  if (table.size() != params.size()) {
    throw Error(ErrorKind::LayoutMismatch, "checkpoint holds " + std::to_string(table.size()) +
                                               " parameters, model has " + std::to_string(params.size()));
  }
  if (section.raw_length != total * 4) throw Error(ErrorKind::FormatError, "checkpoint payload length disagrees");
  const io::Bytes raw = reader.read_section(section, "parameters");
  for (auto* p : params) {
    auto it = table.find(p->name);
    if (it == table.end()) throw Error(ErrorKind::LayoutMismatch, "checkpoint lacks parameter " + p->name);
    if (it->second.shape != p->value.shape()) {
      throw Error(ErrorKind::LayoutMismatch, "parameter " + p->name + " has shape " + shape_string(it->second.shape) +
                                                 " in checkpoint, " + shape_string(p->value.shape()) + " in model");
    }
    if (it->second.offset + p->size() > total) throw Error(ErrorKind::FormatError, "parameter " + p->name + " out of range");
    const std::uint8_t* src = raw.data() + it->second.offset * 4;
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = io::get_f32(src + 4 * i);
  }
  return h;
}

}  // namespace segn::nn
