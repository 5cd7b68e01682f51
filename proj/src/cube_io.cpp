#include "segn/cube_io.hpp"

namespace segn {

namespace {

using io::Bytes;
using io::json;

void expect_kind(const io::ContainerReader& reader, const char* kind) {
  const auto k = io::container_kind(reader.header());
  if (k != kind) {
    throw Error(ErrorKind::FormatError, reader.path().string() + " holds '" + k + "', expected '" + kind + "'");
  }
}

template <typename F>
auto header_field(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("malformed header at byte 16: ") + e.what());
  }
}

}  // namespace

json grid_to_json(const GeoGrid& grid) {
  return {{"lat", grid.lat_axis()}, {"lon", grid.lon_axis()}};
}

GeoGrid grid_from_json(const json& j) {
  return header_field([&] {
    return GeoGrid(j.at("lat").get<std::vector<double>>(), j.at("lon").get<std::vector<double>>());
  });
}

void save_cube(const EnvironmentalCube& cube, const std::filesystem::path& path) {
  cube.validate();
  const std::size_t cells = cube.grid.cells();
  const std::size_t days = cube.num_days();
  io::ContainerWriter writer(path);
  json sections = json::array();
  for (auto v : kAllVariables) {
    Bytes values;
    values.reserve(days * cells * 4);
    std::vector<std::uint8_t> flags;
    flags.reserve(days * cells);
    for (std::size_t t = 0; t < days; ++t) {
      const auto& f = cube.field(v, t);
      for (float x : f.values.data) io::put_f32(values, x);
      flags.insert(flags.end(), f.valid.data.begin(), f.valid.data.end());
    }
    json vs = writer.add_section(values).to_json();
    vs["variable"] = variable_name(v);
    vs["content"] = "values";
    sections.push_back(vs);
    json ms = writer.add_section(io::pack_bits(flags)).to_json();
    ms["variable"] = variable_name(v);
    ms["content"] = "mask";
    sections.push_back(ms);
  }
  json variables = json::array();
  for (auto v : kAllVariables) variables.push_back(variable_name(v));
  json header = {{"kind", "cube"},
                 {"grid", grid_to_json(cube.grid)},
                 {"epoch_date", format_date(cube.epoch)},
                 {"first_day", days ? cube.days.front() : 0},
                 {"num_days", days},
                 {"variables", variables},
                 {"dtype", "f32le"},
                 {"mask_encoding", "bitpacked-lsb-row-major"},
                 {"sections", sections}};
  writer.finalize(header);
}

EnvironmentalCube load_cube(const std::filesystem::path& path) {
  io::ContainerReader reader(path);
  expect_kind(reader, "cube");
  const json& h = reader.header();
  EnvironmentalCube cube;
  cube.grid = header_field([&] { return grid_from_json(h.at("grid")); });
  cube.epoch = parse_date(header_field([&] { return h.at("epoch_date").get<std::string>(); }));
  const int first = header_field([&] { return h.at("first_day").get<int>(); });
  const auto days = header_field([&] { return h.at("num_days").get<std::size_t>(); });
  if (header_field([&] { return h.at("dtype").get<std::string>(); }) != "f32le") {
    throw Error(ErrorKind::FormatError, "unsupported dtype in " + path.string());
  }
  const std::size_t rows = cube.grid.rows(), cols = cube.grid.cols(), cells = rows * cols;
  cube.days.resize(days);
  for (std::size_t t = 0; t < days; ++t) cube.days[t] = first + static_cast<int>(t);
  cube.fields.resize(days * kNumVariables);
  for (std::size_t t = 0; t < days; ++t) {
    for (auto v : kAllVariables) {
      auto& f = cube.field(v, t);
      f.variable = v;
      f.day = cube.days[t];
      f.values = Raster<float>(rows, cols);
      f.valid = Mask(rows, cols);
    }
  }
  const auto& sections = header_field([&]() -> const json& { return h.at("sections"); });
  for (const auto& s : sections) {
    const auto var = parse_variable(header_field([&] { return s.at("variable").get<std::string>(); }));
    const auto content = header_field([&] { return s.at("content").get<std::string>(); });
    const auto info = io::SectionInfo::from_json(s);
    const Bytes raw = reader.read_section(info, std::string(variable_name(var)) + " " + content);
    if (content == "values") {
      if (raw.size() != days * cells * 4) throw Error(ErrorKind::FormatError, "values section has wrong length");
      for (std::size_t t = 0; t < days; ++t) {
        auto& vals = cube.field(var, t).values.data;
        for (std::size_t i = 0; i < cells; ++i) vals[i] = io::get_f32(raw.data() + 4 * (t * cells + i));
      }
    } else if (content == "mask") {
      const auto flags = io::unpack_bits(raw, days * cells);
      for (std::size_t t = 0; t < days; ++t) {
        auto& m = cube.field(var, t).valid.data;
        std::copy(flags.begin() + static_cast<std::ptrdiff_t>(t * cells),
                  flags.begin() + static_cast<std::ptrdiff_t>((t + 1) * cells), m.begin());
      }
    } else {
      throw Error(ErrorKind::FormatError, "unknown section content '" + content + "'");
    }
  }
  cube.validate();
  return cube;
}

void save_zones(const ActiveZoneSeries& zones, const std::filesystem::path& path) {
  zones.validate();
  io::ContainerWriter writer(path);
  std::vector<std::uint8_t> labels, valid;
  for (std::size_t w = 0; w < zones.num_weeks(); ++w) {
    labels.insert(labels.end(), zones.labels[w].data.begin(), zones.labels[w].data.end());
    valid.insert(valid.end(), zones.valid[w].data.begin(), zones.valid[w].data.end());
  }
  json ls = writer.add_section(io::pack_bits(labels)).to_json();
  json vs = writer.add_section(io::pack_bits(valid)).to_json();
  json header = {{"kind", "zones"},
                 {"grid", grid_to_json(zones.grid)},
                 {"week_starts", zones.week_starts},
                 {"mask_encoding", "bitpacked-lsb-row-major"},
                 {"labels", ls},
                 {"valid", vs}};
  writer.finalize(header);
}

ActiveZoneSeries load_zones(const std::filesystem::path& path) {
  io::ContainerReader reader(path);
  expect_kind(reader, "zones");
  const json& h = reader.header();
  ActiveZoneSeries zones;
  zones.grid = header_field([&] { return grid_from_json(h.at("grid")); });
  zones.week_starts = header_field([&] { return h.at("week_starts").get<std::vector<int>>(); });
  const std::size_t rows = zones.grid.rows(), cols = zones.grid.cols(), cells = rows * cols;
  const std::size_t weeks = zones.week_starts.size();
  const auto labels = io::unpack_bits(
      reader.read_section(io::SectionInfo::from_json(header_field([&] { return h.at("labels"); })), "labels"),
      weeks * cells);
  const auto valid = io::unpack_bits(
      reader.read_section(io::SectionInfo::from_json(header_field([&] { return h.at("valid"); })), "valid"),
      weeks * cells);
  for (std::size_t w = 0; w < weeks; ++w) {
    Mask l(rows, cols), v(rows, cols);
    std::copy_n(labels.begin() + static_cast<std::ptrdiff_t>(w * cells), cells, l.data.begin());
    std::copy_n(valid.begin() + static_cast<std::ptrdiff_t>(w * cells), cells, v.data.begin());
    zones.labels.push_back(std::move(l));
    zones.valid.push_back(std::move(v));
  }
  zones.validate();
  return zones;
}

}  // namespace segn
