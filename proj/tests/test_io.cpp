#include <doctest.h>

#include <fstream>

#include "segn/cube_io.hpp"
#include "segn/synth.hpp"
#include "support/expect.hpp"
#include "support/temp_dir.hpp"

using namespace segn;
using segn::testing::TempDir;

namespace {

SynthConfig tiny_config() {
  SynthConfig c;
  c.rows = 5;
  c.cols = 6;
  c.days = 28;
  return c;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("crc32 and deflate") {
  const std::string s = "123456789";
  CHECK(io::crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
  io::Bytes raw(5000);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>((i * 7) % 13);
  const auto z = io::deflate_bytes(raw);
  CHECK(z.size() < raw.size());
  CHECK(io::inflate_bytes(z, raw.size()) == raw);
  CHECK_ERROR_KIND(io::inflate_bytes(z, raw.size() + 1), ErrorKind::FormatError);
}

TEST_CASE("bit packing roundtrip") {
  std::vector<std::uint8_t> flags{1, 0, 0, 1, 1, 1, 0, 1, 0, 1, 1};
  const auto packed = io::pack_bits(flags);
  CHECK(packed.size() == 2);
  CHECK(packed[0] == 0b10111001);
  CHECK(io::unpack_bits(packed, flags.size()) == flags);
  CHECK_ERROR_KIND(io::unpack_bits(packed, 17), ErrorKind::FormatError);
}

TEST_CASE("container framing") {
  TempDir dir;
  const auto path = dir / "c.segn";
  io::Bytes a{1, 2, 3}, b(100, 9);
  {
    io::ContainerWriter w(path);
    auto sa = w.add_section(a);
    auto sb = w.add_section(b);
    w.finalize({{"kind", "test"}, {"a", sa.to_json()}, {"b", sb.to_json()}});
  }
  const auto bytes = slurp(path);
  CHECK(std::string(bytes.data(), 4) == "SEGN");
  CHECK(io::get_u32(reinterpret_cast<const std::uint8_t*>(bytes.data()) + 4) == io::kFormatVersion);
  io::ContainerReader r(path);
  CHECK(io::container_kind(r.header()) == "test");
  CHECK(r.read_section(io::SectionInfo::from_json(r.header()["b"]), "b") == b);
  CHECK(r.read_section(io::SectionInfo::from_json(r.header()["a"]), "a") == a);
  CHECK(!std::filesystem::exists(path.string() + ".part"));
}

TEST_CASE("cube and zone roundtrip is lossless") {
  TempDir dir;
  const auto data = generate_synthetic_cube(tiny_config(), 5);
  save_cube(data.cube, dir / "cube.segn");
  save_zones(data.zones, dir / "zones.segn");
  const auto cube = load_cube(dir / "cube.segn");
  CHECK(bit_equal(cube, data.cube));
  CHECK(cube.epoch == data.cube.epoch);
  CHECK(load_zones(dir / "zones.segn") == data.zones);
  CHECK_ERROR_KIND(load_zones(dir / "cube.segn"), ErrorKind::FormatError);
}

TEST_CASE("corrupted cube files are rejected") {
  TempDir dir;
  const auto path = dir / "cube.segn";
  save_cube(generate_synthetic_cube(tiny_config(), 6).cube, path);
  const auto good = slurp(path);

  auto truncated = good;
  truncated.resize(good.size() - 40);
  dump(path, truncated);
  CHECK_ERROR_KIND(load_cube(path), ErrorKind::FormatError);

  auto short_header = good;
  short_header.resize(30);
  dump(path, short_header);
  CHECK_ERROR_KIND(load_cube(path), ErrorKind::FormatError);

  auto version = good;
  version[4] = 9;
  dump(path, version);
  try {
    load_cube(path);
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
    CHECK(std::string(e.what()).find('9') != std::string::npos);
  }

  auto magic = good;
  magic[0] = 'X';
  dump(path, magic);
  CHECK_ERROR_KIND(load_cube(path), ErrorKind::FormatError);

  auto flipped = good;
  flipped[flipped.size() - 10] ^= 0x5a;
  dump(path, flipped);
  CHECK_ERROR_KIND(load_cube(path), ErrorKind::ChecksumError);

  CHECK_ERROR_KIND(load_cube(dir / "missing.segn"), ErrorKind::IoError);
}

TEST_CASE("synthetic generator is deterministic per seed") {
  const auto a = generate_synthetic_cube(tiny_config(), 11);
  const auto b = generate_synthetic_cube(tiny_config(), 11);
  const auto c = generate_synthetic_cube(tiny_config(), 12);
  CHECK(bit_equal(a.cube, b.cube));
  CHECK(a.zones == b.zones);
  CHECK(!bit_equal(a.cube, c.cube));
  CHECK_NOTHROW(a.cube.validate());
  CHECK_NOTHROW(a.zones.validate());
  CHECK(a.cube.num_days() == 28);
  CHECK(a.zones.num_weeks() == 2);  // week starts 8, 15; the week from day 22 runs past day 27
}

TEST_CASE("default synthetic config lands in the prevalence band") {
  const auto data = generate_synthetic_cube(SynthConfig{}, 7);
  std::size_t pos = 0, valid = 0;
  for (std::size_t w = 0; w < data.zones.num_weeks(); ++w) {
    for (std::size_t i = 0; i < data.zones.valid[w].size(); ++i) {
      if (!data.zones.valid[w].data[i]) continue;
      ++valid;
      pos += data.zones.labels[w].data[i];
    }
  }
  const double prevalence = static_cast<double>(pos) / static_cast<double>(valid);
  CHECK(prevalence >= 0.05);
  CHECK(prevalence <= 0.30);
  CHECK(valid > 40000);
}

TEST_CASE("synthetic config validation and json defaults") {
  auto c = tiny_config();
  c.days = 30;
  CHECK_ERROR_KIND(generate_synthetic_cube(c, 1), ErrorKind::BadConfig);
  c = tiny_config();
  c.rows = 0;
  CHECK_ERROR_KIND(generate_synthetic_cube(c, 1), ErrorKind::BadConfig);
  c = tiny_config();
  c.signal_strength = 1.5;
  CHECK_ERROR_KIND(c.validate(), ErrorKind::BadConfig);

  const auto partial = nlohmann::json{{"rows", 12}, {"signal_strength", 0.0}}.get<SynthConfig>();
  CHECK(partial.rows == 12);
  CHECK(partial.cols == 32);
  CHECK(partial.signal_strength == 0.0);
  nlohmann::json full = partial;
  CHECK(full.get<SynthConfig>().rows == 12);
}
