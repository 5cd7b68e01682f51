#include "segn/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace segn {

std::string_view variable_name(VariableId v) {
  switch (v) {
    case VariableId::mlotst: return "mlotst";
    case VariableId::so: return "so";
    case VariableId::to: return "to";
    case VariableId::chl: return "chl";
    case VariableId::chl_norm: return "chl_norm";
    case VariableId::phyto: return "phyto";
    case VariableId::o2: return "o2";
  }
  return "?";
}

VariableId parse_variable(std::string_view name) {
  for (auto v : kAllVariables) {
    if (variable_name(v) == name) return v;
  }
  throw Error(ErrorKind::MissingVariable, "unknown variable '" + std::string(name) + "'");
}

std::string_view season_name(Season s) {
  switch (s) {
    case Season::Winter: return "Winter";
    case Season::PreMonsoon: return "PreMonsoon";
    case Season::Monsoon: return "Monsoon";
    case Season::PostMonsoon: return "PostMonsoon";
  }
  return "?";
}

namespace {

void check_axis(const std::vector<double>& axis, const char* name) {
  if (axis.size() < 3) {
    throw Error(ErrorKind::BadConfig, std::string(name) + " axis needs at least 3 entries");
  }
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (!(axis[i] > axis[i - 1])) {
      throw Error(ErrorKind::BadConfig, std::string(name) + " axis must be strictly ascending");
    }
  }
}

}  // namespace

GeoGrid::GeoGrid(std::vector<double> lat_axis, std::vector<double> lon_axis)
    : lat_(std::move(lat_axis)), lon_(std::move(lon_axis)) {
  check_axis(lat_, "latitude");
  check_axis(lon_, "longitude");
}

GeoGrid GeoGrid::uniform(double lat_min, double lat_max, std::size_t rows, double lon_min,
                         double lon_max, std::size_t cols) {
  if (rows < 3 || cols < 3) throw Error(ErrorKind::BadConfig, "grid needs at least 3x3 cells");
  std::vector<double> lat(rows), lon(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    lat[i] = lat_min + (lat_max - lat_min) * static_cast<double>(i) / static_cast<double>(rows - 1);
  }
  for (std::size_t j = 0; j < cols; ++j) {
    lon[j] = lon_min + (lon_max - lon_min) * static_cast<double>(j) / static_cast<double>(cols - 1);
  }
  lat.back() = lat_max;
  lon.back() = lon_max;
  return GeoGrid(std::move(lat), std::move(lon));
}

bool GridField::complete() const {
  for (auto m : valid.data) {
    if (!m) return false;
  }
  return true;
}

bool bit_equal(const GridField& a, const GridField& b) {
  return a.variable == b.variable && a.day == b.day && a.values.same_shape(b.values) &&
         a.valid.data == b.valid.data && a.valid.same_shape(b.valid) &&
         std::memcmp(a.values.data.data(), b.values.data.data(), a.values.size() * sizeof(float)) == 0;
}

Date parse_date(std::string_view iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  const std::string s(iso);
  if (std::sscanf(s.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
    throw Error(ErrorKind::BadConfig, "bad date '" + s + "', expected YYYY-MM-DD");
  }
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error(ErrorKind::BadConfig, "invalid calendar date '" + s + "'");
  return date;
}

std::string format_date(const Date& d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::size_t EnvironmentalCube::day_position(int day) const {
  if (days.empty() || day < days.front() || day > days.back()) {
    throw Error(ErrorKind::OutOfRange, "day " + std::to_string(day) + " outside cube");
  }
  return static_cast<std::size_t>(day - days.front());
}

void EnvironmentalCube::validate() const {
  if (fields.size() != days.size() * kNumVariables) {
    throw Error(ErrorKind::ShapeMismatch, "cube must hold 7 fields per day");
  }
  for (std::size_t i = 1; i < days.size(); ++i) {
    if (days[i] != days[i - 1] + 1) throw Error(ErrorKind::DayMismatch, "cube days must be consecutive");
  }
  for (std::size_t t = 0; t < days.size(); ++t) {
    for (auto v : kAllVariables) {
      const auto& f = field(v, t);
      if (f.variable != v || f.day != days[t]) {
        throw Error(ErrorKind::DayMismatch, "cube field order does not match days/variables");
      }
      if (f.values.rows != grid.rows() || f.values.cols != grid.cols() || !f.valid.same_shape(f.values)) {
        throw Error(ErrorKind::ShapeMismatch, "field shape differs from grid");
      }
    }
  }
}

bool bit_equal(const EnvironmentalCube& a, const EnvironmentalCube& b) {
  if (!(a.grid == b.grid) || a.epoch != b.epoch || a.days != b.days || a.fields.size() != b.fields.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.fields.size(); ++i) {
    if (!bit_equal(a.fields[i], b.fields[i])) return false;
  }
  return true;
}

void ActiveZoneSeries::validate() const {
  if (labels.size() != week_starts.size() || valid.size() != week_starts.size()) {
    throw Error(ErrorKind::ShapeMismatch, "zone series needs one label and mask raster per week");
  }
  for (std::size_t w = 1; w < week_starts.size(); ++w) {
    if (week_starts[w] != week_starts[w - 1] + 7) {
      throw Error(ErrorKind::DayMismatch, "week starts must be 7 days apart");
    }
  }
  for (std::size_t w = 0; w < labels.size(); ++w) {
    if (labels[w].rows != grid.rows() || labels[w].cols != grid.cols() || !valid[w].same_shape(labels[w])) {
      throw Error(ErrorKind::ShapeMismatch, "zone raster shape differs from grid");
    }
    for (auto l : labels[w].data) {
      if (l > 1) throw Error(ErrorKind::BadLabel, "zone labels must be 0 or 1");
    }
  }
}

GridField fill_missing_nearest(const GridField& field) {
  const std::size_t rows = field.values.rows, cols = field.values.cols;
  std::vector<std::size_t> donors;
  for (std::size_t i = 0; i < field.valid.size(); ++i) {
    if (field.valid.data[i]) donors.push_back(i);
  }
  if (donors.empty()) {
    throw Error(ErrorKind::AllMissing, "field " + std::string(variable_name(field.variable)) + " day " +
                                           std::to_string(field.day) + " has no valid cell");
  }
  GridField out = field;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t idx = r * cols + c;
      if (field.valid.data[idx]) continue;
      long best_d2 = std::numeric_limits<long>::max();
      std::size_t best = donors.front();
      // donors are ascending, so strict < keeps the smallest index on ties
      for (auto d : donors) {
        const long dr = static_cast<long>(d / cols) - static_cast<long>(r);
        const long dc = static_cast<long>(d % cols) - static_cast<long>(c);
        const long d2 = dr * dr + dc * dc;
        if (d2 < best_d2) {
          best_d2 = d2;
          best = d;
        }
      }
      out.values.data[idx] = field.values.data[best];
    }
  }
  std::fill(out.valid.data.begin(), out.valid.data.end(), std::uint8_t{1});
  return out;
}

double normalize_axis(double x, double lo, double hi) {
  if (!(hi > lo)) throw Error(ErrorKind::BadConfig, "normalization bounds need max > min");
  constexpr double tol = 1e-9;
  if (x < lo - tol || x > hi + tol) {
    throw Error(ErrorKind::OutOfBounds, "coordinate " + std::to_string(x) + " outside [" + std::to_string(lo) +
                                            ", " + std::to_string(hi) + "]");
  }
  if (x <= lo) return -1.0;
  if (x >= hi) return 1.0;
  return 2.0 * (x - lo) / (hi - lo) - 1.0;
}

std::pair<double, double> normalize_coordinates(double lat, double lon, const GeoBounds& b) {
  return {normalize_axis(lat, b.lat_min, b.lat_max), normalize_axis(lon, b.lon_min, b.lon_max)};
}

Season season_of_month(unsigned month) {
  if (month == 12 || month <= 2) return Season::Winter;
  if (month <= 5) return Season::PreMonsoon;
  if (month <= 9) return Season::Monsoon;
  return Season::PostMonsoon;
}

Season assign_season(int day, const Date& epoch) {
  const Date date{std::chrono::sys_days{epoch} + std::chrono::days{day}};
  return season_of_month(static_cast<unsigned>(date.month()));
}

}  // namespace segn
