#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "segn/error.hpp"

namespace segn {

/// Dense row-major 2-D array. Row 0 is the southernmost latitude.
template <typename T>
struct Raster {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Raster& o) const { return rows == o.rows && cols == o.cols; }

  template <typename U>
  bool same_shape(const Raster<U>& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool operator==(const Raster&) const = default;
};

using Mask = Raster<std::uint8_t>;

/// The seven environmental variables in canonical order.
enum class VariableId : std::uint8_t { mlotst = 0, so, to, chl, chl_norm, phyto, o2 };

inline constexpr std::size_t kNumVariables = 7;
inline constexpr std::array<VariableId, kNumVariables> kAllVariables = {
    VariableId::mlotst, VariableId::so,    VariableId::to, VariableId::chl,
    VariableId::chl_norm, VariableId::phyto, VariableId::o2};

std::string_view variable_name(VariableId v);
VariableId parse_variable(std::string_view name);
inline std::size_t index_of(VariableId v) { return static_cast<std::size_t>(v); }

enum class Season : std::uint8_t { Winter = 0, PreMonsoon, Monsoon, PostMonsoon };

inline constexpr std::size_t kNumSeasons = 4;
inline constexpr std::array<Season, kNumSeasons> kAllSeasons = {
    Season::Winter, Season::PreMonsoon, Season::Monsoon, Season::PostMonsoon};

std::string_view season_name(Season s);
inline std::size_t index_of(Season s) { return static_cast<std::size_t>(s); }
inline Season next_season(Season s) {
  return static_cast<Season>((static_cast<std::size_t>(s) + 1) % kNumSeasons);
}

struct GeoBounds {
  double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;
};

/// Regular lat/lon grid. Axes are strictly ascending, at least 3 long.
class GeoGrid {
 public:
  GeoGrid() = default;
  GeoGrid(std::vector<double> lat_axis, std::vector<double> lon_axis);

  static GeoGrid uniform(double lat_min, double lat_max, std::size_t rows, double lon_min,
                         double lon_max, std::size_t cols);

  std::size_t rows() const { return lat_.size(); }
  std::size_t cols() const { return lon_.size(); }
  std::size_t cells() const { return rows() * cols(); }
  const std::vector<double>& lat_axis() const { return lat_; }
  const std::vector<double>& lon_axis() const { return lon_; }
  GeoBounds bounds() const { return {lat_.front(), lat_.back(), lon_.front(), lon_.back()}; }

  bool operator==(const GeoGrid&) const = default;

 private:
  std::vector<double> lat_;
  std::vector<double> lon_;
};

struct GridField {
  VariableId variable = VariableId::mlotst;
  int day = 0;
  Raster<float> values;
  Mask valid;  // 1 = observed

  bool complete() const;
};

/// Bitwise equality so that NaN placeholders in masked cells compare equal.
bool bit_equal(const GridField& a, const GridField& b);

using Date = std::chrono::year_month_day;

Date parse_date(std::string_view iso);
std::string format_date(const Date& d);

/// Seven variables over T consecutive days. fields are stored day-major:
/// field(v, t) = fields[t * 7 + v].
struct EnvironmentalCube {
  GeoGrid grid;
  Date epoch{std::chrono::year{2023}, std::chrono::month{1}, std::chrono::day{1}};
  std::vector<int> days;
  std::vector<GridField> fields;

  std::size_t num_days() const { return days.size(); }
  const GridField& field(VariableId v, std::size_t t) const { return fields[t * kNumVariables + index_of(v)]; }
  GridField& field(VariableId v, std::size_t t) { return fields[t * kNumVariables + index_of(v)]; }
  /// Position of a day index within days, or throws OutOfRange.
  std::size_t day_position(int day) const;

  void validate() const;
};

bool bit_equal(const EnvironmentalCube& a, const EnvironmentalCube& b);

/// Weekly binary ground truth. Week starts are 7 days apart.
struct ActiveZoneSeries {
  GeoGrid grid;
  std::vector<int> week_starts;
  std::vector<Mask> labels;
  std::vector<Mask> valid;

  std::size_t num_weeks() const { return week_starts.size(); }
  void validate() const;
  bool operator==(const ActiveZoneSeries&) const = default;
};

/// Fill every cell with the value of the nearest valid cell in grid-index
/// space. Ties go to the smallest row-major index.
GridField fill_missing_nearest(const GridField& field);

/// Affine map of a coordinate from [lo, hi] to [-1, 1].
double normalize_axis(double x, double lo, double hi);
std::pair<double, double> normalize_coordinates(double lat, double lon, const GeoBounds& bounds);

/// Dec-Feb Winter, Mar-May PreMonsoon, Jun-Sep Monsoon, Oct-Nov PostMonsoon.
Season season_of_month(unsigned month);
Season assign_season(int day, const Date& epoch);

}  // namespace segn
