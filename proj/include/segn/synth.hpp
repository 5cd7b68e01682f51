#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "segn/grid.hpp"

namespace segn {

enum class LabelRule {
  /// persistent chlorophyll front AND temperature inside [to_band_lo, to_band_hi]
  FrontTemperature,
  /// persistent chlorophyll front AND latitude inside [lat_band_lo, lat_band_hi]
  FrontLatitude,
};

/// Synthetic ocean generator settings. Every field has a default so that a
/// partial JSON config materializes to a complete one.
struct SynthConfig {
  std::size_t rows = 32;
  std::size_t cols = 32;
  std::size_t days = 364;
  double lat_min = 8.0;
  double lat_max = 24.0;
  double lon_min = 62.0;
  double lon_max = 78.0;
  std::string epoch_date = "2023-01-01";

  /// 1 = labels follow the planted rule exactly, 0 = labels independent of
  /// the fields (Bernoulli at the rule's prevalence). In between, each
  /// cell-week keeps the rule label with this probability.
  double signal_strength = 1.0;
  double missing_rate = 0.10;
  /// Triangular land patch in the north-east corner, as a fraction of cells.
  double land_fraction = 0.08;

  std::size_t front_count = 3;
  double front_width = 1.6;        // cells
  double front_speed_min = 0.04;   // cells per day
  double front_speed_max = 0.12;
  double front_chl_amplitude = 0.12;
  double front_to_amplitude = 0.5;
  double to_lat_gradient = 0.05;   // degrees C per grid row, warmer to the south
  double noise_scale = 1.0;
  double noise_memory = 0.9;       // AR(1) coefficient of the daily noise

  LabelRule label_rule = LabelRule::FrontTemperature;
  double gradient_percentile = 0.8;
  double to_band_lo = 26.0;
  double to_band_hi = 29.5;
  double lat_band_lo = 12.0;
  double lat_band_hi = 20.0;

  int first_week_start = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SyntheticData {
  EnvironmentalCube cube;
  ActiveZoneSeries zones;
};

/// Smooth correlated fields with seasonal cycles and drifting fronts, cloud
/// gaps, and weekly labels from a known rule. Bit-reproducible per seed.
SyntheticData generate_synthetic_cube(const SynthConfig& config, std::uint64_t seed);

}  // namespace segn
