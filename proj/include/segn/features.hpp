#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segn/grid.hpp"

namespace segn {

enum class Variant : std::uint8_t { Geo, Base };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

// ---------------------------------------------------------------------------
// Gradients

/// 3x3 Sobel correlation, kernels scaled by 1/8 so a unit ramp gives 1.0.
/// gx differentiates along columns (east), gy along rows (north). Edges use
/// replicate padding.
std::pair<Raster<double>, Raster<double>> sobel_gradients(const Raster<double>& values);
/// Throws IncompleteField unless every cell is valid.
std::pair<Raster<double>, Raster<double>> sobel_gradients(const GridField& field);

Raster<double> gradient_magnitude(const Raster<double>& gx, const Raster<double>& gy);

/// X(t) - X(t-1). Throws DayMismatch unless x_t follows x_prev by one day.
Raster<double> temporal_gradient(const GridField& x_t, const GridField& x_prev);

struct GradientStack {
  std::array<Raster<double>, kNumVariables> gx, gy, gmag, gt;
};

// ---------------------------------------------------------------------------
// Seasonal statistics

struct SeasonStat {
  double mu = 0, sigma = 0, min = 0, max = 0;
};

struct SeasonalStats {
  std::vector<VariableId> variables;
  /// values[i][season] for variables[i]
  std::vector<std::array<SeasonStat, kNumSeasons>> values;

  const SeasonStat& at(VariableId v, Season s) const;
  std::size_t feature_count() const { return variables.size() * kNumSeasons * 4; }
};

/// Population statistics per (variable, season) over every valid (cell, day)
/// whose day falls in the season. Throws EmptySeason.
SeasonalStats seasonal_statistics(const EnvironmentalCube& cube, std::span<const VariableId> variables);

struct SeasonalTransitions {
  std::vector<VariableId> variables;
  /// values[i][s] = mu(s+1) - mu(s), cyclic
  std::vector<std::array<double, kNumSeasons>> values;
};

SeasonalTransitions seasonal_transitions(const SeasonalStats& stats, std::span<const VariableId> variables);

std::array<float, kNumSeasons> encode_season(Season s);

// ---------------------------------------------------------------------------
// Layout

struct FeatureBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool operator==(const FeatureBlock&) const = default;
};

/// Ordered blocks: environmental(7), geographic(2, Geo only), gradients(28),
/// seasonal_stats(80), seasonal_transitions(12), season_onehot(4).
///
/// gradients holds (gx, gy, gmag) per variable in canonical order followed by
/// gt per variable. seasonal_stats holds (mu, sigma, min, max) per season per
/// stats variable. seasonal_transitions holds the four cyclic transitions per
/// transition variable.
class FeatureLayout {
 public:
  FeatureLayout() = default;
  explicit FeatureLayout(Variant variant, std::size_t stats_variables = 5, std::size_t transition_variables = 3);

  Variant variant() const { return variant_; }
  std::size_t total() const { return total_; }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  /// Throws LayoutMismatch if absent.
  const FeatureBlock& block(std::string_view name) const;
  bool has_block(std::string_view name) const;

  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);

  bool operator==(const FeatureLayout&) const = default;

 private:
  Variant variant_ = Variant::Geo;
  std::vector<FeatureBlock> blocks_;
  std::size_t total_ = 0;
};

inline constexpr std::size_t kSequenceLength = 8;

struct FeatureConfig {
  std::vector<VariableId> stats_variables = {VariableId::to, VariableId::so, VariableId::chl, VariableId::phyto,
                                             VariableId::o2};
  std::vector<VariableId> transition_variables = {VariableId::to, VariableId::so, VariableId::chl};
  std::size_t window = kSequenceLength;
  /// Cells per side of the spatial tiles that, with the week, form the
  /// source_file_id grouping key.
  std::size_t tile_size = 8;
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

/// Everything assemble_features needs, precomputed once per cube: gap-filled
/// fields, per-day gradient stacks and the seasonal blocks.
class FeatureContext {
 public:
  FeatureContext(const EnvironmentalCube& cube, FeatureConfig config = {});

  const GeoGrid& grid() const { return grid_; }
  const Date& epoch() const { return epoch_; }
  const std::vector<int>& days() const { return days_; }
  const FeatureConfig& config() const { return config_; }
  const SeasonalStats& stats() const { return stats_; }
  const SeasonalTransitions& transitions() const { return transitions_; }
  FeatureLayout layout(Variant v) const;

  /// Gap-filled value of variable v at (row, col) on the cube's t-th day.
  float value(VariableId v, std::size_t t, std::size_t cell) const;
  float gradient(std::size_t component, VariableId v, std::size_t t, std::size_t cell) const;

  /// Feature vector of one cell on one day, in FeatureLayout order.
  void assemble(std::size_t row, std::size_t col, int day, Variant variant, std::span<float> out) const;

 private:
  GeoGrid grid_;
  Date epoch_;
  std::vector<int> days_;
  FeatureConfig config_;
  SeasonalStats stats_;
  SeasonalTransitions transitions_;
  std::vector<float> seasonal_block_;  // stats followed by transitions
  // [t][v][cell]
  std::vector<float> filled_;
  // [t][component gx,gy,gmag,gt][v][cell]
  std::vector<float> grads_;
};

/// Throws OutOfRange for off-grid cells or days outside the cube.
std::vector<float> assemble_features(const FeatureContext& ctx, std::size_t row, std::size_t col, int day,
                                     Variant variant);

// ---------------------------------------------------------------------------
// Sequences

struct SequenceSample {
  std::vector<float> features;  // kSequenceLength x D, row-major
  std::uint8_t label = 0;
  float lat = 0;
  float lon = 0;
  std::int32_t week_start_day = 0;
  std::string source_file_id;

  bool operator==(const SequenceSample&) const = default;
};

std::string source_file_id(int week_start, std::size_t tile_row, std::size_t tile_col);

/// Deterministic single-pass producer of labeled sequences, week-major then
/// row-major over valid cells. Rows are the window days before each week.
class SequenceBuilder {
 public:
  SequenceBuilder(const FeatureContext& ctx, const ActiveZoneSeries& zones, Variant variant);

  std::optional<SequenceSample> next();
  const FeatureLayout& layout() const { return layout_; }
  const FeatureContext& context() const { return ctx_; }

 private:
  const FeatureContext& ctx_;
  const ActiveZoneSeries& zones_;
  Variant variant_;
  FeatureLayout layout_;
  std::size_t week_ = 0;
  std::size_t cell_ = 0;
};

std::vector<SequenceSample> build_sequences(const FeatureContext& ctx, const ActiveZoneSeries& zones,
                                            Variant variant);

// ---------------------------------------------------------------------------
// Standardization

inline constexpr double kStdFloor = 1e-6;

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;

  nlohmann::json to_json() const;
  static StandardizationStats from_json(const nlohmann::json& j);
  bool operator==(const StandardizationStats&) const = default;
};

/// Streaming per-column mean/std (Welford) over every timestep row of every
/// sample. The season one-hot block is recorded as mean 0, std 1.
class StandardizationFitter {
 public:
  explicit StandardizationFitter(const FeatureLayout& layout);
  void add(const SequenceSample& sample);
  std::size_t rows_seen() const { return count_; }
  /// Throws EmptyTrainingSet if no sample was added.
  StandardizationStats finish() const;

 private:
  FeatureLayout layout_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

StandardizationStats fit_standardization(std::span<const SequenceSample> train, const FeatureLayout& layout);
void apply_standardization(std::span<float> features, const StandardizationStats& stats);
SequenceSample apply_standardization(SequenceSample sample, const StandardizationStats& stats);

}  // namespace segn
