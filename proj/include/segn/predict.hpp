#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segn/features.hpp"
#include "segn/metrics.hpp"
#include "segn/model.hpp"
#include "segn/store.hpp"
#include "segn/train.hpp"

namespace segn {

struct PredictionCell {
  std::size_t row = 0, col = 0;
  double lat = 0, lon = 0;
  double probability = 0;
  bool decision = false;
};

struct PredictionMap {
  GeoGrid grid;
  int week_start = 0;
  Variant variant = Variant::Geo;
  /// Row-major over the cells selected by the mask; absent cells are omitted.
  std::vector<PredictionCell> cells;

  /// FeatureCollection of Points with probability, decision, week_start.
  nlohmann::json to_geojson() const;
  void write_geojson(const std::filesystem::path& path) const;
  /// Columns lat, lon, probability, decision.
  void write_csv(const std::filesystem::path& path) const;
};

/// Cells with at least one valid observation anywhere in the cube.
Mask observed_cells(const EnvironmentalCube& cube);

/// Forecasts the week starting at `week_start` from the 8 preceding cube days
/// for every cell set in `cells`. Features are assembled in input_layout's
/// variant and standardized with `stats`. Throws InsufficientHistory when a
/// window day is missing from the cube and ShapeMismatch for a mask of the
/// wrong size.
PredictionMap predict_week(SegnModel<float>& model, const FeatureContext& ctx, const Mask& cells, int week_start,
                           const FeatureLayout& input_layout, const StandardizationStats& stats);

struct VariantRun {
  TrainResult training;
  Metrics test;
};

struct CompareReport {
  VariantRun geo;
  VariantRun base;

  /// Both variants' test metrics plus geo-minus-base deltas for weighted F1,
  /// accuracy, precision, recall and AUC.
  nlohmann::json to_json() const;
};

/// Trains Geo and Base with the same seeds and split on a Geo-layout store;
/// Base reads the coordinate-free slice. Throws LayoutMismatch for a
/// Base-layout store.
CompareReport compare_variants(const StoreReader& store, const SplitAssignment& split, SegnConfig model_config,
                               const TrainConfig& train_config,
                               const std::function<void(Variant, const EpochRecord&)>& on_epoch = {});

}  // namespace segn
