#include "segn/predict.hpp"

#include <cstdio>
#include <fstream>

namespace segn {

using nlohmann::json;

json PredictionMap::to_geojson() const {
  json features = json::array();
  for (const auto& c : cells) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {c.lon, c.lat}}}},
                        {"properties",
                         {{"probability", c.probability}, {"decision", c.decision ? 1 : 0}, {"week_start", week_start}}}});
  }
  return {{"type", "FeatureCollection"},
          {"properties", {{"variant", variant_name(variant)}, {"week_start", week_start}, {"threshold", kDecisionThreshold}}},
          {"features", features}};
}

void PredictionMap::write_geojson(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_geojson().dump(1) << "\n";
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

void PredictionMap::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "lat,lon,probability,decision\n";
  char line[128];
  for (const auto& c : cells) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.9f,%d\n", c.lat, c.lon, c.probability, c.decision ? 1 : 0);
    out << line;
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Mask observed_cells(const EnvironmentalCube& cube) {
  Mask m(cube.grid.rows(), cube.grid.cols());
  for (const auto& f : cube.fields) {
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= f.valid.data[i];
  }
  return m;
}

PredictionMap predict_week(SegnModel<float>& model, const FeatureContext& ctx, const Mask& cells, int week_start,
                           const FeatureLayout& input_layout, const StandardizationStats& stats) {
  const auto& grid = ctx.grid();
  if (cells.rows != grid.rows() || cells.cols != grid.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "cell mask is " + std::to_string(cells.rows) + "x" +
                                              std::to_string(cells.cols) + ", grid is " + std::to_string(grid.rows()) +
                                              "x" + std::to_string(grid.cols()));
  }
  const int window = static_cast<int>(kSequenceLength);
  const auto& days = ctx.days();
  if (days.empty() || week_start - window < days.front() || week_start - 1 > days.back()) {
    throw Error(ErrorKind::InsufficientHistory, "week starting day " + std::to_string(week_start) + " needs days " +
                                                    std::to_string(week_start - window) + ".." +
                                                    std::to_string(week_start - 1) + " in the cube");
  }
  if (!(ctx.layout(input_layout.variant()) == input_layout)) {
    throw Error(ErrorKind::LayoutMismatch, "cube features do not produce the checkpoint's input layout");
  }
  if (stats.mean.size() != input_layout.total()) {
    throw Error(ErrorKind::LayoutMismatch, "standardization width differs from the input layout");
  }

  PredictionMap map;
  map.grid = grid;
  map.week_start = week_start;
  map.variant = model.config().variant;
  const std::size_t D = input_layout.total();
  constexpr std::size_t kBatch = 256;
  std::vector<std::size_t> pending;
  Rng unused(0);

  auto flush = [&] {
    if (pending.empty()) return;
    nn::Tensor<float> x({pending.size() * kSequenceLength, D});
    for (std::size_t b = 0; b < pending.size(); ++b) {
      const std::size_t row = pending[b] / grid.cols(), col = pending[b] % grid.cols();
      for (std::size_t k = 0; k < kSequenceLength; ++k) {
        std::span<float> dst(x.data() + (b * kSequenceLength + k) * D, D);
        ctx.assemble(row, col, week_start - window + static_cast<int>(k), input_layout.variant(), dst);
        apply_standardization(dst, stats);
      }
    }
    nn::Tape<float> tape(false);
    const auto p = positive_probabilities(model.forward(tape, x, input_layout, false, unused).value());
    for (std::size_t b = 0; b < pending.size(); ++b) {
      PredictionCell c;
      c.row = pending[b] / grid.cols();
      c.col = pending[b] % grid.cols();
      c.lat = grid.lat_axis()[c.row];
      c.lon = grid.lon_axis()[c.col];
      c.probability = p[b];
      c.decision = p[b] >= kDecisionThreshold;
      map.cells.push_back(c);
    }
    pending.clear();
  };

  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    if (!cells.data[cell]) continue;
    pending.push_back(cell);
    if (pending.size() == kBatch) flush();
  }
  flush();
  return map;
}

json CompareReport::to_json() const {
  auto summary = [](const VariantRun& r) {
    json j = r.test.to_json();
    j["best_epoch"] = r.training.best_epoch;
    j["epochs_run"] = r.training.history.size();
    j["best_val_weighted_f1"] = r.training.best_val_weighted_f1;
    return j;
  };
  const json deltas = {{"weighted_f1", geo.test.weighted_f1 - base.test.weighted_f1},
                       {"accuracy", geo.test.accuracy - base.test.accuracy},
                       {"precision", geo.test.precision - base.test.precision},
                       {"recall", geo.test.recall - base.test.recall},
                       {"auc", geo.test.auc - base.test.auc}};
  return {{"geo", summary(geo)}, {"base", summary(base)}, {"delta_geo_minus_base", deltas}};
}

CompareReport compare_variants(const StoreReader& store, const SplitAssignment& split, SegnConfig model_config,
                               const TrainConfig& train_config,
                               const std::function<void(Variant, const EpochRecord&)>& on_epoch) {
  if (store.header().layout.variant() != Variant::Geo) {
    throw Error(ErrorKind::LayoutMismatch, "variant comparison needs a geo-layout store");
  }
  CompareReport report;
  for (Variant v : {Variant::Geo, Variant::Base}) {
    SegnConfig cfg = model_config;
    cfg.variant = v;
    SegnModel<float> model(cfg);
    VariantRun run;
    EpochCallback cb;
    if (on_epoch) cb = [&on_epoch, v](const EpochRecord& r) { on_epoch(v, r); };
    run.training = train(model, store, split, train_config, cb);
    run.test = evaluate(model, store, run.training.standardization, &split, Split::Test, train_config.batch_size);
    (v == Variant::Geo ? report.geo : report.base) = std::move(run);
  }
  return report;
}

}  // namespace segn
