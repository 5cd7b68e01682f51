#include "segn/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace segn {

std::string_view variant_name(Variant v) { return v == Variant::Geo ? "geo" : "base"; }

Variant parse_variant(std::string_view name) {
  if (name == "geo" || name == "Geo") return Variant::Geo;
  if (name == "base" || name == "Base") return Variant::Base;
  throw Error(ErrorKind::BadConfig, "unknown variant '" + std::string(name) + "' (expected geo|base)");
}

// ---------------------------------------------------------------------------

std::pair<Raster<double>, Raster<double>> sobel_gradients(const Raster<double>& f) {
  if (f.rows < 3 || f.cols < 3) throw Error(ErrorKind::ShapeMismatch, "Sobel needs at least a 3x3 field");
  const long R = static_cast<long>(f.rows), C = static_cast<long>(f.cols);
  Raster<double> gx(f.rows, f.cols), gy(f.rows, f.cols);
  auto at = [&](long r, long c) {
    return f(static_cast<std::size_t>(std::clamp(r, 0L, R - 1)), static_cast<std::size_t>(std::clamp(c, 0L, C - 1)));
  };
  static constexpr double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      double sx = 0, sy = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const double v = at(r + dr, c + dc);
          sx += kx[dr + 1][dc + 1] * v;
          sy += kx[dc + 1][dr + 1] * v;
        }
      }
      gx(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sx / 8.0;
      gy(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sy / 8.0;
    }
  }
  return {std::move(gx), std::move(gy)};
}

std::pair<Raster<double>, Raster<double>> sobel_gradients(const GridField& field) {
  if (!field.complete()) {
    throw Error(ErrorKind::IncompleteField, "Sobel on " + std::string(variable_name(field.variable)) + " day " +
                                                std::to_string(field.day) + " with missing cells");
  }
  Raster<double> v(field.values.rows, field.values.cols);
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = field.values.data[i];
  return sobel_gradients(v);
}

Raster<double> gradient_magnitude(const Raster<double>& gx, const Raster<double>& gy) {
  if (!gx.same_shape(gy)) throw Error(ErrorKind::ShapeMismatch, "gradient components differ in shape");
  Raster<double> m(gx.rows, gx.cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = std::sqrt(gx.data[i] * gx.data[i] + gy.data[i] * gy.data[i]);
  return m;
}

Raster<double> temporal_gradient(const GridField& x_t, const GridField& x_prev) {
  if (x_t.variable != x_prev.variable || x_t.day != x_prev.day + 1) {
    throw Error(ErrorKind::DayMismatch, "temporal gradient needs the same variable on consecutive days");
  }
  if (!x_t.values.same_shape(x_prev.values)) throw Error(ErrorKind::ShapeMismatch, "temporal gradient shape mismatch");
  Raster<double> g(x_t.values.rows, x_t.values.cols);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] = static_cast<double>(x_t.values.data[i]) - static_cast<double>(x_prev.values.data[i]);
  }
  return g;
}

// ---------------------------------------------------------------------------

const SeasonStat& SeasonalStats::at(VariableId v, Season s) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == v) return values[i][index_of(s)];
  }
  throw Error(ErrorKind::MissingVariable, "no seasonal statistics for " + std::string(variable_name(v)));
}

SeasonalStats seasonal_statistics(const EnvironmentalCube& cube, std::span<const VariableId> variables) {
  SeasonalStats out;
  out.variables.assign(variables.begin(), variables.end());
  out.values.resize(variables.size());
  std::array<std::size_t, kNumSeasons> season_days{};
  std::vector<Season> day_season(cube.num_days());
  for (std::size_t t = 0; t < cube.num_days(); ++t) {
    day_season[t] = assign_season(cube.days[t], cube.epoch);
    ++season_days[index_of(day_season[t])];
  }
  for (auto s : kAllSeasons) {
    if (season_days[index_of(s)] == 0) {
      throw Error(ErrorKind::EmptySeason, "cube has no day in season " + std::string(season_name(s)));
    }
  }
  for (std::size_t i = 0; i < variables.size(); ++i) {
    for (auto s : kAllSeasons) {
      // Welford in double
      std::size_t n = 0;
      double mean = 0, m2 = 0;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t t = 0; t < cube.num_days(); ++t) {
        if (day_season[t] != s) continue;
        const auto& f = cube.field(variables[i], t);
        for (std::size_t k = 0; k < f.values.size(); ++k) {
          if (!f.valid.data[k]) continue;
          const double x = f.values.data[k];
          ++n;
          const double d = x - mean;
          mean += d / static_cast<double>(n);
          m2 += d * (x - mean);
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      }
      if (n == 0) {
        throw Error(ErrorKind::EmptySeason, "no valid " + std::string(variable_name(variables[i])) + " cell in " +
                                                std::string(season_name(s)));
      }
      SeasonStat st;
      st.mu = std::clamp(mean, lo, hi);
      st.sigma = std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
      st.min = lo;
      st.max = hi;
      out.values[i][index_of(s)] = st;
    }
  }
  return out;
}

SeasonalTransitions seasonal_transitions(const SeasonalStats& stats, std::span<const VariableId> variables) {
  SeasonalTransitions out;
  out.variables.assign(variables.begin(), variables.end());
  for (auto v : variables) {
    std::array<double, kNumSeasons> t{};
    for (auto s : kAllSeasons) t[index_of(s)] = stats.at(v, next_season(s)).mu - stats.at(v, s).mu;
    out.values.push_back(t);
  }
  return out;
}

std::array<float, kNumSeasons> encode_season(Season s) {
  std::array<float, kNumSeasons> e{};
  e[index_of(s)] = 1.0f;
  return e;
}

// ---------------------------------------------------------------------------

FeatureLayout::FeatureLayout(Variant variant, std::size_t stats_variables, std::size_t transition_variables)
    : variant_(variant) {
  auto add = [&](const char* name, std::size_t size) {
    blocks_.push_back({name, total_, size});
    total_ += size;
  };
  add("environmental", kNumVariables);
  if (variant == Variant::Geo) add("geographic", 2);
  add("gradients", 4 * kNumVariables);
  add("seasonal_stats", stats_variables * kNumSeasons * 4);
  add("seasonal_transitions", transition_variables * kNumSeasons);
  add("season_onehot", kNumSeasons);
}

const FeatureBlock& FeatureLayout::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorKind::LayoutMismatch, "layout has no block '" + std::string(name) + "'");
}

bool FeatureLayout::has_block(std::string_view name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const auto& b) { return b.name == name; });
}

nlohmann::json FeatureLayout::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) blocks.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
  return {{"variant", variant_name(variant_)}, {"total", total_}, {"blocks", blocks}};
}

FeatureLayout FeatureLayout::from_json(const nlohmann::json& j) {
  FeatureLayout l;
  try {
    l.variant_ = parse_variant(j.at("variant").get<std::string>());
    l.total_ = j.at("total").get<std::size_t>();
    std::size_t expect = 0;
    for (const auto& b : j.at("blocks")) {
      FeatureBlock fb{b.at("name").get<std::string>(), b.at("offset").get<std::size_t>(), b.at("size").get<std::size_t>()};
      if (fb.offset != expect) throw Error(ErrorKind::FormatError, "feature layout blocks are not contiguous");
      expect += fb.size;
      l.blocks_.push_back(fb);
    }
    if (expect != l.total_) throw Error(ErrorKind::FormatError, "feature layout total does not match blocks");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad feature layout: ") + e.what());
  }
  return l;
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  auto names = [](const std::vector<VariableId>& vs) {
    std::vector<std::string> out;
    for (auto v : vs) out.emplace_back(variable_name(v));
    return out;
  };
  j = {{"stats_variables", names(c.stats_variables)},
       {"transition_variables", names(c.transition_variables)},
       {"window", c.window},
       {"tile_size", c.tile_size}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  const FeatureConfig d;
  auto vars = [&](const char* key, const std::vector<VariableId>& def) {
    if (!j.contains(key)) return def;
    std::vector<VariableId> out;
    for (const auto& n : j.at(key)) out.push_back(parse_variable(n.get<std::string>()));
    return out;
  };
  try {
    c.stats_variables = vars("stats_variables", d.stats_variables);
    c.transition_variables = vars("transition_variables", d.transition_variables);
    c.window = j.value("window", d.window);
    c.tile_size = j.value("tile_size", d.tile_size);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("bad feature config: ") + e.what());
  }
  if (c.window != kSequenceLength) throw Error(ErrorKind::BadConfig, "sequence window is fixed at 8 days");
  if (c.tile_size == 0) throw Error(ErrorKind::BadConfig, "tile_size must be positive");
}

// ---------------------------------------------------------------------------

FeatureContext::FeatureContext(const EnvironmentalCube& cube, FeatureConfig config)
    : grid_(cube.grid), epoch_(cube.epoch), days_(cube.days), config_(std::move(config)) {
  cube.validate();
  const std::size_t T = cube.num_days(), cells = grid_.cells();
  for (auto v : config_.transition_variables) {
    if (std::find(config_.stats_variables.begin(), config_.stats_variables.end(), v) == config_.stats_variables.end()) {
      throw Error(ErrorKind::MissingVariable,
                  "transition variable " + std::string(variable_name(v)) + " is not a stats variable");
    }
  }

  EnvironmentalCube filled;
  filled.grid = cube.grid;
  filled.epoch = cube.epoch;
  filled.days = cube.days;
  filled.fields.reserve(cube.fields.size());
  for (const auto& f : cube.fields) filled.fields.push_back(fill_missing_nearest(f));

  stats_ = seasonal_statistics(filled, config_.stats_variables);
  transitions_ = seasonal_transitions(stats_, config_.transition_variables);
  for (std::size_t i = 0; i < stats_.variables.size(); ++i) {
    for (auto s : kAllSeasons) {
      const auto& st = stats_.values[i][index_of(s)];
      for (double x : {st.mu, st.sigma, st.min, st.max}) seasonal_block_.push_back(static_cast<float>(x));
    }
  }
  for (const auto& tv : transitions_.values) {
    for (double x : tv) seasonal_block_.push_back(static_cast<float>(x));
  }

  filled_.resize(T * kNumVariables * cells);
  grads_.resize(T * 4 * kNumVariables * cells);
  for (std::size_t t = 0; t < T; ++t) {
    for (auto v : kAllVariables) {
      const auto& f = filled.field(v, t);
      const std::size_t vi = index_of(v);
      std::copy(f.values.data.begin(), f.values.data.end(), filled_.begin() + static_cast<std::ptrdiff_t>((t * kNumVariables + vi) * cells));
      auto [gx, gy] = sobel_gradients(f);
      const auto gm = gradient_magnitude(gx, gy);
      const Raster<double> gt = t == 0 ? Raster<double>(f.values.rows, f.values.cols, 0.0)
                                       : temporal_gradient(f, filled.field(v, t - 1));
      const std::array<const Raster<double>*, 4> comps = {&gx, &gy, &gm, &gt};
      for (std::size_t k = 0; k < 4; ++k) {
        float* dst = grads_.data() + ((t * 4 + k) * kNumVariables + vi) * cells;
        for (std::size_t i = 0; i < cells; ++i) dst[i] = static_cast<float>(comps[k]->data[i]);
      }
    }
  }
}

FeatureLayout FeatureContext::layout(Variant v) const {
  return FeatureLayout(v, config_.stats_variables.size(), config_.transition_variables.size());
}

float FeatureContext::value(VariableId v, std::size_t t, std::size_t cell) const {
  return filled_[(t * kNumVariables + index_of(v)) * grid_.cells() + cell];
}

float FeatureContext::gradient(std::size_t component, VariableId v, std::size_t t, std::size_t cell) const {
  return grads_[((t * 4 + component) * kNumVariables + index_of(v)) * grid_.cells() + cell];
}

void FeatureContext::assemble(std::size_t row, std::size_t col, int day, Variant variant, std::span<float> out) const {
  if (row >= grid_.rows() || col >= grid_.cols()) throw Error(ErrorKind::OutOfRange, "cell outside grid");
  if (days_.empty() || day < days_.front() || day > days_.back()) {
    throw Error(ErrorKind::OutOfRange, "day " + std::to_string(day) + " outside cube");
  }
  const std::size_t t = static_cast<std::size_t>(day - days_.front());
  const std::size_t cell = row * grid_.cols() + col;
  std::size_t k = 0;
  for (auto v : kAllVariables) out[k++] = value(v, t, cell);
  if (variant == Variant::Geo) {
    const auto [lat_n, lon_n] = normalize_coordinates(grid_.lat_axis()[row], grid_.lon_axis()[col], grid_.bounds());
    out[k++] = static_cast<float>(lat_n);
    out[k++] = static_cast<float>(lon_n);
  }
  for (auto v : kAllVariables) {
    for (std::size_t comp = 0; comp < 3; ++comp) out[k++] = gradient(comp, v, t, cell);
  }
  for (auto v : kAllVariables) out[k++] = gradient(3, v, t, cell);
  for (float x : seasonal_block_) out[k++] = x;
  for (float x : encode_season(assign_season(day, epoch_))) out[k++] = x;
}

std::vector<float> assemble_features(const FeatureContext& ctx, std::size_t row, std::size_t col, int day,
                                     Variant variant) {
  std::vector<float> out(ctx.layout(variant).total());
  ctx.assemble(row, col, day, variant, out);
  return out;
}

// ---------------------------------------------------------------------------

std::string source_file_id(int week_start, std::size_t tile_row, std::size_t tile_col) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "week%04d-tile%02zu-%02zu", week_start, tile_row, tile_col);
  return buf;
}

SequenceBuilder::SequenceBuilder(const FeatureContext& ctx, const ActiveZoneSeries& zones, Variant variant)
    : ctx_(ctx), zones_(zones), variant_(variant), layout_(ctx.layout(variant)) {
  zones_.validate();
  if (!(zones_.grid == ctx_.grid())) throw Error(ErrorKind::ShapeMismatch, "zone grid differs from cube grid");
  const int window = static_cast<int>(ctx_.config().window);
  for (int start : zones_.week_starts) {
    if (ctx_.days().empty() || start - window < ctx_.days().front() || start - 1 > ctx_.days().back()) {
      throw Error(ErrorKind::InsufficientHistory, "week starting day " + std::to_string(start) + " needs days " +
                                                      std::to_string(start - window) + ".." +
                                                      std::to_string(start - 1) + " in the cube");
    }
  }
}

std::optional<SequenceSample> SequenceBuilder::next() {
  const std::size_t cells = ctx_.grid().cells(), cols = ctx_.grid().cols();
  const std::size_t D = layout_.total(), window = ctx_.config().window;
  while (week_ < zones_.num_weeks()) {
    while (cell_ < cells) {
      const std::size_t cell = cell_++;
      if (!zones_.valid[week_].data[cell]) continue;
      const std::size_t row = cell / cols, col = cell % cols;
      const int start = zones_.week_starts[week_];
      SequenceSample s;
      s.features.resize(window * D);
      for (std::size_t k = 0; k < window; ++k) {
        const int day = start - static_cast<int>(window) + static_cast<int>(k);
        ctx_.assemble(row, col, day, variant_, std::span<float>(s.features).subspan(k * D, D));
      }
      s.label = zones_.labels[week_].data[cell];
      s.lat = static_cast<float>(ctx_.grid().lat_axis()[row]);
      s.lon = static_cast<float>(ctx_.grid().lon_axis()[col]);
      s.week_start_day = start;
      s.source_file_id = source_file_id(start, row / ctx_.config().tile_size, col / ctx_.config().tile_size);
      return s;
    }
    ++week_;
    cell_ = 0;
  }
  return std::nullopt;
}

std::vector<SequenceSample> build_sequences(const FeatureContext& ctx, const ActiveZoneSeries& zones, Variant variant) {
  SequenceBuilder b(ctx, zones, variant);
  std::vector<SequenceSample> out;
  while (auto s = b.next()) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json StandardizationStats::to_json() const { return {{"mean", mean}, {"std", std}}; }

StandardizationStats StandardizationStats::from_json(const nlohmann::json& j) {
  try {
    StandardizationStats s{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
    if (s.mean.size() != s.std.size()) throw Error(ErrorKind::FormatError, "standardization mean/std lengths differ");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad standardization stats: ") + e.what());
  }
}

StandardizationFitter::StandardizationFitter(const FeatureLayout& layout)
    : layout_(layout), mean_(layout.total(), 0.0), m2_(layout.total(), 0.0) {}

void StandardizationFitter::add(const SequenceSample& sample) {
  const std::size_t D = layout_.total();
  if (sample.features.size() % D != 0) throw Error(ErrorKind::LayoutMismatch, "sample width differs from layout");
  const std::size_t rows = sample.features.size() / D;
  for (std::size_t r = 0; r < rows; ++r) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    const float* x = sample.features.data() + r * D;
    for (std::size_t j = 0; j < D; ++j) {
      const double d = x[j] - mean_[j];
      mean_[j] += d * inv;
      m2_[j] += d * (x[j] - mean_[j]);
    }
  }
}

StandardizationStats StandardizationFitter::finish() const {
  if (count_ == 0) throw Error(ErrorKind::EmptyTrainingSet, "standardization needs at least one training sample");
  StandardizationStats s;
  s.mean = mean_;
  s.std.resize(mean_.size());
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    s.std[j] = std::max(kStdFloor, std::sqrt(std::max(0.0, m2_[j] / static_cast<double>(count_))));
  }
  const auto& onehot = layout_.block("season_onehot");
  for (std::size_t j = onehot.offset; j < onehot.offset + onehot.size; ++j) {
    s.mean[j] = 0.0;
    s.std[j] = 1.0;
  }
  return s;
}

StandardizationStats fit_standardization(std::span<const SequenceSample> train, const FeatureLayout& layout) {
  StandardizationFitter f(layout);
  for (const auto& s : train) f.add(s);
  return f.finish();
}

void apply_standardization(std::span<float> features, const StandardizationStats& stats) {
  const std::size_t D = stats.mean.size();
  if (D == 0 || features.size() % D != 0) throw Error(ErrorKind::LayoutMismatch, "features do not match standardization width");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::size_t j = i % D;
    features[i] = static_cast<float>((features[i] - stats.mean[j]) / stats.std[j]);
  }
}

SequenceSample apply_standardization(SequenceSample sample, const StandardizationStats& stats) {
  apply_standardization(sample.features, stats);
  return sample;
}

}  // namespace segn
