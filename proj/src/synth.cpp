#include "segn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "segn/rng.hpp"

namespace segn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Mode {
  double kx, ky, phase, omega, amplitude;
};

struct Front {
  double nx, ny;    // unit normal in (col, row) index space
  double start;     // triangle-wave phase
  double speed;     // cells per day
  double to_weight; // sign/scale of the temperature step
};

double triangle(double u) {
  double m = std::fmod(u + 1.0, 4.0);
  if (m < 0) m += 4.0;
  return 1.0 - std::abs(m - 2.0);
}

std::vector<Mode> draw_modes(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<Mode> modes;
  for (int m = 0; m < 3; ++m) {
    Mode md{};
    md.kx = kTwoPi * (1.0 + static_cast<double>(rng.index(2))) / static_cast<double>(cols) * (rng.uniform() < 0.5 ? -1 : 1);
    md.ky = kTwoPi * (1.0 + static_cast<double>(rng.index(2))) / static_cast<double>(rows);
    md.phase = rng.uniform(0.0, kTwoPi);
    md.omega = kTwoPi / rng.uniform(90.0, 240.0);
    md.amplitude = rng.uniform(0.4, 0.8);
    modes.push_back(md);
  }
  return modes;
}

double eval_modes(const std::vector<Mode>& modes, double r, double c, double t) {
  double s = 0;
  for (const auto& m : modes) s += m.amplitude * std::cos(m.kx * c + m.ky * r + m.phase + m.omega * t);
  return s;
}

/// 5x5 box mean with clamped edges, rescaled back to unit variance.
Raster<double> smooth_noise(Rng& rng, std::size_t rows, std::size_t cols) {
  Raster<double> white(rows, cols);
  for (auto& x : white.data) x = rng.normal();
  Raster<double> out(rows, cols);
  const long R = static_cast<long>(rows), C = static_cast<long>(cols);
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      double s = 0;
      for (long dr = -2; dr <= 2; ++dr) {
        for (long dc = -2; dc <= 2; ++dc) {
          const long rr = std::clamp(r + dr, 0L, R - 1), cc = std::clamp(c + dc, 0L, C - 1);
          s += white(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s / 5.0;
    }
  }
  return out;
}

/// Normalized 3x3 Sobel magnitude with clamped edges. Kept local so the
/// label rule does not depend on the feature pipeline under test.
Raster<double> front_strength(const Raster<double>& f) {
  const long R = static_cast<long>(f.rows), C = static_cast<long>(f.cols);
  auto at = [&](long r, long c) {
    return f(static_cast<std::size_t>(std::clamp(r, 0L, R - 1)), static_cast<std::size_t>(std::clamp(c, 0L, C - 1)));
  };
  Raster<double> g(f.rows, f.cols);
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1) - at(r - 1, c - 1) -
                         2 * at(r, c - 1) - at(r + 1, c - 1)) / 8.0;
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1) - at(r - 1, c - 1) -
                         2 * at(r - 1, c) - at(r - 1, c + 1)) / 8.0;
      g(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::hypot(gx, gy);
    }
  }
  return g;
}

double seasonal(double t, double peak_day) { return std::cos(kTwoPi * (t - peak_day) / 365.0); }

}  // namespace

void SynthConfig::validate() const {
  if (rows < 3 || cols < 3) throw Error(ErrorKind::BadConfig, "synthetic grid needs rows, cols >= 3");
  if (days == 0 || days % 7 != 0) throw Error(ErrorKind::BadConfig, "synthetic days must be a positive multiple of 7");
  if (!(lat_max > lat_min) || !(lon_max > lon_min)) throw Error(ErrorKind::BadConfig, "bad synthetic bounds");
  if (signal_strength < 0 || signal_strength > 1) throw Error(ErrorKind::BadConfig, "signal_strength must be in [0,1]");
  if (missing_rate < 0 || missing_rate >= 0.9) throw Error(ErrorKind::BadConfig, "missing_rate must be in [0,0.9)");
  if (land_fraction < 0 || land_fraction >= 0.5) throw Error(ErrorKind::BadConfig, "land_fraction must be in [0,0.5)");
  if (front_width <= 0 || front_speed_min < 0 || front_speed_max < front_speed_min) {
    throw Error(ErrorKind::BadConfig, "bad front parameters");
  }
  if (gradient_percentile <= 0 || gradient_percentile >= 1) {
    throw Error(ErrorKind::BadConfig, "gradient_percentile must be in (0,1)");
  }
  if (first_week_start < 0) throw Error(ErrorKind::BadConfig, "first_week_start must be >= 0");
  parse_date(epoch_date);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"rows", c.rows},
                     {"cols", c.cols},
                     {"days", c.days},
                     {"lat_min", c.lat_min},
                     {"lat_max", c.lat_max},
                     {"lon_min", c.lon_min},
                     {"lon_max", c.lon_max},
                     {"epoch_date", c.epoch_date},
                     {"signal_strength", c.signal_strength},
                     {"missing_rate", c.missing_rate},
                     {"land_fraction", c.land_fraction},
                     {"front_count", c.front_count},
                     {"front_width", c.front_width},
                     {"front_speed_min", c.front_speed_min},
                     {"front_speed_max", c.front_speed_max},
                     {"front_chl_amplitude", c.front_chl_amplitude},
                     {"front_to_amplitude", c.front_to_amplitude},
                     {"to_lat_gradient", c.to_lat_gradient},
                     {"noise_scale", c.noise_scale},
                     {"noise_memory", c.noise_memory},
                     {"label_rule", c.label_rule == LabelRule::FrontTemperature ? "front_temperature" : "front_latitude"},
                     {"gradient_percentile", c.gradient_percentile},
                     {"to_band_lo", c.to_band_lo},
                     {"to_band_hi", c.to_band_hi},
                     {"lat_band_lo", c.lat_band_lo},
                     {"lat_band_hi", c.lat_band_hi},
                     {"first_week_start", c.first_week_start}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig d;
  try {
    c.rows = j.value("rows", d.rows);
    c.cols = j.value("cols", d.cols);
    c.days = j.value("days", d.days);
    c.lat_min = j.value("lat_min", d.lat_min);
    c.lat_max = j.value("lat_max", d.lat_max);
    c.lon_min = j.value("lon_min", d.lon_min);
    c.lon_max = j.value("lon_max", d.lon_max);
    c.epoch_date = j.value("epoch_date", d.epoch_date);
    c.signal_strength = j.value("signal_strength", d.signal_strength);
    c.missing_rate = j.value("missing_rate", d.missing_rate);
    c.land_fraction = j.value("land_fraction", d.land_fraction);
    c.front_count = j.value("front_count", d.front_count);
    c.front_width = j.value("front_width", d.front_width);
    c.front_speed_min = j.value("front_speed_min", d.front_speed_min);
    c.front_speed_max = j.value("front_speed_max", d.front_speed_max);
    c.front_chl_amplitude = j.value("front_chl_amplitude", d.front_chl_amplitude);
    c.front_to_amplitude = j.value("front_to_amplitude", d.front_to_amplitude);
    c.to_lat_gradient = j.value("to_lat_gradient", d.to_lat_gradient);
    c.noise_scale = j.value("noise_scale", d.noise_scale);
    c.noise_memory = j.value("noise_memory", d.noise_memory);
    const std::string rule = j.value("label_rule", std::string("front_temperature"));
    if (rule == "front_temperature") {
      c.label_rule = LabelRule::FrontTemperature;
    } else if (rule == "front_latitude") {
      c.label_rule = LabelRule::FrontLatitude;
    } else {
      throw Error(ErrorKind::BadConfig, "unknown label_rule '" + rule + "'");
    }
    c.gradient_percentile = j.value("gradient_percentile", d.gradient_percentile);
    c.to_band_lo = j.value("to_band_lo", d.to_band_lo);
    c.to_band_hi = j.value("to_band_hi", d.to_band_hi);
    c.lat_band_lo = j.value("lat_band_lo", d.lat_band_lo);
    c.lat_band_hi = j.value("lat_band_hi", d.lat_band_hi);
    c.first_week_start = j.value("first_week_start", d.first_week_start);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("bad synth config: ") + e.what());
  }
}

SyntheticData generate_synthetic_cube(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t H = cfg.rows, W = cfg.cols, T = cfg.days, cells = H * W;
  Rng structure_rng(derive_seed(seed, 1));
  Rng noise_rng(derive_seed(seed, 2));
  Rng cloud_rng(derive_seed(seed, 3));
  Rng label_rng(derive_seed(seed, 4));

  SyntheticData out;
  auto& cube = out.cube;
  cube.grid = GeoGrid::uniform(cfg.lat_min, cfg.lat_max, H, cfg.lon_min, cfg.lon_max, W);
  cube.epoch = parse_date(cfg.epoch_date);

  // land: north-east triangle covering land_fraction of the grid
  Mask sea(H, W, 1);
  const double delta = std::sqrt(2.0 * cfg.land_fraction);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const double u = static_cast<double>(r) / static_cast<double>(H - 1);
      const double v = static_cast<double>(c) / static_cast<double>(W - 1);
      if (cfg.land_fraction > 0 && u + v > 2.0 - delta) sea(r, c) = 0;
    }
  }

  std::array<std::vector<Mode>, kNumVariables> modes;
  for (auto& m : modes) m = draw_modes(structure_rng, H, W);

  std::vector<Front> fronts(cfg.front_count);
  for (auto& f : fronts) {
    const double theta = structure_rng.uniform(0.0, kTwoPi);
    f.nx = std::cos(theta);
    f.ny = std::sin(theta);
    f.start = structure_rng.uniform(-2.0, 2.0);
    f.speed = structure_rng.uniform(cfg.front_speed_min, cfg.front_speed_max);
    f.to_weight = structure_rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  const double half_span = 0.35 * static_cast<double>(std::min(H, W));
  const double r0 = 0.5 * static_cast<double>(H - 1), c0 = 0.5 * static_cast<double>(W - 1);

  // noise amplitude per variable in variable units
  const std::array<double, kNumVariables> noise_amp = {1.5, 0.02, 0.06, 0.012, 0.0, 0.006, 0.4};
  std::array<Raster<double>, kNumVariables> noise;
  for (auto& n : noise) n = Raster<double>(H, W, 0.0);
  const double rho = cfg.noise_memory, innov = std::sqrt(1.0 - rho * rho);
  for (std::size_t v = 0; v < kNumVariables; ++v) noise[v] = smooth_noise(noise_rng, H, W);

  std::vector<Raster<double>> chl_truth(T), to_truth(T);
  cube.days.resize(T);
  cube.fields.resize(T * kNumVariables);
  const float nan = std::numeric_limits<float>::quiet_NaN();

  for (std::size_t t = 0; t < T; ++t) {
    const double td = static_cast<double>(t);
    cube.days[t] = static_cast<int>(t);
    if (t > 0) {
      for (std::size_t v = 0; v < kNumVariables; ++v) {
        const auto fresh = smooth_noise(noise_rng, H, W);
        for (std::size_t i = 0; i < cells; ++i) noise[v].data[i] = rho * noise[v].data[i] + innov * fresh.data[i];
      }
    }

    std::array<Raster<double>, kNumVariables> truth;
    for (auto& f : truth) f = Raster<double>(H, W);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const double rd = static_cast<double>(r), cd = static_cast<double>(c);
        double chl_front = 0, to_front = 0;
        for (const auto& f : fronts) {
          const double pos = half_span * triangle(f.start + f.speed * td / half_span);
          const double s = f.nx * (cd - c0) + f.ny * (rd - r0) - pos;
          const double step = std::tanh(s / cfg.front_width);
          chl_front += step;
          to_front += f.to_weight * step;
        }
        const std::size_t i = r * W + c;
        auto mode = [&](VariableId v) { return eval_modes(modes[index_of(v)], rd, cd, td); };
        auto nz = [&](VariableId v) { return cfg.noise_scale * noise_amp[index_of(v)] * noise[index_of(v)].data[i]; };

        const double to = 27.5 + 1.5 * seasonal(td, 130) - cfg.to_lat_gradient * (rd - r0) + 0.4 * mode(VariableId::to) -
                          cfg.front_to_amplitude * to_front / static_cast<double>(std::max<std::size_t>(1, fronts.size())) +
                          nz(VariableId::to);
        const double chl = 0.9 + 0.15 * seasonal(td, 250) + 0.06 * mode(VariableId::chl) +
                           cfg.front_chl_amplitude * chl_front + nz(VariableId::chl);
        truth[index_of(VariableId::mlotst)].data[i] =
            40.0 + 12.0 * seasonal(td, 200) + 6.0 * mode(VariableId::mlotst) + nz(VariableId::mlotst);
        truth[index_of(VariableId::so)].data[i] =
            35.2 + 0.3 * seasonal(td, 100) + 0.2 * mode(VariableId::so) + 0.05 * chl_front + nz(VariableId::so);
        truth[index_of(VariableId::to)].data[i] = to;
        truth[index_of(VariableId::chl)].data[i] = chl;
        truth[index_of(VariableId::phyto)].data[i] =
            0.4 + 0.9 * (chl - 0.9) + 0.03 * mode(VariableId::phyto) + nz(VariableId::phyto);
        truth[index_of(VariableId::o2)].data[i] =
            205.0 - 4.0 * (to - 27.5) + 2.0 * mode(VariableId::o2) + nz(VariableId::o2);
      }
    }
    // chl_norm: chl min-max rescaled over sea cells of the day
    {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      const auto& chl = truth[index_of(VariableId::chl)];
      for (std::size_t i = 0; i < cells; ++i) {
        if (!sea.data[i]) continue;
        lo = std::min(lo, chl.data[i]);
        hi = std::max(hi, chl.data[i]);
      }
      const double span = hi > lo ? hi - lo : 1.0;
      for (std::size_t i = 0; i < cells; ++i) {
        truth[index_of(VariableId::chl_norm)].data[i] = std::clamp((chl.data[i] - lo) / span, 0.0, 1.0);
      }
    }

    // cloud gaps: random discs until the sea coverage reaches missing_rate
    Mask valid = sea;
    std::size_t sea_cells = 0;
    for (auto s : sea.data) sea_cells += s;
    std::size_t hidden = 0;
    const auto target = static_cast<std::size_t>(cfg.missing_rate * static_cast<double>(sea_cells));
    while (hidden < target) {
      const double cr = cloud_rng.uniform(0.0, static_cast<double>(H));
      const double cc = cloud_rng.uniform(0.0, static_cast<double>(W));
      const double rad = cloud_rng.uniform(1.5, 4.0);
      for (std::size_t r = 0; r < H && hidden < target; ++r) {
        for (std::size_t c = 0; c < W && hidden < target; ++c) {
          const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
          if (dr * dr + dc * dc <= rad * rad && valid(r, c)) {
            valid(r, c) = 0;
            ++hidden;
          }
        }
      }
    }

    for (auto v : kAllVariables) {
      auto& f = cube.field(v, t);
      f.variable = v;
      f.day = static_cast<int>(t);
      f.values = Raster<float>(H, W);
      f.valid = valid;
      for (std::size_t i = 0; i < cells; ++i) {
        f.values.data[i] = valid.data[i] ? static_cast<float>(truth[index_of(v)].data[i]) : nan;
      }
    }
    chl_truth[t] = std::move(truth[index_of(VariableId::chl)]);
    to_truth[t] = std::move(truth[index_of(VariableId::to)]);
  }

  // daily rule on the true (gap-free) fields
  std::vector<Mask> daily(T, Mask(H, W, 0));
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = front_strength(chl_truth[t]);
    std::vector<double> sea_g;
    for (std::size_t i = 0; i < cells; ++i) {
      if (sea.data[i]) sea_g.push_back(g.data[i]);
    }
    std::sort(sea_g.begin(), sea_g.end());
    const auto rank = static_cast<std::size_t>(std::ceil(cfg.gradient_percentile * static_cast<double>(sea_g.size())));
    const double threshold = sea_g[std::clamp<std::size_t>(rank, 1, sea_g.size()) - 1];
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t i = r * W + c;
        if (!sea.data[i] || !(g.data[i] > threshold)) continue;
        bool band = false;
        if (cfg.label_rule == LabelRule::FrontTemperature) {
          const double to = to_truth[t].data[i];
          band = to >= cfg.to_band_lo && to <= cfg.to_band_hi;
        } else {
          const double lat = cube.grid.lat_axis()[r];
          band = lat >= cfg.lat_band_lo && lat <= cfg.lat_band_hi;
        }
        daily[t].data[i] = band ? 1 : 0;
      }
    }
  }

  auto& zones = out.zones;
  zones.grid = cube.grid;
  for (int start = cfg.first_week_start; start + 7 <= static_cast<int>(T); start += 7) {
    Mask label(H, W, 0);
    for (std::size_t i = 0; i < cells; ++i) {
      bool all = sea.data[i] != 0;
      for (int d = start; d < start + 7 && all; ++d) all = daily[static_cast<std::size_t>(d)].data[i] != 0;
      label.data[i] = all ? 1 : 0;
    }
    zones.week_starts.push_back(start);
    zones.labels.push_back(std::move(label));
    zones.valid.push_back(sea);
  }

  if (cfg.signal_strength < 1.0) {
    std::size_t pos = 0, total = 0;
    for (std::size_t w = 0; w < zones.num_weeks(); ++w) {
      for (std::size_t i = 0; i < cells; ++i) {
        if (!zones.valid[w].data[i]) continue;
        pos += zones.labels[w].data[i];
        ++total;
      }
    }
    const double prevalence = total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0;
    for (std::size_t w = 0; w < zones.num_weeks(); ++w) {
      for (std::size_t i = 0; i < cells; ++i) {
        const double keep = label_rng.uniform();
        const double coin = label_rng.uniform();
        if (!zones.valid[w].data[i]) continue;
        if (keep >= cfg.signal_strength) zones.labels[w].data[i] = coin < prevalence ? 1 : 0;
      }
    }
  }
  return out;
}

}  // namespace segn
