// segn: command-line driver for the synth -> features -> split -> train ->
// eval / predict / compare pipeline. Every command writes its outputs and a
// manifest_<command>.json into the --out run directory.
#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "segn/checkpoint.hpp"
#include "segn/cube_io.hpp"
#include "segn/predict.hpp"
#include "segn/runtime.hpp"
#include "segn/store.hpp"
#include "segn/synth.hpp"
#include "segn/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace segn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files and manifests

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path.string());
}

json file_record(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 20);
  std::uint64_t bytes = 0;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = in.gcount();
    if (n <= 0) break;
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n));
    bytes += static_cast<std::uint64_t>(n);
  }
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
  return {{"path", path.string()}, {"bytes", bytes}, {"crc32", hex}};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  json config = json::object();
  json seeds = json::object();

  void input(const std::string& name, const fs::path& path) { inputs_[name] = file_record(path); }
  void output(const std::string& name, const fs::path& path) { outputs_[name] = file_record(path); }

  fs::path write(const fs::path& dir) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const json j = {{"command", command_},   {"config", config},   {"seeds", seeds},
                    {"inputs", inputs_},     {"outputs", outputs_}, {"started_at", started_},
                    {"wall_clock_seconds", secs}};
    const auto path = dir / ("manifest_" + command_ + ".json");
    write_json_file(path, j);
    return path;
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  std::string started_ = utc_now();
  json inputs_ = json::object();
  json outputs_ = json::object();
};

// ---------------------------------------------------------------------------
// Configuration: one JSON document with optional synth / features / model /
// train sections, materialized with defaults.

struct RunConfig {
  SynthConfig synth;
  FeatureConfig features;
  SegnConfig model;
  TrainConfig train;
};

template <typename T>
T section(const json& doc, const char* key) {
  if (!doc.contains(key)) return json::object().get<T>();
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("config section '") + key + "': " + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  json doc = json::object();
  if (!path.empty()) doc = read_json_file(path);
  if (!doc.is_object()) throw Error(ErrorKind::BadConfig, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "synth" && key != "features" && key != "model" && key != "train") {
      throw Error(ErrorKind::BadConfig, "unknown config section '" + key + "'");
    }
  }
  RunConfig c;
  c.synth = section<SynthConfig>(doc, "synth");
  c.features = section<FeatureConfig>(doc, "features");
  c.model = section<SegnConfig>(doc, "model");
  c.train = section<TrainConfig>(doc, "train");
  return c;
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw Error(ErrorKind::IoError, std::string(flag) + " " + path + " does not exist");
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Options {
  std::string config, out, variant, cube, zones, store, split, checkpoint, subset;
  std::optional<std::uint64_t> seed;
  std::optional<int> week;
  std::string path;
};

void cmd_synth(const Options& o) {
  const auto out = prepare_out(o.out);
  auto cfg = load_config(o.config);
  cfg.synth.validate();
  const std::uint64_t seed = o.seed.value_or(0);
  Manifest m("synth");
  if (!o.config.empty()) m.input("config", o.config);
  m.config = {{"synth", cfg.synth}};
  m.seeds = {{"seed", seed}};
  const auto data = generate_synthetic_cube(cfg.synth, seed);
  save_cube(data.cube, out / "cube.segn");
  save_zones(data.zones, out / "zones.segn");
  m.output("cube", out / "cube.segn");
  m.output("zones", out / "zones.segn");
  std::cout << m.write(out).string() << "\n";
}

void cmd_features(const Options& o) {
  require_file(o.cube, "--cube");
  require_file(o.zones, "--zones");
  const auto out = prepare_out(o.out);
  const auto cfg = load_config(o.config);
  const Variant variant = parse_variant(o.variant.empty() ? "geo" : o.variant);
  Manifest m("features");
  m.input("cube", o.cube);
  m.input("zones", o.zones);
  if (!o.config.empty()) m.input("config", o.config);
  m.config = {{"features", cfg.features}, {"variant", variant_name(variant)}};

  const auto cube = load_cube(o.cube);
  const auto zones = load_zones(o.zones);
  const FeatureContext ctx(cube, cfg.features);
  SequenceBuilder builder(ctx, zones, variant);
  const json metadata = {{"epoch_date", format_date(cube.epoch)},
                         {"variant", variant_name(variant)},
                         {"features", cfg.features},
                         {"grid", grid_to_json(cube.grid)}};
  const auto header = write_store(builder, out / "store.segn", kDefaultChunkSize, metadata);
  std::cerr << "wrote " << header.total_samples() << " sequences in " << header.chunks.size() << " chunks\n";
  m.output("store", out / "store.segn");
  std::cout << m.write(out).string() << "\n";
}

void cmd_split(const Options& o) {
  require_file(o.store, "--store");
  const auto out = prepare_out(o.out);
  const std::uint64_t seed = o.seed.value_or(0);
  Manifest m("split");
  m.input("store", o.store);
  m.seeds = {{"seed", seed}};
  const StoreReader store(o.store);
  const auto split = split_by_file(store.header().file_ids, seed);
  split.save(out / "split.json");
  std::cerr << "train " << split.count(Split::Train) << ", val " << split.count(Split::Val) << ", test "
            << split.count(Split::Test) << " files\n";
  m.output("split", out / "split.json");
  std::cout << m.write(out).string() << "\n";
}

// Applies --seed and --variant on top of the config file.
void apply_overrides(const Options& o, RunConfig& cfg, const StoreReader& store) {
  if (o.seed) {
    cfg.model.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (!o.variant.empty()) {
    cfg.model.variant = parse_variant(o.variant);
  } else {
    cfg.model.variant = store.header().layout.variant();
  }
  cfg.model.validate();
  cfg.train.validate();
}

void log_epoch(const std::string& prefix, const EpochRecord& r) {
  std::fprintf(stderr, "%sepoch %zu loss %.5f val_wf1 %.4f val_auc %.4f lr %.2e%s\n", prefix.c_str(), r.epoch,
               r.train_loss, r.val_weighted_f1, r.val_auc, r.lr, r.improved ? " *" : "");
}

void cmd_train(const Options& o) {
  require_file(o.store, "--store");
  require_file(o.split, "--split");
  const auto out = prepare_out(o.out);
  auto cfg = load_config(o.config);
  const StoreReader store(o.store);
  apply_overrides(o, cfg, store);
  const auto split = SplitAssignment::load(o.split);
  Manifest m("train");
  m.input("store", o.store);
  m.input("split", o.split);
  if (!o.config.empty()) m.input("config", o.config);
  m.config = {{"model", cfg.model}, {"train", cfg.train}};
  m.seeds = {{"model", cfg.model.seed}, {"train", cfg.train.seed}, {"split", split.seed}};

  SegnModel<float> model(cfg.model);
  std::cerr << "training " << variant_name(cfg.model.variant) << " model with " << model.parameter_count()
            << " parameters\n";
  const auto result = train(model, store, split, cfg.train, [](const EpochRecord& r) { log_epoch("", r); });
  save_checkpoint(out / "checkpoint.segn", model, store.header().layout, result.standardization,
                  {{"training", {{"best_epoch", result.best_epoch},
                                 {"best_val_weighted_f1", result.best_val_weighted_f1},
                                 {"train_config", cfg.train}}},
                  {"features", store.header().metadata.value("features", json(FeatureConfig{}))}});
  write_json_file(out / "history.json", result.history_json());
  m.output("checkpoint", out / "checkpoint.segn");
  m.output("history", out / "history.json");
  std::cout << m.write(out).string() << "\n";
}

void cmd_eval(const Options& o) {
  require_file(o.store, "--store");
  require_file(o.checkpoint, "--checkpoint");
  const auto out = prepare_out(o.out);
  Manifest m("eval");
  m.input("store", o.store);
  m.input("checkpoint", o.checkpoint);
  std::optional<SplitAssignment> split;
  if (!o.split.empty()) {
    require_file(o.split, "--split");
    split = SplitAssignment::load(o.split);
    m.input("split", o.split);
  }
  const std::string subset = o.subset.empty() ? (split ? "test" : "all") : o.subset;
  if (subset != "all" && !split) throw UsageError("--subset " + subset + " needs --split");
  m.config = {{"subset", subset}};

  const StoreReader store(o.store);
  auto ckpt = load_checkpoint(o.checkpoint);
  if (!(ckpt.input_layout == store.header().layout)) {
    throw Error(ErrorKind::LayoutMismatch, "checkpoint was trained on a " +
                                               std::string(variant_name(ckpt.input_layout.variant())) +
                                               "-layout store (" + std::to_string(ckpt.input_layout.total()) +
                                               " features); this store is " +
                                               std::string(variant_name(store.header().layout.variant())) + " (" +
                                               std::to_string(store.header().layout.total()) + ")");
  }
  const Metrics metrics = subset == "all"
                              ? evaluate(*ckpt.model, store, ckpt.standardization, nullptr, Split::Test)
                              : evaluate(*ckpt.model, store, ckpt.standardization, &*split, parse_split(subset));
  json j = metrics.to_json();
  j["variant"] = variant_name(ckpt.model->config().variant);
  j["subset"] = subset;
  write_json_file(out / "metrics.json", j);
  std::cerr << "weighted_f1 " << metrics.weighted_f1 << " auc " << metrics.auc << " on " << metrics.samples
            << " samples\n";
  m.output("metrics", out / "metrics.json");
  std::cout << m.write(out).string() << "\n";
}

void cmd_predict(const Options& o) {
  require_file(o.cube, "--cube");
  require_file(o.checkpoint, "--checkpoint");
  if (!o.week) throw UsageError("--week is required");
  const auto out = prepare_out(o.out);
  Manifest m("predict");
  m.input("cube", o.cube);
  m.input("checkpoint", o.checkpoint);
  m.config = {{"week", *o.week}};

  const auto cube = load_cube(o.cube);
  auto ckpt = load_checkpoint(o.checkpoint);
  FeatureConfig fc;
  if (ckpt.header.contains("features")) fc = ckpt.header["features"].get<FeatureConfig>();
  Mask cells = observed_cells(cube);
  if (!o.zones.empty()) {
    require_file(o.zones, "--zones");
    m.input("zones", o.zones);
    const auto zones = load_zones(o.zones);
    for (std::size_t w = 0; w < zones.num_weeks(); ++w) {
      if (zones.week_starts[w] == *o.week) cells = zones.valid[w];
    }
  }
  const FeatureContext ctx(cube, fc);
  const auto map = predict_week(*ckpt.model, ctx, cells, *o.week, ckpt.input_layout, ckpt.standardization);
  map.write_geojson(out / "map.geojson");
  map.write_csv(out / "map.csv");
  std::size_t active = 0;
  for (const auto& c : map.cells) active += c.decision ? 1 : 0;
  std::cerr << map.cells.size() << " cells, " << active << " predicted active\n";
  m.output("geojson", out / "map.geojson");
  m.output("csv", out / "map.csv");
  std::cout << m.write(out).string() << "\n";
}

void cmd_compare(const Options& o) {
  require_file(o.store, "--store");
  require_file(o.split, "--split");
  const auto out = prepare_out(o.out);
  auto cfg = load_config(o.config);
  const StoreReader store(o.store);
  if (o.seed) {
    cfg.model.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  cfg.train.validate();
  const auto split = SplitAssignment::load(o.split);
  Manifest m("compare");
  m.input("store", o.store);
  m.input("split", o.split);
  if (!o.config.empty()) m.input("config", o.config);
  m.config = {{"model", cfg.model}, {"train", cfg.train}};
  m.seeds = {{"model", cfg.model.seed}, {"train", cfg.train.seed}, {"split", split.seed}};
  const auto report = compare_variants(store, split, cfg.model, cfg.train, [](Variant v, const EpochRecord& r) {
    log_epoch(std::string(variant_name(v)) + " ", r);
  });
  write_json_file(out / "compare.json", report.to_json());
  m.output("report", out / "compare.json");
  std::cout << m.write(out).string() << "\n";
}

json summarize_container(const fs::path& path) {
  const io::ContainerReader reader(path);
  const auto& h = reader.header();
  const std::string kind = io::container_kind(h);
  json s = {{"path", path.string()}, {"kind", kind}, {"format_version", reader.version()},
            {"file_bytes", reader.file_size()}};
  if (kind == "store") {
    const StoreReader store(path);
    const auto& sh = store.header();
    std::vector<std::size_t> chunk_counts;
    for (const auto& c : sh.chunks) chunk_counts.push_back(c.sample_count);
    std::array<std::size_t, 2> labels{};
    store.for_each_chunk([&](std::vector<SequenceSample>& chunk) {
      for (const auto& x : chunk) ++labels[x.label];
    });
    s["total_samples"] = sh.total_samples();
    s["chunks"] = chunk_counts;
    s["chunk_size"] = sh.chunk_size;
    s["layout"] = sh.layout.to_json();
    s["file_ids"] = sh.file_ids.size();
    s["label_counts"] = labels;
    s["metadata"] = sh.metadata;
  } else if (kind == "cube") {
    for (const char* k : {"epoch_date", "first_day", "num_days", "variables", "dtype"}) s[k] = h.at(k);
    s["grid"] = {{"rows", h["grid"]["lat"].size()}, {"cols", h["grid"]["lon"].size()}};
  } else if (kind == "zones") {
    s["weeks"] = h["week_starts"].size();
    s["grid"] = {{"rows", h["grid"]["lat"].size()}, {"cols", h["grid"]["lon"].size()}};
    if (!h["week_starts"].empty()) {
      s["first_week_start"] = h["week_starts"].front();
      s["last_week_start"] = h["week_starts"].back();
    }
  } else if (kind == "checkpoint") {
    const auto ckpt = load_checkpoint(path);
    s["model"] = ckpt.model->config();
    s["param_count"] = ckpt.model->parameter_count();
    s["blocks"] = ckpt.model->block_parameter_counts();
    s["input_layout"] = ckpt.input_layout.to_json();
    if (h.contains("training")) s["training"] = h["training"];
  } else {
    s["header"] = h;
  }
  return s;
}

void cmd_inspect(const Options& o) {
  require_file(o.path, "path");
  json summary;
  std::ifstream in(o.path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::equal(magic, magic + 4, io::kMagic)) {
    summary = summarize_container(o.path);
  } else {
    const json j = read_json_file(o.path);
    summary = {{"path", o.path}, {"kind", j.is_object() ? j.value("kind", "json") : "json"}};
    if (summary["kind"] == "split") {
      const auto split = SplitAssignment::from_json(j);
      summary["seed"] = split.seed;
      summary["files"] = {{"train", split.count(Split::Train)},
                          {"val", split.count(Split::Val)},
                          {"test", split.count(Split::Test)}};
    } else if (j.is_object()) {
      std::vector<std::string> keys;
      for (const auto& [k, v] : j.items()) keys.push_back(k);
      summary["keys"] = keys;
    }
  }
  std::cout << summary.dump(2) << "\n";
  if (!o.out.empty()) {
    const auto out = prepare_out(o.out);
    Manifest m("inspect");
    m.input("path", o.path);
    m.config = {{"summary", summary}};
    m.write(out);
  }
}

void report(const std::string& kind, const std::string& message) {
  std::string escaped;
  for (char c : message) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += c == '\n' ? ' ' : c;
  }
  std::cerr << "error: kind=" << kind << " message=\"" << escaped << "\"\n";
}

}  // namespace

int main(int argc, char** argv) {
  configure_runtime();
  CLI::App app{"segn: fishing-zone forecasting pipeline"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config, bool seed) {
    sub->add_option("--out", o.out, "Run directory for outputs");
    if (config) sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    if (seed) sub->add_option("--seed", o.seed, "Seed (u64)");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cube and weekly zones");
  common(synth, true, true);

  auto* features = app.add_subcommand("features", "Build the sequence store from a cube and zones");
  common(features, true, false);
  features->add_option("--cube", o.cube, "Environmental cube");
  features->add_option("--zones", o.zones, "Active-zone series");
  features->add_option("--variant", o.variant, "geo|base (default geo)");

  auto* split = app.add_subcommand("split", "Assign store files to train/val/test");
  common(split, false, true);
  split->add_option("--store", o.store, "Sequence store");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(train_cmd, true, true);
  train_cmd->add_option("--store", o.store, "Sequence store");
  train_cmd->add_option("--split", o.split, "Split assignment");
  train_cmd->add_option("--variant", o.variant, "geo|base (default: store layout)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a store");
  common(eval, false, false);
  eval->add_option("--store", o.store, "Sequence store");
  eval->add_option("--split", o.split, "Split assignment");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint");
  eval->add_option("--subset", o.subset, "train|val|test|all (default test with --split, else all)");

  auto* predict = app.add_subcommand("predict", "Write a weekly prediction map");
  common(predict, false, false);
  predict->add_option("--cube", o.cube, "Environmental cube");
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint");
  predict->add_option("--week", o.week, "Week start day index");
  predict->add_option("--zones", o.zones, "Optional zone series supplying the week's valid-cell mask");

  auto* compare = app.add_subcommand("compare", "Train and test both variants on one split");
  common(compare, true, true);
  compare->add_option("--store", o.store, "Geo-layout sequence store");
  compare->add_option("--split", o.split, "Split assignment");

  auto* inspect = app.add_subcommand("inspect", "Summarize any artifact file");
  inspect->add_option("path", o.path, "Artifact path")->required();
  inspect->add_option("--out", o.out, "Optional run directory for a manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("Usage", e.what());
    return 1;
  }

  const std::map<CLI::App*, void (*)(const Options&)> commands = {
      {synth, cmd_synth}, {features, cmd_features}, {split, cmd_split},     {train_cmd, cmd_train},
      {eval, cmd_eval},   {predict, cmd_predict},   {compare, cmd_compare}, {inspect, cmd_inspect}};
  try {
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) fn(o);
    }
  } catch (const UsageError& e) {
    report("Usage", e.what());
    return 1;
  } catch (const Error& e) {
    report(std::string(error_kind_name(e.kind())), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    report("Internal", e.what());
    return 4;
  }
  return 0;
}
