#include "segn/checkpoint.hpp"

namespace segn {

void save_checkpoint(const std::filesystem::path& path, SegnModel<float>& model, const FeatureLayout& input_layout,
                     const StandardizationStats& standardization, io::json extra) {
  if (standardization.mean.size() != input_layout.total()) {
    throw Error(ErrorKind::LayoutMismatch, "standardization width differs from the input layout");
  }
  io::json header = extra.is_object() ? std::move(extra) : io::json::object();
  header["model"] = model.config();
  header["input_layout"] = input_layout.to_json();
  header["standardization"] = standardization.to_json();
  nn::save_parameters(path, model.parameters(), std::move(header));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const io::json h = nn::read_checkpoint_header(path);
  LoadedCheckpoint out;
  SegnConfig config;
  try {
    config = h.at("model").get<SegnConfig>();
    out.input_layout = FeatureLayout::from_json(h.at("input_layout"));
    out.standardization = StandardizationStats::from_json(h.at("standardization"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::BadConfig) throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
    throw;
  }
  if (out.standardization.mean.size() != out.input_layout.total()) {
    throw Error(ErrorKind::FormatError, path.string() + ": standardization width differs from the input layout");
  }
  out.model = std::make_unique<SegnModel<float>>(config);
  out.header = nn::load_parameters(path, out.model->parameters());
  return out;
}

}  // namespace segn
