#pragma once

#include <filesystem>
#include <memory>

#include "segn/model.hpp"
#include "segn/nn/checkpoint.hpp"

namespace segn {

struct LoadedCheckpoint {
  std::unique_ptr<SegnModel<float>> model;
  /// Layout of the store the model was trained on; inputs must match it.
  FeatureLayout input_layout;
  StandardizationStats standardization;
  io::json header;
};

/// Writes config, input layout and standardization alongside the parameters.
/// `extra` is merged into the header (training summary, provenance).
void save_checkpoint(const std::filesystem::path& path, SegnModel<float>& model, const FeatureLayout& input_layout,
                     const StandardizationStats& standardization, io::json extra = io::json::object());

/// Throws FormatError, ChecksumError or LayoutMismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace segn
