#pragma once

#include <filesystem>

#include "segn/container.hpp"
#include "segn/nn/tensor.hpp"

namespace segn::nn {

/// Writes parameters as one CRC-checked f32 section. The header is `extra`
/// plus kind "checkpoint", the parameter table and the section record.
void save_parameters(const std::filesystem::path& path, const ParameterList<float>& params,
                     io::json extra = io::json::object());

/// Header of a checkpoint file without touching the payload.
io::json read_checkpoint_header(const std::filesystem::path& path);

/// Loads values into params, matched by name. Throws FormatError when the file
/// is not a checkpoint, LayoutMismatch when a name or shape disagrees, and
/// ChecksumError on a corrupted payload. Returns the header.
io::json load_parameters(const std::filesystem::path& path, const ParameterList<float>& params);

}  // namespace segn::nn
