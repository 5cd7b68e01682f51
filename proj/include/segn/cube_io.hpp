#pragma once

#include <filesystem>

#include "segn/container.hpp"
#include "segn/grid.hpp"

namespace segn {

void save_cube(const EnvironmentalCube& cube, const std::filesystem::path& path);
EnvironmentalCube load_cube(const std::filesystem::path& path);

void save_zones(const ActiveZoneSeries& zones, const std::filesystem::path& path);
ActiveZoneSeries load_zones(const std::filesystem::path& path);

io::json grid_to_json(const GeoGrid& grid);
GeoGrid grid_from_json(const io::json& j);

}  // namespace segn
