#pragma once

#include <span>
#include <string>
#include <vector>

#include "core/voronoi.hpp"

namespace vf {

// Ascii PLY point cloud: x y z, 8-bit red/green/blue, and a per-vertex
// "weight" property. Coordinates and weights are written with full double
// precision so export/import round-trips exactly.
void write_samples_ply(const std::string& path, std::span<const WeightedSample> samples);

// Centre sets as a plain x y z cloud.
void write_points_ply(const std::string& path, std::span<const Vec3> points);

std::vector<WeightedSample> read_samples_ply(const std::string& path);

}  // namespace vf
