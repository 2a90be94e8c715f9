#pragma once

#include <string>

#include "core/geometry.hpp"
#include "core/voronoi.hpp"

namespace vf {

struct ModelMeta {
  Box3 scene_box;
  Rgb background{1.0, 1.0, 1.0};
  double near = 2.0;
  double far = 6.0;
};

struct Model {
  VoronoiDiagram root;
  ModelMeta meta;
};

// Versioned binary blob: magic + version, render metadata, then the diagram
// tree with per-node centres (f64) and per-net architecture descriptors with
// little-endian f32 parameter arrays. File -> load -> save is byte exact.
void save_checkpoint(const std::string& path, const VoronoiDiagram& root, const ModelMeta& meta);
Model load_checkpoint(const std::string& path);

}  // namespace vf
