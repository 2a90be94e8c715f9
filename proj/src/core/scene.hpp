#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/geometry.hpp"
#include "core/image.hpp"
#include "core/render.hpp"

namespace vf {

struct View {
  Camera cam;
  Image image;  // alpha already composited over the dataset background
};

struct Dataset {
  std::vector<View> train;
  std::vector<View> test;
  Box3 scene_box;
  Rgb background{1.0, 1.0, 1.0};
  double near = 2.0;
  double far = 6.0;
};

// NeRF-synthetic layout: transforms_{train,test}.json with camera_angle_x and
// per-frame transform_matrix (4x4 row-major camera-to-world), images referenced
// by file_path. `downscale` is an integer box-filter factor.
Dataset load_dataset(const std::string& dir, int downscale, const Rgb& background);

void export_dataset(const Dataset& ds, const std::string& dir);

struct Primitive {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Vec3 centre;       // sphere centre or box centre
  Vec3 half_extent;  // sphere: radius in x; box: half extents
  double density = 0.0;
  Rgb albedo{1.0, 1.0, 1.0};
};

// Constant-density primitives; overlapping densities add and albedos blend by
// density.
struct AnalyticScene {
  std::vector<Primitive> prims;

  void eval(const Vec3& p, double& sigma, Rgb& rgb) const;
  FieldFn field() const;
};

// Dense midpoint-quadrature ground truth through the shared compositing path.
Image oracle_render(const AnalyticScene& scene, const Camera& cam, int n_dense,
                    const Rgb& background, double near, double far, int threads = 1);

struct FixtureOptions {
  int resolution = 128;
  int train_views = 64;
  int test_views = 16;
  int oracle_samples = 1024;
  Rgb background{1.0, 1.0, 1.0};
  int threads = 1;
};

// Known names: "blobs3", "cluster-uneven", "ship-like-multi-object".
std::pair<AnalyticScene, Dataset> make_fixture(const std::string& name, uint64_t seed,
                                               const FixtureOptions& opt = {});

Camera look_at_camera(const Vec3& position, const Vec3& target, int width, int height,
                      double camera_angle_x);

}  // namespace vf
