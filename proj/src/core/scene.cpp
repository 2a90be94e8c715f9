#include "core/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/error.hpp"
#include "core/png_io.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace vf {

namespace {

constexpr double kFixtureCameraAngleX = 0.6911112444778802;
constexpr double kFixtureRadius = 4.0;

Image downscale_image(const Image& src, int factor) {
  if (factor <= 1) return src;
  if (src.width % factor != 0 || src.height % factor != 0) {
    throw DataError("dataset: image size not divisible by downscale factor");
  }
  Image out(src.width / factor, src.height / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            acc += src.at(x * factor + dx, y * factor + dy, c);
          }
        }
        out.at(x, y, c) = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

std::vector<View> load_split(const fs::path& dir, const std::string& split, int downscale,
                             const Rgb& background) {
  const fs::path json_path = dir / ("transforms_" + split + ".json");
  std::ifstream in(json_path);
  if (!in) throw DataError("dataset: missing " + json_path.string());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset: malformed JSON in " + json_path.string() + ": " + e.what());
  }
  if (!doc.contains("camera_angle_x")) {
    throw DataError("dataset: missing field 'camera_angle_x' in " + json_path.string());
  }
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    throw DataError("dataset: missing field 'frames' in " + json_path.string());
  }
  const double angle_x = doc["camera_angle_x"].get<double>();

  std::vector<View> views;
  for (const auto& frame : doc["frames"]) {
    if (!frame.contains("file_path")) {
      throw DataError("dataset: frame missing field 'file_path' in " + json_path.string());
    }
    if (!frame.contains("transform_matrix")) {
      throw DataError("dataset: frame missing field 'transform_matrix' in " + json_path.string());
    }
    std::string rel = frame["file_path"].get<std::string>();
    if (fs::path(rel).extension().empty()) rel += ".png";
    const fs::path img_path = dir / fs::path(rel).lexically_normal();
    if (!fs::exists(img_path)) {
      throw DataError("dataset: missing image file " + img_path.string());
    }

    View v;
    v.image = downscale_image(read_png(img_path.string(), background), downscale);
    const auto& tm = frame["transform_matrix"];
    if (!tm.is_array() || tm.size() != 4) {
      throw DataError("dataset: transform_matrix must be 4x4 in " + json_path.string());
    }
    for (int r = 0; r < 4; ++r) {
      if (!tm[static_cast<size_t>(r)].is_array() || tm[static_cast<size_t>(r)].size() != 4) {
        throw DataError("dataset: transform_matrix must be 4x4 in " + json_path.string());
      }
      for (int c = 0; c < 4; ++c) {
        v.cam.c2w(r, c) = tm[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
      }
    }
    v.cam.width = v.image.width;
    v.cam.height = v.image.height;
    v.cam.camera_angle_x = angle_x;
    views.push_back(std::move(v));
  }

  if (!views.empty()) {
    const int w = views.front().image.width;
    const int h = views.front().image.height;
    for (const View& v : views) {
      if (v.image.width != w || v.image.height != h) {
        throw DataError("dataset: images in split '" + split + "' have mixed resolutions");
      }
    }
  }
  return views;
}

}  // namespace

Dataset load_dataset(const std::string& dir, int downscale, const Rgb& background) {
  if (downscale < 1) throw UsageError("dataset: downscale factor must be >= 1");
  Dataset ds;
  ds.background = background;
  ds.train = load_split(dir, "train", downscale, background);
  ds.test = load_split(dir, "test", downscale, background);
  return ds;
}

void export_dataset(const Dataset& ds, const std::string& dir) {
  const auto dump_split = [&](const std::vector<View>& views, const std::string& split) {
    const fs::path base(dir);
    fs::create_directories(base / split);
    nlohmann::json doc;
    doc["camera_angle_x"] = views.empty() ? 0.0 : views.front().cam.camera_angle_x;
    doc["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < views.size(); ++i) {
      const std::string stem = "./" + split + "/r_" + std::to_string(i);
      nlohmann::json frame;
      frame["file_path"] = stem;
      auto tm = nlohmann::json::array();
      for (int r = 0; r < 4; ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) row.push_back(views[i].cam.c2w(r, c));
        tm.push_back(row);
      }
      frame["transform_matrix"] = tm;
      doc["frames"].push_back(frame);
      write_png((base / split / ("r_" + std::to_string(i) + ".png")).string(), views[i].image);
    }
    std::ofstream out(base / ("transforms_" + split + ".json"));
    if (!out) throw DataError("dataset: cannot write transforms_" + split + ".json");
    out << doc.dump(2) << "\n";
  };
  dump_split(ds.train, "train");
  dump_split(ds.test, "test");
}

void AnalyticScene::eval(const Vec3& p, double& sigma, Rgb& rgb) const {
  sigma = 0.0;
  rgb = {0.0, 0.0, 0.0};
  for (const Primitive& prim : prims) {
    bool inside = false;
    if (prim.kind == Primitive::Kind::kSphere) {
      inside = squared_distance(p, prim.centre) <= prim.half_extent.x * prim.half_extent.x;
    } else {
      const Vec3 d = p - prim.centre;
      inside = std::abs(d.x) <= prim.half_extent.x && std::abs(d.y) <= prim.half_extent.y &&
               std::abs(d.z) <= prim.half_extent.z;
    }
    if (!inside) continue;
    sigma += prim.density;
    for (int c = 0; c < 3; ++c) rgb[c] += prim.density * prim.albedo[c];
  }
  if (sigma > 0.0) {
    for (int c = 0; c < 3; ++c) rgb[c] /= sigma;
  }
}

FieldFn AnalyticScene::field() const {
  return [this](const Vec3& p, const Vec3&, double& sigma, Rgb& rgb) { eval(p, sigma, rgb); };
}

Image oracle_render(const AnalyticScene& scene, const Camera& cam, int n_dense,
                    const Rgb& background, double near, double far, int threads) {
  if (n_dense < 1024) throw UsageError("oracle: quadrature needs at least 1024 samples per ray");
  return render_field_image(scene.field(), cam, n_dense, background, near, far, threads);
}

Camera look_at_camera(const Vec3& position, const Vec3& target, int width, int height,
                      double camera_angle_x) {
  const Vec3 back = (position - target).normalized();  // camera +Z
  Vec3 up{0.0, 0.0, 1.0};
  if (std::abs(back.dot(up)) > 0.999) up = {0.0, 1.0, 0.0};
  const Vec3 right = up.cross(back).normalized();
  const Vec3 cam_up = back.cross(right);

  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.camera_angle_x = camera_angle_x;
  cam.c2w = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    cam.c2w(r, 0) = right[r];
    cam.c2w(r, 1) = cam_up[r];
    cam.c2w(r, 2) = back[r];
    cam.c2w(r, 3) = position[r];
  }
  return cam;
}

namespace {

AnalyticScene build_scene(const std::string& name, Rng& rng) {
  AnalyticScene scene;
  const auto jitter = [&](double scale) { return rng.uniform(-scale, scale); };

  if (name == "blobs3") {
    // Three object groups of uneven complexity.
    const Vec3 c0{-0.55, -0.25, -0.10};
    for (int i = 0; i < 6; ++i) {
      Primitive p;
      p.centre = c0 + Vec3{jitter(0.16), jitter(0.16), jitter(0.16)};
      const double r = rng.uniform(0.05, 0.11);
      p.half_extent = {r, r, r};
      p.density = rng.uniform(45.0, 80.0);
      p.albedo = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
      scene.prims.push_back(p);
    }
    const Vec3 c1{0.50, 0.35, 0.00};
    for (int i = 0; i < 2; ++i) {
      Primitive p;
      p.centre = c1 + Vec3{jitter(0.12), jitter(0.12), jitter(0.12)};
      const double r = rng.uniform(0.12, 0.18);
      p.half_extent = {r, r, r};
      p.density = rng.uniform(40.0, 60.0);
      p.albedo = {0.85, rng.uniform(0.3, 0.6), 0.15};
      scene.prims.push_back(p);
    }
    Primitive box;
    box.kind = Primitive::Kind::kBox;
    box.centre = c1 + Vec3{0.0, 0.0, -0.22};
    box.half_extent = {0.20, 0.20, 0.05};
    box.density = 50.0;
    box.albedo = {0.2, 0.5, 0.9};
    scene.prims.push_back(box);
    Primitive big;
    big.centre = Vec3{0.05, -0.45, 0.45};
    big.half_extent = {0.28, 0.28, 0.28};
    big.density = 40.0;
    big.albedo = {0.4, 0.75, 0.45};
    scene.prims.push_back(big);
    return scene;
  }

  if (name == "cluster-uneven") {
    // A dense high-contrast cluster against one large flat sphere, so most of
    // the harvested mass lands on one side.
    const Rgb palette[4] = {{0.95, 0.1, 0.1}, {0.1, 0.9, 0.15}, {0.1, 0.2, 0.95}, {0.95, 0.9, 0.1}};
    for (int i = 0; i < 8; ++i) {
      Primitive p;
      p.centre = Vec3{-0.50, 0.0, 0.0} + Vec3{jitter(0.22), jitter(0.22), jitter(0.22)};
      const double r = rng.uniform(0.045, 0.095);
      p.half_extent = {r, r, r};
      p.density = rng.uniform(50.0, 90.0);
      p.albedo = palette[i % 4];
      scene.prims.push_back(p);
    }
    Primitive flat;
    flat.centre = {0.55, 0.0, 0.0};
    flat.half_extent = {0.32, 0.32, 0.32};
    flat.density = 45.0;
    flat.albedo = {0.55, 0.55, 0.58};
    scene.prims.push_back(flat);
    return scene;
  }

  if (name == "ship-like-multi-object") {
    Primitive hull;
    hull.kind = Primitive::Kind::kBox;
    hull.centre = {0.0, 0.0, -0.25};
    hull.half_extent = {0.45, 0.14, 0.07};
    hull.density = 60.0;
    hull.albedo = {0.45, 0.28, 0.12};
    scene.prims.push_back(hull);
    Primitive sea;
    sea.kind = Primitive::Kind::kBox;
    sea.centre = {0.0, 0.0, -0.42};
    sea.half_extent = {0.85, 0.85, 0.03};
    sea.density = 9.0;
    sea.albedo = {0.15, 0.3, 0.6};
    scene.prims.push_back(sea);
    for (int i = 0; i < 2; ++i) {
      Primitive mast;
      mast.kind = Primitive::Kind::kBox;
      mast.centre = {i == 0 ? -0.18 : 0.20, 0.0, 0.05};
      mast.half_extent = {0.02, 0.02, 0.30};
      mast.density = 70.0;
      mast.albedo = {0.3, 0.2, 0.1};
      scene.prims.push_back(mast);
      Primitive sail;
      sail.centre = {mast.centre.x, 0.0, 0.22 + jitter(0.04)};
      const double r = rng.uniform(0.10, 0.14);
      sail.half_extent = {r, r, r};
      sail.density = 35.0;
      sail.albedo = {0.92, 0.92, 0.85};
      scene.prims.push_back(sail);
    }
    Primitive cabin;
    cabin.kind = Primitive::Kind::kBox;
    cabin.centre = {0.02, 0.0, -0.12};
    cabin.half_extent = {0.10, 0.09, 0.06};
    cabin.density = 55.0;
    cabin.albedo = {0.7, 0.6, 0.3};
    scene.prims.push_back(cabin);
    return scene;
  }

  throw UsageError("fixture: unknown name '" + name + "'");
}

}  // namespace

std::pair<AnalyticScene, Dataset> make_fixture(const std::string& name, uint64_t seed,
                                               const FixtureOptions& opt) {
  Rng rng(seed ^ 0x5cb1f7a3d2e96c41ULL);
  const AnalyticScene scene = build_scene(name, rng);

  Dataset ds;
  ds.background = opt.background;
  ds.scene_box = Box3{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
  ds.near = 2.0;
  ds.far = 6.0;

  const auto make_views = [&](int count, std::vector<View>& out) {
    for (int i = 0; i < count; ++i) {
      const double az = rng.uniform(0.0, 2.0 * M_PI);
      const double el = std::asin(rng.uniform(std::sin(-0.35), std::sin(1.15)));
      const Vec3 pos{kFixtureRadius * std::cos(el) * std::cos(az),
                     kFixtureRadius * std::cos(el) * std::sin(az), kFixtureRadius * std::sin(el)};
      View v;
      v.cam = look_at_camera(pos, {0.0, 0.0, 0.0}, opt.resolution, opt.resolution,
                             kFixtureCameraAngleX);
      v.image = oracle_render(scene, v.cam, opt.oracle_samples, opt.background, ds.near, ds.far,
                              opt.threads);
      out.push_back(std::move(v));
    }
  };
  make_views(opt.train_views, ds.train);
  make_views(opt.test_views, ds.test);
  return {scene, ds};
}

}  // namespace vf
