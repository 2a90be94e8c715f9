#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "core/field.hpp"
#include "core/geometry.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"
#include "core/voronoi.hpp"

namespace vf {

struct Camera {
  int width = 0;
  int height = 0;
  double camera_angle_x = 0.0;
  Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();

  double focal() const { return 0.5 * width / std::tan(0.5 * camera_angle_x); }
  Vec3 origin() const { return {c2w(0, 3), c2w(1, 3), c2w(2, 3)}; }
  Vec3 forward() const { return {-c2w(0, 2), -c2w(1, 2), -c2w(2, 2)}; }
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
  double near = 2.0;
  double far = 6.0;
  Rgb target{0.0, 0.0, 0.0};
};

// Pixel-centre rays in row-major pixel order, targets taken from the image.
std::vector<Ray> make_rays(const Camera& cam, const Image& target, double near, double far);
Ray make_ray(const Camera& cam, int x, int y, double near, double far);

// One uniform draw per equal-depth bin, ascending. The span variant takes one
// jitter in [0,1) per bin.
std::vector<double> stratified_ts(double near, double far, int n, std::span<const double> jitter);
std::vector<double> stratified_ts(double near, double far, int n, Rng& rng);
std::vector<double> midpoint_ts(double near, double far, int n);

struct CompositeResult {
  Rgb colour{0.0, 0.0, 0.0};
  double error = 0.0;    // channel-summed squared error vs the ray target
  double t_final = 1.0;  // residual transmittance behind the last sample
};

// Volume compositing with w_i = T_i (1 - exp(-sigma_i delta_i)) and the
// residual transmittance falling through to the background. Contribution
// weights are written to w_out.
CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> colour,
                          std::span<const double> delta, const Rgb& background, const Rgb& target,
                          std::span<double> w_out);

// Gradients of the composited colour w.r.t. per-sample density and colour,
// given the upstream gradient on the output colour.
void composite_backward(std::span<const double> sigma, std::span<const Rgb> colour,
                        std::span<const double> delta, const Rgb& background,
                        std::span<const double> w, double t_final, const Rgb& d_colour,
                        std::span<double> d_sigma_out, std::span<Rgb> d_colour_out);

enum class Jitter { kMidpoint, kStratified };

// Per-sample state for a batch of rays routed through the diagram, grouped by
// owning leaf so each net runs one dense batch. Retained activations make the
// training backward pass possible on the same structure.
struct SampleBatch {
  int samples_per_ray = 0;
  std::vector<Vec3> pos;
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<int> ray_of;  // sample -> ray
  std::vector<double> sigma;
  std::vector<Rgb> colour;
  std::vector<double> w;
  std::vector<int> leaf_of;  // sample -> index into groups

  struct LeafGroup {
    const VoronoiNode* node = nullptr;
    std::vector<int> samples;
    FieldBatch fb;
  };
  std::vector<LeafGroup> groups;

  size_t size() const { return pos.size(); }
};

// Builds sample positions for rays[begin, end) with the given jitter source.
SampleBatch build_sample_batch(std::span<const Ray> rays, int n, Jitter jitter, Rng* rng);

// Nested assignment of every sample, then per-leaf batched forward.
void route_and_forward(const VoronoiDiagram& root, std::span<const Ray> rays, SampleBatch& batch,
                       int threads);

// Composites every ray of the batch; w is written back per sample.
std::vector<CompositeResult> composite_batch(std::span<const Ray> rays, SampleBatch& batch,
                                             const Rgb& background, int threads);

CompositeResult render_ray(const Ray& ray, const VoronoiDiagram& root, int n,
                           const Rgb& background, Jitter jitter = Jitter::kMidpoint,
                           Rng* rng = nullptr);

struct RenderOptions {
  int samples_per_ray = 128;
  Rgb background{1.0, 1.0, 1.0};
  Jitter jitter = Jitter::kMidpoint;
  int threads = 1;
  bool cell_vis = false;  // colour pixels by the leaf owning the heaviest sample
  uint64_t seed = 0;      // only used for stratified jitter
};

struct RenderedView {
  Image image;
  double mse = 0.0;
  double psnr = 0.0;
};

// Renders every pixel and reports PSNR against the target image.
RenderedView render_view(const Camera& cam, const Image& target, const VoronoiDiagram& root,
                         double near, double far, const RenderOptions& opt);

double psnr_from_mse(double mse);

// Generic per-sample field for oracle rendering: returns (sigma, rgb) at a
// position along a view direction.
using FieldFn = std::function<void(const Vec3& pos, const Vec3& dir, double& sigma, Rgb& rgb)>;

// Midpoint-quadrature rendering of an arbitrary field with the same
// compositing path as the diagram renderer.
Image render_field_image(const FieldFn& field, const Camera& cam, int n, const Rgb& background,
                         double near, double far, int threads);

}  // namespace vf
