#include "core/render.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "core/error.hpp"
#include "core/threading.hpp"

namespace vf {

namespace {
// Caps transient per-leaf activation storage when batching rays.
constexpr int64_t kMaxSamplesInFlight = 1 << 15;
}  // namespace

double image_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw UsageError("image: MSE of differently sized images");
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

Ray make_ray(const Camera& cam, int x, int y, double near, double far) {
  const double f = cam.focal();
  const Eigen::Vector3d d_cam((x + 0.5 - 0.5 * cam.width) / f, -(y + 0.5 - 0.5 * cam.height) / f,
                              -1.0);
  const Eigen::Vector3d d_world = cam.c2w.topLeftCorner<3, 3>() * d_cam;
  Ray r;
  r.origin = cam.origin();
  r.dir = Vec3{d_world.x(), d_world.y(), d_world.z()}.normalized();
  r.near = near;
  r.far = far;
  return r;
}

std::vector<Ray> make_rays(const Camera& cam, const Image& target, double near, double far) {
  if (cam.width <= 0 || cam.height <= 0 || cam.camera_angle_x <= 0.0) {
    throw UsageError("render: invalid camera intrinsics");
  }
  if (!(near < far)) throw UsageError("render: near must be below far");
  if (!cam.c2w.allFinite() || std::abs(cam.c2w.determinant()) < 1e-12) {
    throw UsageError("render: camera pose is not invertible");
  }
  if (target.width != cam.width || target.height != cam.height) {
    throw UsageError("render: target image size does not match the camera");
  }
  std::vector<Ray> rays;
  rays.reserve(target.pixel_count());
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Ray r = make_ray(cam, x, y, near, far);
      r.target = target.pixel(x, y);
      rays.push_back(r);
    }
  }
  return rays;
}

std::vector<double> stratified_ts(double near, double far, int n, std::span<const double> jitter) {
  if (n < 1) throw UsageError("render: sample count must be >= 1");
  if (jitter.size() != static_cast<size_t>(n)) {
    throw UsageError("render: one jitter per bin required");
  }
  std::vector<double> ts(static_cast<size_t>(n));
  const double bin = (far - near) / n;
  for (int i = 0; i < n; ++i) ts[static_cast<size_t>(i)] = near + (i + jitter[static_cast<size_t>(i)]) * bin;
  return ts;
}

std::vector<double> stratified_ts(double near, double far, int n, Rng& rng) {
  std::vector<double> jitter(static_cast<size_t>(n));
  for (double& j : jitter) j = rng.next_double();
  return stratified_ts(near, far, n, jitter);
}

std::vector<double> midpoint_ts(double near, double far, int n) {
  return stratified_ts(near, far, n, std::vector<double>(static_cast<size_t>(n), 0.5));
}

CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> colour,
                          std::span<const double> delta, const Rgb& background, const Rgb& target,
                          std::span<double> w_out) {
  CompositeResult res;
  double transmittance = 1.0;
  for (size_t i = 0; i < sigma.size(); ++i) {
    const double absorb = 1.0 - std::exp(-sigma[i] * delta[i]);
    const double w = transmittance * absorb;
    w_out[i] = w;
    for (int c = 0; c < 3; ++c) res.colour[c] += w * colour[i][c];
    transmittance *= 1.0 - absorb;
  }
  res.t_final = transmittance;
  for (int c = 0; c < 3; ++c) res.colour[c] += transmittance * background[c];
  for (int c = 0; c < 3; ++c) {
    const double d = res.colour[c] - target[c];
    res.error += d * d;
  }
  return res;
}

void composite_backward(std::span<const double> sigma, std::span<const Rgb> colour,
                        std::span<const double> delta, const Rgb& background,
                        std::span<const double> w, double t_final, const Rgb& d_colour,
                        std::span<double> d_sigma_out, std::span<Rgb> d_colour_out) {
  const size_t n = sigma.size();
  // Transmittance in front of each sample.
  std::vector<double> trans(n);
  double t = 1.0;
  for (size_t i = 0; i < n; ++i) {
    trans[i] = t;
    t *= std::exp(-sigma[i] * delta[i]);
  }
  // Colour mass behind each sample, including the background term.
  Rgb behind{t_final * background[0], t_final * background[1], t_final * background[2]};
  for (size_t ii = n; ii-- > 0;) {
    const double a = std::exp(-sigma[ii] * delta[ii]);
    double ds = 0.0;
    for (int c = 0; c < 3; ++c) {
      ds += d_colour[c] * delta[ii] * (trans[ii] * a * colour[ii][c] - behind[c]);
      d_colour_out[ii][c] = d_colour[c] * w[ii];
      behind[c] += w[ii] * colour[ii][c];
    }
    d_sigma_out[ii] = ds;
  }
}

SampleBatch build_sample_batch(std::span<const Ray> rays, int n, Jitter jitter, Rng* rng) {
  SampleBatch batch;
  batch.samples_per_ray = n;
  const size_t total = rays.size() * static_cast<size_t>(n);
  batch.pos.resize(total);
  batch.t.resize(total);
  batch.delta.resize(total);
  batch.ray_of.resize(total);
  batch.sigma.assign(total, 0.0);
  batch.colour.assign(total, Rgb{0.0, 0.0, 0.0});
  batch.w.assign(total, 0.0);
  batch.leaf_of.assign(total, -1);

  for (size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    std::vector<double> ts;
    if (jitter == Jitter::kStratified) {
      if (rng == nullptr) throw UsageError("render: stratified sampling needs an RNG");
      ts = stratified_ts(ray.near, ray.far, n, *rng);
    } else {
      ts = midpoint_ts(ray.near, ray.far, n);
    }
    for (int k = 0; k < n; ++k) {
      const size_t i = r * static_cast<size_t>(n) + static_cast<size_t>(k);
      batch.t[i] = ts[static_cast<size_t>(k)];
      batch.delta[i] =
          (k + 1 < n) ? ts[static_cast<size_t>(k) + 1] - ts[static_cast<size_t>(k)]
                      : ray.far - ts[static_cast<size_t>(k)];
      batch.pos[i] = ray.origin + ray.dir * ts[static_cast<size_t>(k)];
      batch.ray_of[i] = static_cast<int>(r);
    }
  }
  return batch;
}

void route_and_forward(const VoronoiDiagram& root, std::span<const Ray> rays, SampleBatch& batch,
                       int threads) {
  const size_t total = batch.size();
  std::vector<const VoronoiNode*> leaf_ptr(total);
  parallel_for(static_cast<int64_t>(total), threads, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      leaf_ptr[static_cast<size_t>(i)] = assign_nested(batch.pos[static_cast<size_t>(i)], root).leaf;
    }
  });

  batch.groups.clear();
  std::unordered_map<const VoronoiNode*, int> group_of;
  for (size_t i = 0; i < total; ++i) {
    auto [it, inserted] = group_of.try_emplace(leaf_ptr[i], static_cast<int>(batch.groups.size()));
    if (inserted) {
      batch.groups.emplace_back();
      batch.groups.back().node = leaf_ptr[i];
    }
    batch.leaf_of[i] = it->second;
    batch.groups[static_cast<size_t>(it->second)].samples.push_back(static_cast<int>(i));
  }

  parallel_for(static_cast<int64_t>(batch.groups.size()), threads, [&](int64_t begin, int64_t end) {
    for (int64_t g = begin; g < end; ++g) {
      SampleBatch::LeafGroup& group = batch.groups[static_cast<size_t>(g)];
      if (group.node->net == nullptr) {
        throw NumericError("render: sample routed to a leaf without a network");
      }
      const FieldNet& net = *group.node->net;
      std::vector<Vec3> pos(group.samples.size());
      std::vector<Vec3> dir(group.samples.size());
      for (size_t k = 0; k < group.samples.size(); ++k) {
        const size_t i = static_cast<size_t>(group.samples[k]);
        pos[k] = batch.pos[i];
        dir[k] = rays[static_cast<size_t>(batch.ray_of[i])].dir;
      }
      group.fb.enc_pos = encode_positions(pos, net.arch.l_pos);
      group.fb.enc_dir = encode_directions(dir, net.arch.l_dir);
      field_forward(net, group.fb);
      for (size_t k = 0; k < group.samples.size(); ++k) {
        const size_t i = static_cast<size_t>(group.samples[k]);
        batch.sigma[i] = group.fb.sigma(static_cast<Eigen::Index>(k));
        batch.colour[i] = {group.fb.rgb(0, static_cast<Eigen::Index>(k)),
                           group.fb.rgb(1, static_cast<Eigen::Index>(k)),
                           group.fb.rgb(2, static_cast<Eigen::Index>(k))};
      }
    }
  });
}

std::vector<CompositeResult> composite_batch(std::span<const Ray> rays, SampleBatch& batch,
                                             const Rgb& background, int threads) {
  const int n = batch.samples_per_ray;
  std::vector<CompositeResult> out(rays.size());
  parallel_for(static_cast<int64_t>(rays.size()), threads, [&](int64_t begin, int64_t end) {
    for (int64_t r = begin; r < end; ++r) {
      const size_t base = static_cast<size_t>(r) * static_cast<size_t>(n);
      out[static_cast<size_t>(r)] = composite(
          std::span<const double>(batch.sigma).subspan(base, static_cast<size_t>(n)),
          std::span<const Rgb>(batch.colour).subspan(base, static_cast<size_t>(n)),
          std::span<const double>(batch.delta).subspan(base, static_cast<size_t>(n)), background,
          rays[static_cast<size_t>(r)].target,
          std::span<double>(batch.w).subspan(base, static_cast<size_t>(n)));
    }
  });
  return out;
}

CompositeResult render_ray(const Ray& ray, const VoronoiDiagram& root, int n,
                           const Rgb& background, Jitter jitter, Rng* rng) {
  SampleBatch batch = build_sample_batch(std::span<const Ray>(&ray, 1), n, jitter, rng);
  route_and_forward(root, std::span<const Ray>(&ray, 1), batch, 1);
  return composite_batch(std::span<const Ray>(&ray, 1), batch, background, 1)[0];
}

double psnr_from_mse(double mse) {
  if (mse <= 1e-20) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

namespace {

Rgb palette_colour(int ordinal) {
  const double h = std::fmod(0.6180339887498949 * (ordinal + 1), 1.0) * 6.0;
  const double s = 0.75, v = 0.95;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), u = v * (1.0 - s * (1.0 - f));
  switch (i % 6) {
    case 0: return {v, u, p};
    case 1: return {q, v, p};
    case 2: return {p, v, u};
    case 3: return {p, q, v};
    case 4: return {u, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

RenderedView render_view(const Camera& cam, const Image& target, const VoronoiDiagram& root,
                         double near, double far, const RenderOptions& opt) {
  const std::vector<Ray> rays = make_rays(cam, target, near, far);
  std::unordered_map<const VoronoiNode*, int> leaf_ordinal;
  if (opt.cell_vis) {
    const auto leaves = collect_leaves(root);
    for (size_t i = 0; i < leaves.size(); ++i) leaf_ordinal[leaves[i]] = static_cast<int>(i);
  }

  RenderedView out;
  out.image = Image(cam.width, cam.height);
  Rng rng(opt.seed);
  double se_sum = 0.0;
  const size_t chunk_rays = std::max<size_t>(
      1, static_cast<size_t>(kMaxSamplesInFlight / std::max(1, opt.samples_per_ray)));
  for (size_t begin = 0; begin < rays.size(); begin += chunk_rays) {
    const size_t count = std::min(chunk_rays, rays.size() - begin);
    const std::span<const Ray> chunk(rays.data() + begin, count);
    SampleBatch batch = build_sample_batch(chunk, opt.samples_per_ray, opt.jitter, &rng);
    route_and_forward(root, chunk, batch, opt.threads);
    const std::vector<CompositeResult> res = composite_batch(chunk, batch, opt.background,
                                                             opt.threads);
    for (size_t r = 0; r < count; ++r) {
      const size_t pix = begin + r;
      const int x = static_cast<int>(pix) % cam.width;
      const int y = static_cast<int>(pix) / cam.width;
      Rgb shade = res[r].colour;
      if (opt.cell_vis) {
        const size_t base = r * static_cast<size_t>(opt.samples_per_ray);
        size_t heaviest = base;
        for (size_t k = base; k < base + static_cast<size_t>(opt.samples_per_ray); ++k) {
          if (batch.w[k] > batch.w[heaviest]) heaviest = k;
        }
        const SampleBatch::LeafGroup& g =
            batch.groups[static_cast<size_t>(batch.leaf_of[heaviest])];
        shade = palette_colour(leaf_ordinal.at(g.node));
      }
      out.image.set(x, y, shade);
      se_sum += res[r].error;
    }
  }
  out.mse = se_sum / (3.0 * static_cast<double>(rays.size()));
  out.psnr = psnr_from_mse(out.mse);
  return out;
}

Image render_field_image(const FieldFn& field, const Camera& cam, int n, const Rgb& background,
                         double near, double far, int threads) {
  Image img(cam.width, cam.height);
  parallel_for(static_cast<int64_t>(img.pixel_count()), threads, [&](int64_t begin, int64_t end) {
    std::vector<double> sigma(static_cast<size_t>(n));
    std::vector<Rgb> colour(static_cast<size_t>(n));
    std::vector<double> delta(static_cast<size_t>(n));
    std::vector<double> w(static_cast<size_t>(n));
    for (int64_t pix = begin; pix < end; ++pix) {
      const int x = static_cast<int>(pix) % cam.width;
      const int y = static_cast<int>(pix) / cam.width;
      const Ray ray = make_ray(cam, x, y, near, far);
      const std::vector<double> ts = midpoint_ts(near, far, n);
      for (int k = 0; k < n; ++k) {
        const Vec3 p = ray.origin + ray.dir * ts[static_cast<size_t>(k)];
        field(p, ray.dir, sigma[static_cast<size_t>(k)], colour[static_cast<size_t>(k)]);
        delta[static_cast<size_t>(k)] = (k + 1 < n)
                                            ? ts[static_cast<size_t>(k) + 1] - ts[static_cast<size_t>(k)]
                                            : far - ts[static_cast<size_t>(k)];
      }
      const CompositeResult res =
          composite(sigma, colour, delta, background, Rgb{0.0, 0.0, 0.0}, w);
      img.set(x, y, res.colour);
    }
  });
  return img;
}

}  // namespace vf
