#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "core/field.hpp"
#include "core/metrics.hpp"
#include "core/render.hpp"
#include "core/rng.hpp"

using namespace vf;

namespace {

// Independent scalar compositing oracle: cumulative product form.
struct CompositeOracle {
  Rgb colour{0, 0, 0};
  std::vector<double> w;
  double t_final = 1.0;
};

CompositeOracle composite_oracle(const std::vector<double>& sigma, const std::vector<Rgb>& c,
                                 const std::vector<double>& delta, const Rgb& bg) {
  CompositeOracle out;
  out.w.resize(sigma.size());
  for (size_t i = 0; i < sigma.size(); ++i) {
    double t_i = 1.0;
    for (size_t j = 0; j < i; ++j) t_i *= std::exp(-sigma[j] * delta[j]);
    out.w[i] = t_i * (1.0 - std::exp(-sigma[i] * delta[i]));
    for (int ch = 0; ch < 3; ++ch) out.colour[ch] += out.w[i] * c[i][ch];
  }
  for (size_t j = 0; j < sigma.size(); ++j) out.t_final *= std::exp(-sigma[j] * delta[j]);
  for (int ch = 0; ch < 3; ++ch) out.colour[ch] += out.t_final * bg[ch];
  return out;
}

// A net whose outputs are constant: zero everything, set head biases.
std::shared_ptr<FieldNet> constant_net(const Rgb& colour, double sigma_target) {
  FieldArch arch;
  arch.width = 8;
  arch.depth = 2;
  arch.l_pos = 2;
  arch.l_dir = 1;
  FieldNet net = FieldNet::zeros(arch);
  // softplus(b + shift) = sigma_target  =>  b = log(exp(sigma)-1) - shift
  net.layers[arch.depth].b(0) = std::log(std::expm1(sigma_target)) - kDensityShift;
  for (int ch = 0; ch < 3; ++ch) {
    const double p = std::clamp(colour[static_cast<size_t>(ch)], 1e-9, 1.0 - 1e-9);
    net.layers[arch.depth + 2].b(ch) = std::log(p / (1.0 - p));
  }
  return std::make_shared<FieldNet>(std::move(net));
}

Camera test_camera(int res = 9) {
  Camera cam;
  cam.width = res;
  cam.height = res;
  cam.camera_angle_x = 0.8;
  cam.c2w = Eigen::Matrix4d::Identity();
  return cam;
}

}  // namespace

TEST_CASE("make_rays geometry") {
  Camera cam = test_camera(9);
  cam.c2w(0, 3) = 0.5;  // origin offset
  Image img(9, 9);
  const std::vector<Ray> rays = make_rays(cam, img, 2.0, 6.0);
  REQUIRE(rays.size() == 81);

  SUBCASE("identity pose: origin and centre-pixel direction") {
    const Ray& centre = rays[4 * 9 + 4];
    CHECK(centre.origin.x == 0.5);
    CHECK(centre.origin.y == 0.0);
    // centre pixel looks along the camera forward axis (-Z for identity)
    CHECK(centre.dir.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(centre.dir.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(centre.dir.z == doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("corner pixels match the closed-form frustum") {
    const double f = 0.5 * 9 / std::tan(0.5 * cam.camera_angle_x);
    for (const auto& [x, y] : {std::pair{0, 0}, {8, 0}, {0, 8}, {8, 8}}) {
      const Ray& r = rays[static_cast<size_t>(y) * 9 + static_cast<size_t>(x)];
      Vec3 expect{(x + 0.5 - 4.5) / f, -(y + 0.5 - 4.5) / f, -1.0};
      expect = expect.normalized();
      CHECK(r.dir.x == doctest::Approx(expect.x).epsilon(1e-12));
      CHECK(r.dir.y == doctest::Approx(expect.y).epsilon(1e-12));
      CHECK(r.dir.z == doctest::Approx(expect.z).epsilon(1e-12));
    }
  }

  SUBCASE("degenerate pose is rejected") {
    Camera bad = cam;
    bad.c2w.row(2).setZero();
    CHECK_THROWS_AS(make_rays(bad, img, 2.0, 6.0), UsageError);
    CHECK_THROWS_AS(make_rays(cam, img, 6.0, 2.0), UsageError);
  }
}

TEST_CASE("stratified sampling") {
  SUBCASE("single sample lies in range") {
    Rng rng(1);
    const std::vector<double> ts = stratified_ts(2.0, 6.0, 1, rng);
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] >= 2.0);
    CHECK(ts[0] < 6.0);
  }

  SUBCASE("midpoint jitter gives the exact midpoint ladder") {
    const std::vector<double> ts = midpoint_ts(2.0, 6.0, 4);
    CHECK(ts == std::vector<double>{2.5, 3.5, 4.5, 5.5});
  }

  SUBCASE("draws are sorted and one per bin") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const std::vector<double> ts = stratified_ts(1.0, 3.0, 16, rng);
      const double bin = 2.0 / 16;
      for (int i = 0; i < 16; ++i) {
        CHECK(ts[static_cast<size_t>(i)] >= 1.0 + i * bin);
        CHECK(ts[static_cast<size_t>(i)] < 1.0 + (i + 1) * bin);
      }
      CHECK(std::is_sorted(ts.begin(), ts.end()));
    }
  }

  SUBCASE("per-bin distribution is uniform (chi-squared at the 1% level)") {
    Rng rng(3);
    const int n_bins = 4;
    const int draws = 100000;
    const int cells = 10;
    std::vector<std::vector<int>> hist(n_bins, std::vector<int>(cells, 0));
    for (int d = 0; d < draws; ++d) {
      const std::vector<double> ts = stratified_ts(0.0, 1.0, n_bins, rng);
      for (int b = 0; b < n_bins; ++b) {
        const double u = (ts[static_cast<size_t>(b)] - b / double(n_bins)) * n_bins;
        hist[static_cast<size_t>(b)][static_cast<size_t>(std::min(cells - 1, int(u * cells)))]++;
      }
    }
    // 9 degrees of freedom, upper 1% critical value
    const double crit = 21.666;
    for (int b = 0; b < n_bins; ++b) {
      const double expect = draws / double(cells);
      double chi2 = 0.0;
      for (int c = 0; c < cells; ++c) {
        const double d = hist[static_cast<size_t>(b)][static_cast<size_t>(c)] - expect;
        chi2 += d * d / expect;
      }
      CHECK(chi2 < crit);
    }
  }
}

TEST_CASE("composite basics") {
  const Rgb bg{1.0, 1.0, 1.0};

  SUBCASE("vacuum: background colour, zero weights") {
    std::vector<double> sigma(8, 0.0), delta(8, 0.1), w(8);
    std::vector<Rgb> colour(8, Rgb{0.3, 0.4, 0.5});
    const CompositeResult res = composite(sigma, colour, delta, bg, Rgb{1, 1, 1}, w);
    CHECK(res.colour == bg);
    CHECK(res.t_final == 1.0);
    CHECK(res.error == 0.0);
    for (double wi : w) CHECK(wi == 0.0);
  }

  SUBCASE("opaque front sample takes the whole ray") {
    std::vector<double> sigma{1e9, 5.0, 2.0}, delta{0.1, 0.1, 0.1}, w(3);
    std::vector<Rgb> colour{{0.9, 0.1, 0.2}, {0.5, 0.5, 0.5}, {0.1, 0.1, 0.1}};
    const CompositeResult res = composite(sigma, colour, delta, bg, Rgb{0, 0, 0}, w);
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.colour[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(res.t_final == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("matches the scalar oracle on random rays; weights partition unity") {
    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(32));
      std::vector<double> sigma(static_cast<size_t>(n)), delta(static_cast<size_t>(n)),
          w(static_cast<size_t>(n));
      std::vector<Rgb> colour(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        sigma[static_cast<size_t>(i)] = std::exp(rng.uniform(-3.0, 4.0));
        delta[static_cast<size_t>(i)] = rng.uniform(0.001, 0.2);
        colour[static_cast<size_t>(i)] = {rng.next_double(), rng.next_double(), rng.next_double()};
      }
      const CompositeResult res = composite(sigma, colour, delta, bg, Rgb{0, 0, 0}, w);
      const CompositeOracle oracle = composite_oracle(sigma, colour, delta, bg);

      double w_sum = 0.0;
      for (int i = 0; i < n; ++i) {
        CHECK(w[static_cast<size_t>(i)] == doctest::Approx(oracle.w[static_cast<size_t>(i)]).epsilon(1e-9));
        CHECK(w[static_cast<size_t>(i)] >= 0.0);
        CHECK(w[static_cast<size_t>(i)] <= 1.0);
        w_sum += w[static_cast<size_t>(i)];
      }
      CHECK(std::abs(w_sum + res.t_final - 1.0) < 1e-6);
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(res.colour[ch] == doctest::Approx(oracle.colour[ch]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("composite_backward matches finite differences") {
  Rng rng(5);
  const Rgb bg{1.0, 1.0, 1.0};
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(12));
    std::vector<double> sigma(static_cast<size_t>(n)), delta(static_cast<size_t>(n)),
        w(static_cast<size_t>(n));
    std::vector<Rgb> colour(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      sigma[static_cast<size_t>(i)] = std::exp(rng.uniform(-2.0, 2.5));
      delta[static_cast<size_t>(i)] = rng.uniform(0.01, 0.15);
      colour[static_cast<size_t>(i)] = {rng.next_double(), rng.next_double(), rng.next_double()};
    }
    const Rgb target{rng.next_double(), rng.next_double(), rng.next_double()};
    const CompositeResult base = composite(sigma, colour, delta, bg, target, w);

    // Upstream of E = sum_ch (C_ch - target_ch)^2.
    Rgb up;
    for (int ch = 0; ch < 3; ++ch) up[ch] = 2.0 * (base.colour[ch] - target[ch]);
    std::vector<double> d_sigma(static_cast<size_t>(n));
    std::vector<Rgb> d_colour(static_cast<size_t>(n));
    composite_backward(sigma, colour, delta, bg, w, base.t_final, up, d_sigma, d_colour);

    const double eps = 1e-6;
    std::vector<double> w_tmp(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      {
        std::vector<double> s2 = sigma;
        s2[static_cast<size_t>(i)] += eps;
        const double e_up = composite(s2, colour, delta, bg, target, w_tmp).error;
        s2[static_cast<size_t>(i)] -= 2 * eps;
        const double e_dn = composite(s2, colour, delta, bg, target, w_tmp).error;
        const double fd = (e_up - e_dn) / (2 * eps);
        CHECK(d_sigma[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-4));
      }
      for (int ch = 0; ch < 3; ++ch) {
        std::vector<Rgb> c2 = colour;
        c2[static_cast<size_t>(i)][ch] += eps;
        const double e_up = composite(sigma, c2, delta, bg, target, w_tmp).error;
        c2[static_cast<size_t>(i)][ch] -= 2 * eps;
        const double e_dn = composite(sigma, c2, delta, bg, target, w_tmp).error;
        const double fd = (e_up - e_dn) / (2 * eps);
        CHECK(d_colour[static_cast<size_t>(i)][ch] ==
              doctest::Approx(fd).epsilon(1e-4).scale(1.0));
      }
    }
  }
}

TEST_CASE("render_ray routes per cell") {
  const Rgb bg{1.0, 1.0, 1.0};
  Ray ray;
  ray.origin = {0, 0, 4};
  ray.dir = {0, 0, -1};
  ray.near = 2.0;
  ray.far = 6.0;
  ray.target = {0, 0, 0};

  SUBCASE("single-cell diagram equals evaluating that net directly") {
    VoronoiDiagram d = make_diagram({{0, 0, 0}});
    d.cells[0].net = std::make_shared<FieldNet>(FieldNet::random(FieldArch{16, 2, 4, 2}, 8));
    const CompositeResult via_diagram = render_ray(ray, d, 32, bg);

    // direct evaluation through the same compositing
    const std::vector<double> ts = midpoint_ts(2.0, 6.0, 32);
    std::vector<double> sigma(32), delta(32), w(32);
    std::vector<Rgb> colour(32);
    for (int i = 0; i < 32; ++i) {
      const Vec3 p = ray.origin + ray.dir * ts[static_cast<size_t>(i)];
      const FieldOutput out = forward_point(*d.cells[0].net, p, ray.dir);
      sigma[static_cast<size_t>(i)] = out.sigma;
      colour[static_cast<size_t>(i)] = out.colour;
      delta[static_cast<size_t>(i)] =
          i + 1 < 32 ? ts[static_cast<size_t>(i) + 1] - ts[static_cast<size_t>(i)]
                     : 6.0 - ts[static_cast<size_t>(i)];
    }
    const CompositeResult direct = composite(sigma, colour, delta, bg, ray.target, w);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(via_diagram.colour[ch] == doctest::Approx(direct.colour[ch]).epsilon(1e-9));
    }
  }

  SUBCASE("two constant cells match the closed-form oracle") {
    // Cells split at z=0: front half (z>0) thin red fog, back half blue fog.
    VoronoiDiagram d = make_diagram({{0, 0, 1.0}, {0, 0, -1.0}});
    const Rgb red{0.8, 0.1, 0.1}, blue{0.1, 0.2, 0.9};
    d.cells[0].net = constant_net(red, 0.5);
    d.cells[1].net = constant_net(blue, 1.5);
    const int n = 64;
    const CompositeResult res = render_ray(ray, d, n, bg);

    const std::vector<double> ts = midpoint_ts(2.0, 6.0, n);
    std::vector<double> sigma(static_cast<size_t>(n)), delta(static_cast<size_t>(n)),
        w(static_cast<size_t>(n));
    std::vector<Rgb> colour(static_cast<size_t>(n));
    // the constant nets' exact outputs (head activations quantize slightly)
    const FieldOutput f0 = forward_point(*d.cells[0].net, {0, 0, 0.5}, ray.dir);
    const FieldOutput f1 = forward_point(*d.cells[1].net, {0, 0, -0.5}, ray.dir);
    CHECK(f0.sigma == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f1.colour[2] == doctest::Approx(blue[2]).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
      const bool front = (ray.origin + ray.dir * ts[static_cast<size_t>(i)]).z > 0.0;
      sigma[static_cast<size_t>(i)] = front ? f0.sigma : f1.sigma;
      colour[static_cast<size_t>(i)] = front ? f0.colour : f1.colour;
      delta[static_cast<size_t>(i)] =
          i + 1 < n ? ts[static_cast<size_t>(i) + 1] - ts[static_cast<size_t>(i)]
                    : 6.0 - ts[static_cast<size_t>(i)];
    }
    const CompositeOracle oracle = composite_oracle(sigma, colour, delta, bg);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(res.colour[ch] == doctest::Approx(oracle.colour[ch]).epsilon(1e-9));
    }
  }
}

TEST_CASE("render equivalence: batched-per-cell equals per-sample evaluation") {
  Rng rng(31);
  VoronoiDiagram d = make_diagram({{-0.5, 0, 0}, {0.5, 0, 0}, {0, 0.5, 0}, {0, -0.5, 0}});
  for (VoronoiNode& cell : d.cells) {
    cell.net = std::make_shared<FieldNet>(FieldNet::random(FieldArch{16, 2, 4, 2}, rng.next_u64()));
  }
  for (int trial = 0; trial < 20; ++trial) {
    Ray ray;
    ray.origin = rng.unit_vector() * 4.0;
    ray.dir = (Vec3{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)} -
               ray.origin)
                  .normalized();
    ray.near = 2.0;
    ray.far = 6.0;
    const int n = 48;
    const CompositeResult batched = render_ray(ray, d, n, Rgb{1, 1, 1});

    const std::vector<double> ts = midpoint_ts(2.0, 6.0, n);
    std::vector<double> sigma(static_cast<size_t>(n)), delta(static_cast<size_t>(n)),
        w(static_cast<size_t>(n));
    std::vector<Rgb> colour(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Vec3 p = ray.origin + ray.dir * ts[static_cast<size_t>(i)];
      const FieldOutput out =
          forward_point(*d.cells[static_cast<size_t>(assign_cell(p, d))].net, p, ray.dir);
      sigma[static_cast<size_t>(i)] = out.sigma;
      colour[static_cast<size_t>(i)] = out.colour;
      delta[static_cast<size_t>(i)] =
          i + 1 < n ? ts[static_cast<size_t>(i) + 1] - ts[static_cast<size_t>(i)]
                    : 6.0 - ts[static_cast<size_t>(i)];
    }
    const CompositeResult sequential = composite(sigma, colour, delta, Rgb{1, 1, 1}, ray.target, w);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(std::abs(batched.colour[ch] - sequential.colour[ch]) < 1e-6);
    }
  }
}

TEST_CASE("render_view PSNR conventions") {
  VoronoiDiagram d = make_diagram({{0, 0, 0}});
  d.cells[0].net = constant_net({0.0, 0.0, 0.0}, 1e-12);  // empty space

  Camera cam = test_camera(16);
  cam.c2w(2, 3) = 4.0;  // back off along +z

  SUBCASE("exact match reports the 99 dB cap") {
    Image white(16, 16);
    std::fill(white.data.begin(), white.data.end(), 1.0f);
    RenderOptions opt;
    opt.samples_per_ray = 8;
    opt.background = {1, 1, 1};
    const RenderedView rv = render_view(cam, white, d, 2.0, 6.0, opt);
    CHECK(rv.psnr == 99.0);
  }

  SUBCASE("all-black render against all-white target is 0 dB") {
    Image white(16, 16);
    std::fill(white.data.begin(), white.data.end(), 1.0f);
    RenderOptions opt;
    opt.samples_per_ray = 8;
    opt.background = {0, 0, 0};  // black background, empty scene -> black render
    const RenderedView rv = render_view(cam, white, d, 2.0, 6.0, opt);
    CHECK(rv.mse == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rv.psnr == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("ray partition across workers leaves pixels identical") {
    VoronoiDiagram d2 = make_diagram({{-0.4, 0, 0}, {0.4, 0, 0}});
    Rng rng(7);
    d2.cells[0].net =
        std::make_shared<FieldNet>(FieldNet::random(FieldArch{16, 2, 4, 2}, rng.next_u64()));
    d2.cells[1].net =
        std::make_shared<FieldNet>(FieldNet::random(FieldArch{16, 2, 4, 2}, rng.next_u64()));
    Image target(16, 16);
    RenderOptions serial;
    serial.samples_per_ray = 16;
    serial.threads = 1;
    RenderOptions parallel = serial;
    parallel.threads = 4;
    const RenderedView a = render_view(cam, target, d2, 2.0, 6.0, serial);
    const RenderedView b = render_view(cam, target, d2, 2.0, 6.0, parallel);
    CHECK(a.image.data == b.image.data);
  }
}

TEST_CASE("ssim sanity") {
  Rng rng(9);
  Image a(32, 32);
  for (float& v : a.data) v = static_cast<float>(rng.next_double());
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Image b = a;
  for (float& v : b.data) {
    v = std::clamp(v + static_cast<float>(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
  }
  const double noisy = ssim(a, b);
  CHECK(noisy < 0.9);
  CHECK(noisy > 0.0);

  Image c = a;
  for (float& v : c.data) v = std::clamp(v + 0.02f, 0.0f, 1.0f);  // slight bias
  CHECK(ssim(a, c) > noisy);
}
