#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "core/voronoi.hpp"

using namespace vf;

namespace {

// Independent assignment oracle: exhaustive scan with reversed iteration
// order (<= keeps the lowest index on ties).
int assign_oracle(std::span<const Vec3> centres, const Vec3& p) {
  int best = static_cast<int>(centres.size()) - 1;
  double best_d = squared_distance(p, centres.back());
  for (int i = static_cast<int>(centres.size()) - 2; i >= 0; --i) {
    const double d = squared_distance(p, centres[static_cast<size_t>(i)]);
    if (d <= best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<Vec3> random_points(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<Vec3> pts(static_cast<size_t>(n));
  for (Vec3& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

// Three Gaussian blobs of uneven mass (skewed counts and per-sample weights)
// with overlapping tails, so mass can migrate between clusters.
std::vector<WeightedSample> blob_cloud(uint64_t seed) {
  Rng rng(seed);
  const Vec3 centres[3] = {{-0.3, 0.0, 0.0}, {0.24, 0.18, 0.1}, {0.09, -0.24, 0.25}};
  const int counts[3] = {400, 300, 200};
  const double weight_scale[3] = {3.0, 2.0, 1.0};
  std::vector<WeightedSample> cloud;
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < counts[b]; ++i) {
      WeightedSample s;
      s.pos = centres[b] + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.12;
      s.weight = weight_scale[b] * rng.uniform(0.5, 1.5);
      cloud.push_back(s);
    }
  }
  return cloud;
}

}  // namespace

TEST_CASE("assign_cell basics and tie-break") {
  const VoronoiDiagram single = make_diagram({{0, 0, 0}});
  CHECK(assign_cell({0.3, 0, 0}, single) == 0);

  const VoronoiDiagram pair = make_diagram({{0, 0, 0}, {1, 0, 0}});
  CHECK(assign_cell({0.5, 0, 0}, pair) == 0);  // equidistant, lowest index wins
  CHECK(assign_cell({0.51, 0, 0}, pair) == 1);

  CHECK_THROWS_AS(assign_index({}, {0, 0, 0}), UsageError);
  CHECK_THROWS_AS(assign_cell({std::nan(""), 0, 0}, pair), UsageError);
}

TEST_CASE("assign_cell matches the exhaustive-scan oracle") {
  Rng rng(11);
  const VoronoiDiagram d = make_diagram(random_points(rng, 32));
  for (const Vec3& p : random_points(rng, 1000, -1.5, 1.5)) {
    CHECK(assign_cell(p, d) == assign_oracle(d.centres, p));
  }
}

TEST_CASE("assign_nested walks the hierarchy") {
  SUBCASE("depth-1 equals assign_cell") {
    Rng rng(12);
    VoronoiDiagram d = make_diagram(random_points(rng, 8));
    for (const Vec3& p : random_points(rng, 100)) {
      const NestedAssignment a = assign_nested(p, d);
      REQUIRE(a.path.size() == 1);
      CHECK(a.path[0] == assign_cell(p, d));
    }
  }

  SUBCASE("hand-built two-level path") {
    VoronoiDiagram root =
        make_diagram({{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {10, 10, 0}});
    root.cells[3].child = std::make_unique<VoronoiDiagram>(
        make_diagram({{9, 9, 0}, {11, 11, 0}, {10, 12, 0}}, 1));
    const Vec3 p{10.8, 10.9, 0.0};
    const NestedAssignment a = assign_nested(p, root);
    REQUIRE(a.path.size() == 2);
    CHECK(a.path[0] == 3);
    CHECK(a.path[1] == 1);

    // Per-level exhaustive verification.
    CHECK(a.path[0] == assign_oracle(root.centres, p));
    CHECK(a.path[1] == assign_oracle(root.cells[3].child->centres, p));
    CHECK(a.leaf == &root.cells[3].child->cells[1]);
  }

  SUBCASE("a leaf centre resolves to exactly that leaf") {
    Rng rng(13);
    VoronoiDiagram root = make_diagram(random_points(rng, 5));
    root.cells[2].child = std::make_unique<VoronoiDiagram>(make_diagram(
        {root.centres[2] + Vec3{0.01, 0, 0}, root.centres[2] - Vec3{0.01, 0, 0}}, 1));
    const Vec3 target = root.cells[2].child->centres[1];
    const NestedAssignment a = assign_nested(target, root);
    REQUIRE(a.path.size() == 2);
    CHECK(a.path[0] == 2);
    CHECK(a.path[1] == 1);
  }
}

TEST_CASE("cell_weights accumulates per cell") {
  const VoronoiDiagram d = make_diagram({{-1, 0, 0}, {0, 0, 0}, {1, 0, 0}});

  CHECK(cell_weights(std::vector<WeightedSample>{}, d) == std::vector<double>{0.0, 0.0, 0.0});

  std::vector<WeightedSample> one{{{0.1, 0, 0}, 2.0, {0, 0, 0}}};
  CHECK(cell_weights(one, d) == std::vector<double>{0.0, 2.0, 0.0});

  // Scalar-loop oracle over random samples.
  Rng rng(21);
  const VoronoiDiagram d8 = make_diagram(random_points(rng, 8));
  std::vector<WeightedSample> samples(500);
  for (WeightedSample& s : samples) {
    s.pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    s.weight = rng.uniform(0.0, 2.0);
  }
  std::vector<double> expected(8, 0.0);
  for (const WeightedSample& s : samples) {
    expected[static_cast<size_t>(assign_oracle(d8.centres, s.pos))] += s.weight;
  }
  const std::vector<double> got = cell_weights(samples, d8);
  for (int i = 0; i < 8; ++i) CHECK(got[static_cast<size_t>(i)] == doctest::Approx(expected[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("knn_neighbours ordering and clamping") {
  const VoronoiDiagram collinear = make_diagram({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  CHECK(knn_neighbours(collinear, 1, 8) == std::vector<int>{0, 2});
  CHECK(knn_neighbours(collinear, 0, 1) == std::vector<int>{1});

  CHECK_THROWS_AS(knn_neighbours(make_diagram({{0, 0, 0}}), 0, 1), UsageError);

  // Full-sort oracle on random centres.
  Rng rng(31);
  const VoronoiDiagram d = make_diagram(random_points(rng, 32));
  for (int i = 0; i < 32; ++i) {
    std::vector<int> order;
    for (int j = 0; j < 32; ++j) {
      if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = squared_distance(d.centres[static_cast<size_t>(i)], d.centres[static_cast<size_t>(a)]);
      const double db = squared_distance(d.centres[static_cast<size_t>(i)], d.centres[static_cast<size_t>(b)]);
      return da != db ? da < db : a < b;
    });
    order.resize(8);
    CHECK(knn_neighbours(d, i, 8) == order);
  }
}

TEST_CASE("balance_step hand-checked update") {
  // One light centre at the origin, one heavy at x=1, single-neighbour
  // neighbourhoods: light moves toward heavy, heavy moves away from light.
  const std::vector<Vec3> centres{{0, 0, 0}, {1, 0, 0}};
  std::vector<WeightedSample> samples{{{0.9, 0, 0}, 1.0, {0, 0, 0}}};
  BalanceConfig cfg;
  cfg.alpha = 0.05;
  cfg.knn = 1;

  const std::vector<Vec3> out = balance_step(centres, samples, cfg);
  CHECK(out[0].x == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(out[0].y == 0.0);
  CHECK(out[1].x == doctest::Approx(1.05).epsilon(1e-15));
}

TEST_CASE("balance_step is the identity for equal weights") {
  Rng rng(41);
  const std::vector<Vec3> centres = random_points(rng, 10);
  std::vector<WeightedSample> samples;
  for (const Vec3& c : centres) {
    samples.push_back({c, 1.5, {0, 0, 0}});  // exactly one sample per cell
  }
  BalanceConfig cfg;
  const std::vector<Vec3> out = balance_step(centres, samples, cfg);
  for (size_t i = 0; i < centres.size(); ++i) {
    CHECK(out[i].x == centres[i].x);
    CHECK(out[i].y == centres[i].y);
    CHECK(out[i].z == centres[i].z);
  }
}

TEST_CASE("balance_step stays within the neighbourhood step bound") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Vec3> centres = random_points(rng, 12);
    std::vector<WeightedSample> samples(200);
    for (WeightedSample& s : samples) {
      s.pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      s.weight = std::exp(rng.uniform(-3.0, 3.0));
    }
    BalanceConfig cfg;
    const std::vector<Vec3> out = balance_step(centres, samples, cfg);
    for (size_t i = 0; i < centres.size(); ++i) {
      const std::vector<int> nb = knn_indices(centres, static_cast<int>(i), cfg.knn);
      double max_dist = 0.0;
      for (int j : nb) {
        max_dist = std::max(max_dist, (centres[static_cast<size_t>(j)] - centres[i]).norm());
      }
      CHECK((out[i] - centres[i]).norm() <= cfg.alpha * max_dist + 1e-12);
    }
  }
}

TEST_CASE("balance conserves total weight across steps") {
  const std::vector<WeightedSample> cloud = blob_cloud(55);
  const double total = std::accumulate(cloud.begin(), cloud.end(), 0.0,
                                       [](double a, const WeightedSample& s) { return a + s.weight; });
  std::vector<Vec3> centres = init_centres(cloud, 16, 7);
  BalanceConfig cfg;
  for (int step = 0; step < 20; ++step) {
    const std::vector<double> w = cell_weights(cloud, centres);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    CHECK(sum == doctest::Approx(total).epsilon(1e-6));
    centres = balance_step(centres, cloud, cfg);
  }
}

TEST_CASE("balance with zero steps returns the input") {
  const std::vector<WeightedSample> cloud = blob_cloud(66);
  const std::vector<Vec3> centres = init_centres(cloud, 8, 3);
  BalanceConfig cfg;
  cfg.steps = 0;
  const BalanceResult res = balance(centres, cloud, cfg);
  CHECK(res.centres == centres);
  CHECK(res.weight_std_trace.size() == 1);
}

TEST_CASE("balance equalizes clustered uneven mass") {
  // Direction and order of magnitude are the contract: >= 90% reduction of
  // the normalized weight std on a clustered cloud.
  const std::vector<WeightedSample> cloud = blob_cloud(77);
  const std::vector<Vec3> centres = init_centres(cloud, 16, 99);
  BalanceConfig cfg;  // 500 steps, alpha 0.05, knn 8
  const BalanceResult res = balance(centres, cloud, cfg);
  REQUIRE(res.weight_std_trace.size() == 501);
  const double initial = res.weight_std_trace.front();
  const double final = res.weight_std_trace.back();
  CHECK(initial > 0.0);
  CHECK(final <= 0.1 * initial);
}

TEST_CASE("balance is a fixed point under symmetric uniform mass") {
  // Uniform cube grid with centres at the 8 symmetric octant offsets: all
  // cell masses are equal, so the first step is already stationary.
  std::vector<WeightedSample> cloud;
  const int n = 16;
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      for (int z = 0; z < n; ++z) {
        WeightedSample s;
        s.pos = {(x + 0.5) / n * 2 - 1, (y + 0.5) / n * 2 - 1, (z + 0.5) / n * 2 - 1};
        s.weight = 1.0;
        cloud.push_back(s);
      }
    }
  }
  std::vector<Vec3> centres;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) centres.push_back({0.5 * sx, 0.5 * sy, 0.5 * sz});
    }
  }
  BalanceConfig cfg;
  cfg.steps = 50;
  const BalanceResult res = balance(centres, cloud, cfg);
  const double diameter = 2.0 * std::sqrt(3.0);
  for (size_t i = 0; i < centres.size(); ++i) {
    CHECK((res.centres[i] - centres[i]).norm() <= cfg.alpha * 1e-3 * diameter);
  }
}

TEST_CASE("balance trace plateaus on a uniform cloud") {
  Rng rng(88);
  std::vector<WeightedSample> cloud(8000);
  for (WeightedSample& s : cloud) {
    s.pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    s.weight = 1.0;
  }
  std::vector<Vec3> before = init_centres(cloud, 8, 5);
  BalanceConfig cfg;
  const BalanceResult res = balance(before, cloud, cfg);
  // After convergence one more step barely moves anything.
  const std::vector<Vec3> after = balance_step(res.centres, cloud, cfg);
  const double diameter = 2.0 * std::sqrt(3.0);
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK((after[i] - res.centres[i]).norm() <= cfg.alpha * 1e-3 * diameter);
  }
}

TEST_CASE("init_centres draws members deterministically") {
  const std::vector<WeightedSample> cloud = blob_cloud(99);

  SUBCASE("k equal to the sample count returns every position") {
    const std::vector<Vec3> all = init_centres(cloud, static_cast<int>(cloud.size()), 1);
    REQUIRE(all.size() == cloud.size());
    std::vector<Vec3> expect;
    for (const WeightedSample& s : cloud) expect.push_back(s.pos);
    auto key = [](const Vec3& v) { return std::tuple{v.x, v.y, v.z}; };
    std::sort(expect.begin(), expect.end(), [&](const Vec3& a, const Vec3& b) { return key(a) < key(b); });
    std::vector<Vec3> got = all;
    std::sort(got.begin(), got.end(), [&](const Vec3& a, const Vec3& b) { return key(a) < key(b); });
    CHECK(got == expect);
  }

  SUBCASE("same seed, same draw") {
    CHECK(init_centres(cloud, 16, 42) == init_centres(cloud, 16, 42));
    CHECK(init_centres(cloud, 16, 42) != init_centres(cloud, 16, 43));
  }

  SUBCASE("every drawn centre is a member of the input") {
    const std::vector<Vec3> drawn = init_centres(cloud, 16, 4242);
    for (const Vec3& c : drawn) {
      CHECK(std::any_of(cloud.begin(), cloud.end(),
                        [&](const WeightedSample& s) { return s.pos == c; }));
    }
  }

  SUBCASE("fewer samples than centres is a usage error") {
    CHECK_THROWS_AS(init_centres(std::span<const WeightedSample>(cloud.data(), 4), 5, 1),
                    UsageError);
  }

  SUBCASE("duplicate positions get perturbed apart") {
    std::vector<WeightedSample> dupes(6);
    for (WeightedSample& s : dupes) {
      s.pos = {0.25, -0.5, 0.125};
      s.weight = 1.0;
    }
    dupes.push_back({{0.5, 0.5, 0.5}, 1.0, {0, 0, 0}});
    const std::vector<Vec3> out = init_centres(dupes, 5, 9);
    for (size_t i = 0; i < out.size(); ++i) {
      for (size_t j = 0; j < i; ++j) CHECK(!(out[i] == out[j]));
    }
  }
}
