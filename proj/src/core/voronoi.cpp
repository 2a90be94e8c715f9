#include "core/voronoi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace vf {

VoronoiDiagram make_diagram(std::vector<Vec3> centres, int level) {
  if (centres.empty()) throw UsageError("voronoi: diagram needs at least one centre");
  for (const Vec3& c : centres) {
    if (!c.finite()) throw UsageError("voronoi: non-finite centre");
  }
  VoronoiDiagram d;
  d.level = level;
  d.centres = std::move(centres);
  d.cells.resize(d.centres.size());
  for (size_t i = 0; i < d.centres.size(); ++i) d.cells[i].centre = d.centres[i];
  return d;
}

int assign_index(std::span<const Vec3> centres, const Vec3& p) {
  if (centres.empty()) throw UsageError("voronoi: assignment against an empty diagram");
  if (!p.finite()) throw UsageError("voronoi: assignment of a non-finite point");
  int best = 0;
  double best_d = squared_distance(p, centres[0]);
  for (size_t i = 1; i < centres.size(); ++i) {
    const double d = squared_distance(p, centres[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int assign_cell(const Vec3& p, const VoronoiDiagram& d) { return assign_index(d.centres, p); }

NestedAssignment assign_nested(const Vec3& p, const VoronoiDiagram& root) {
  NestedAssignment out;
  const VoronoiDiagram* d = &root;
  for (;;) {
    const int i = assign_cell(p, *d);
    out.path.push_back(i);
    const VoronoiNode& node = d->cells[static_cast<size_t>(i)];
    if (node.is_leaf()) {
      out.leaf = &node;
      out.net = node.net.get();
      return out;
    }
    d = node.child.get();
  }
}

std::vector<double> cell_weights(std::span<const WeightedSample> samples,
                                 std::span<const Vec3> centres) {
  std::vector<double> w(centres.size(), 0.0);
  for (const WeightedSample& s : samples) {
    w[static_cast<size_t>(assign_index(centres, s.pos))] += s.weight;
  }
  return w;
}

std::vector<double> cell_weights(std::span<const WeightedSample> samples, const VoronoiDiagram& d) {
  return cell_weights(samples, std::span<const Vec3>(d.centres));
}

std::vector<int> knn_indices(std::span<const Vec3> centres, int i, int k) {
  const int n = static_cast<int>(centres.size());
  if (n < 2) throw UsageError("voronoi: k-NN requires at least two centres");
  if (i < 0 || i >= n) throw UsageError("voronoi: k-NN query index out of range");
  if (k < 1) throw UsageError("voronoi: k-NN neighbourhood size must be >= 1");

  std::vector<int> order;
  order.reserve(static_cast<size_t>(n - 1));
  for (int j = 0; j < n; ++j) {
    if (j != i) order.push_back(j);
  }
  const Vec3 q = centres[static_cast<size_t>(i)];
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = squared_distance(q, centres[static_cast<size_t>(a)]);
    const double db = squared_distance(q, centres[static_cast<size_t>(b)]);
    if (da != db) return da < db;
    return a < b;
  });
  order.resize(static_cast<size_t>(std::min(k, n - 1)));
  return order;
}

std::vector<int> knn_neighbours(const VoronoiDiagram& d, int i, int k) {
  return knn_indices(d.centres, i, k);
}

double normalized_weight_std(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || total <= 0.0) return 0.0;
  const double mean = 1.0 / static_cast<double>(weights.size());
  double var = 0.0;
  for (double w : weights) {
    const double d = w / total - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(weights.size()));
}

std::vector<Vec3> balance_step(std::span<const Vec3> centres,
                               std::span<const WeightedSample> samples,
                               const BalanceConfig& cfg) {
  const int n = static_cast<int>(centres.size());
  if (n < 2) throw UsageError("voronoi: balancing requires at least two centres");
  if (cfg.alpha <= 0.0) throw UsageError("voronoi: balance step size must be positive");
  if (cfg.knn < 1) throw UsageError("voronoi: balance neighbourhood size must be >= 1");

  // Jacobi update: weights and neighbourhoods all come from the pre-step state.
  const std::vector<double> w = cell_weights(samples, centres);
  std::vector<Vec3> out(centres.begin(), centres.end());
  for (int i = 0; i < n; ++i) {
    const std::vector<int> nb = knn_indices(centres, i, cfg.knn);
    double w_max = w[static_cast<size_t>(i)];
    for (int j : nb) w_max = std::max(w_max, w[static_cast<size_t>(j)]);
    if (w_max <= 0.0) continue;  // all-zero neighbourhood: no information, no move
    Vec3 update{0.0, 0.0, 0.0};
    for (int j : nb) {
      const double f = (w[static_cast<size_t>(j)] - w[static_cast<size_t>(i)]) / w_max;
      update += (centres[static_cast<size_t>(j)] - centres[static_cast<size_t>(i)]) * f;
    }
    out[static_cast<size_t>(i)] += update * (cfg.alpha / static_cast<double>(nb.size()));
    if (!out[static_cast<size_t>(i)].finite()) {
      throw NumericError("voronoi: balance step produced a non-finite centre");
    }
  }
  return out;
}

BalanceResult balance(std::span<const Vec3> centres, std::span<const WeightedSample> samples,
                      const BalanceConfig& cfg) {
  if (cfg.steps < 0) throw UsageError("voronoi: balance step count must be >= 0");
  BalanceResult res;
  res.centres.assign(centres.begin(), centres.end());
  res.weight_std_trace.reserve(static_cast<size_t>(cfg.steps) + 1);
  res.weight_std_trace.push_back(normalized_weight_std(cell_weights(samples, res.centres)));
  for (int s = 0; s < cfg.steps; ++s) {
    res.centres = balance_step(res.centres, samples, cfg);
    res.weight_std_trace.push_back(normalized_weight_std(cell_weights(samples, res.centres)));
  }
  return res;
}

std::vector<Vec3> init_centres(std::span<const WeightedSample> samples, int k, uint64_t rng_seed) {
  if (k < 1) throw UsageError("voronoi: centre count must be >= 1");
  if (static_cast<size_t>(k) > samples.size()) {
    throw UsageError("voronoi: fewer samples than requested centres");
  }

  Box3 bounds{samples[0].pos, samples[0].pos};
  for (const WeightedSample& s : samples) bounds.expand(s.pos);
  double diameter = bounds.diameter();
  if (diameter <= 0.0) diameter = 1.0;

  // Partial Fisher-Yates draw without replacement.
  Rng rng(rng_seed);
  std::vector<uint32_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(samples.size() - static_cast<size_t>(i)));
    std::swap(idx[static_cast<size_t>(i)], idx[j]);
    out.push_back(samples[idx[static_cast<size_t>(i)]].pos);
  }

  // Samples can repeat positions (e.g. one surface point harvested twice);
  // nudge duplicates so centres stay pairwise distinct.
  for (size_t i = 0; i < out.size(); ++i) {
    bool dup = true;
    while (dup) {
      dup = false;
      for (size_t j = 0; j < i; ++j) {
        if (out[i] == out[j]) {
          out[i] += rng.unit_vector() * (1e-6 * diameter);
          dup = true;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<const VoronoiNode*> collect_leaves(const VoronoiDiagram& root) {
  std::vector<const VoronoiNode*> leaves;
  const auto walk = [&](auto&& self, const VoronoiDiagram& d) -> void {
    for (const VoronoiNode& node : d.cells) {
      if (node.is_leaf()) {
        leaves.push_back(&node);
      } else {
        self(self, *node.child);
      }
    }
  };
  walk(walk, root);
  return leaves;
}

int diagram_depth(const VoronoiDiagram& root) {
  int depth = 1;
  for (const VoronoiNode& node : root.cells) {
    if (!node.is_leaf()) depth = std::max(depth, 1 + diagram_depth(*node.child));
  }
  return depth;
}

}  // namespace vf
