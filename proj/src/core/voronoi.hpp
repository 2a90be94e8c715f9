#pragma once

#include <memory>
#include <span>
#include <vector>

#include "core/geometry.hpp"

namespace vf {

struct FieldNet;

// A ray sample kept for diagram optimisation: position, the importance mass
// contribution * ray error, and the originating ray's target colour.
struct WeightedSample {
  Vec3 pos;
  double weight = 0.0;
  Rgb colour{0.0, 0.0, 0.0};
};

struct BalanceConfig {
  double alpha = 0.05;
  int steps = 500;
  int knn = 8;
};

struct VoronoiDiagram;

struct VoronoiNode {
  Vec3 centre;
  std::shared_ptr<FieldNet> net;          // null on interior nodes
  std::unique_ptr<VoronoiDiagram> child;  // null on leaves

  bool is_leaf() const { return child == nullptr; }
};

struct VoronoiDiagram {
  std::vector<Vec3> centres;
  std::vector<VoronoiNode> cells;  // cells[i].centre == centres[i]
  int level = 0;
};

VoronoiDiagram make_diagram(std::vector<Vec3> centres, int level = 0);

// Index of the nearest centre (Euclidean), ties to the lowest index.
int assign_index(std::span<const Vec3> centres, const Vec3& p);
int assign_cell(const Vec3& p, const VoronoiDiagram& d);

struct NestedAssignment {
  std::vector<int> path;  // one cell index per level down the selected branch
  const VoronoiNode* leaf = nullptr;
  FieldNet* net = nullptr;
};
NestedAssignment assign_nested(const Vec3& p, const VoronoiDiagram& root);

// Per-cell totals of sample weights; cells without samples stay 0.
std::vector<double> cell_weights(std::span<const WeightedSample> samples, const VoronoiDiagram& d);
std::vector<double> cell_weights(std::span<const WeightedSample> samples,
                                 std::span<const Vec3> centres);

// The min(k, n-1) nearest other centres, by distance then lowest index.
std::vector<int> knn_indices(std::span<const Vec3> centres, int i, int k);
std::vector<int> knn_neighbours(const VoronoiDiagram& d, int i, int k);

// One synchronous update of every centre: light cells move towards heavy
// neighbours and heavy cells away from light ones, each step averaged over the
// neighbourhood and normalised by its largest weight.
std::vector<Vec3> balance_step(std::span<const Vec3> centres,
                               std::span<const WeightedSample> samples, const BalanceConfig& cfg);

struct BalanceResult {
  std::vector<Vec3> centres;
  // Std of normalised cell weights before the first step and after each step
  // (length cfg.steps + 1).
  std::vector<double> weight_std_trace;
};

BalanceResult balance(std::span<const Vec3> centres, std::span<const WeightedSample> samples,
                      const BalanceConfig& cfg);

// Std of W_i / sum(W); 0 when the total mass is 0.
double normalized_weight_std(std::span<const double> weights);

// k sample positions drawn uniformly without replacement; exact duplicates are
// perturbed by 1e-6 of the cloud diameter so centres stay pairwise distinct.
std::vector<Vec3> init_centres(std::span<const WeightedSample> samples, int k, uint64_t rng_seed);

std::vector<const VoronoiNode*> collect_leaves(const VoronoiDiagram& root);
int diagram_depth(const VoronoiDiagram& root);

}  // namespace vf
