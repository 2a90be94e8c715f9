#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/field.hpp"
#include "core/scene.hpp"
#include "core/voronoi.hpp"

namespace vf {

struct TrainConfig {
  uint64_t seed = 1;
  int threads = 1;

  // Field architecture; widths are per nesting level (last entry repeats).
  std::vector<int> widths{64};
  int depth = 4;
  int l_pos = 10;
  int l_dir = 4;

  int epochs = 8;
  double budget_s = 0.0;  // optional cap on accumulated training wall-clock; 0 = epochs only
  int batch_rays = 1024;
  int batches_per_epoch = 50;
  int samples_per_ray = 128;
  double lr = 1e-3;

  int reservoir_capacity = 10000;
  std::vector<int> subdivide_epochs{2, 6};
  int cells = 16;
  int max_depth = 2;
  bool fresh_init = false;      // ablation: random child nets instead of parameter inheritance
  bool error_targeted = false;  // subdivide only the worst-error cell instead of all
  bool virtual_clock = false;   // deterministic work-counter clock for reproducibility checks

  int eval_views = 4;
  int eval_every = 1;
  BalanceConfig balance;

  void validate() const;
  FieldArch arch_for_level(int level) const;
};

struct MetricsRow {
  int epoch = 0;
  double wall_clock_s = 0.0;
  double train_loss = 0.0;
  double test_psnr = 0.0;
  double test_ssim = 0.0;
  int n_leaf_cells = 1;
  double weight_std = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct SampleReservoir {
  int capacity = 10000;
  std::vector<WeightedSample> samples;

  void clear() { samples.clear(); }
};

// Appends the q heaviest candidates by weight (ties to the earlier candidate),
// clamped to the remaining capacity.
void harvest(std::span<const WeightedSample> candidates, int q, SampleReservoir& reservoir);

// Training wall-clock that can exclude evaluation segments. The virtual mode
// counts deterministic work units instead of real time.
class TrainClock {
 public:
  explicit TrainClock(bool virtual_mode) : virtual_(virtual_mode) {}

  void start();
  void stop();
  void add_work(double units);
  double elapsed() const;

 private:
  bool virtual_ = false;
  bool running_ = false;
  double accumulated_ = 0.0;
  std::chrono::steady_clock::time_point started_;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, const Dataset& dataset);

  // One epoch of shuffled ray batches; optionally stops once the training
  // clock passes `deadline_s`. Returns the epoch's metrics row.
  MetricsRow train_epoch(std::optional<double> deadline_s = std::nullopt);

  // One subdivision round over the previous epoch's reservoir. Returns the
  // number of cells that received a child diagram; cells with too few samples
  // are skipped and reported.
  int subdivide_all();

  // Full pipeline: train, subdivide on schedule, write metrics/checkpoints/
  // reservoir exports into out_dir. Returns the paths written.
  std::vector<std::string> run(const std::string& out_dir);

  double test_mse(int views, int samples_per_ray) const;
  std::pair<double, double> test_psnr_ssim(int views, int samples_per_ray) const;

  const VoronoiDiagram& root() const { return root_; }
  VoronoiDiagram& root() { return root_; }
  const SampleReservoir& reservoir() const { return reservoir_; }
  SampleReservoir& reservoir() { return reservoir_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int epoch() const { return epoch_; }
  int rounds() const { return rounds_; }
  int leaf_count() const { return static_cast<int>(collect_leaves(root_).size()); }
  double training_seconds() const { return clock_.elapsed(); }
  const FieldNet& global_net() const;

 private:
  struct NodeTraining {
    AdamState adam;
    FieldGrads grads;
    bool touched = false;
  };

  void process_batch(std::span<const Ray> rays, int harvest_quota, double& loss_sum);
  std::vector<Ray> draw_batch();
  NodeTraining& training_slot(const VoronoiNode* node);
  void subdivide_leaf(VoronoiDiagram& parent, int index, VoronoiNode& node,
                      std::span<const WeightedSample> samples);
  std::vector<WeightedSample> samples_of_leaf(const VoronoiNode* node) const;
  double reservoir_weight_std() const;

  TrainConfig cfg_;
  const Dataset& dataset_;
  Rng rng_;
  TrainClock clock_;
  VoronoiDiagram root_;
  SampleReservoir reservoir_;
  std::vector<MetricsRow> metrics_;
  std::vector<std::string> warnings_;
  std::unordered_map<const VoronoiNode*, std::unique_ptr<NodeTraining>> node_training_;
  std::unordered_map<const VoronoiNode*, double> cell_error_;
  std::vector<size_t> ray_order_;
  size_t ray_cursor_ = 0;
  int epoch_ = 0;
  int rounds_ = 0;  // subdivision rounds applied
  double last_psnr_ = 0.0;
  double last_ssim_ = 0.0;
};

struct CompareRow {
  std::string arm;
  double wall_clock_s = 0.0;
  double test_psnr = 0.0;
};

// Runs both arms on the same dataset with a matched training wall-clock
// budget; returns the long-format rows and writes per-arm run dirs plus
// compare.csv under out_dir.
std::vector<CompareRow> run_compare(const TrainConfig& arm_a, const TrainConfig& arm_b,
                                    const Dataset& dataset, double budget_s,
                                    const std::string& out_dir);

}  // namespace vf
