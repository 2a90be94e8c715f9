#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/ply.hpp"
#include "core/threading.hpp"

namespace fs = std::filesystem;

namespace vf {

namespace {
constexpr int64_t kMaxSamplesInFlight = 1 << 15;
}

void TrainConfig::validate() const {
  if (widths.empty()) throw UsageError("config: at least one channel width required");
  for (int w : widths) {
    if (w < 1) throw UsageError("config: channel widths must be positive");
  }
  if (!fresh_init) {
    for (int w : widths) {
      if (w != widths.front()) {
        throw UsageError("config: inheritance requires equal channel widths across levels");
      }
    }
  }
  if (depth < 1) throw UsageError("config: net depth must be >= 1");
  if (epochs < 0) throw UsageError("config: epoch count must be >= 0");
  if (batch_rays < 1 || batches_per_epoch < 1) throw UsageError("config: batch shape must be positive");
  if (samples_per_ray < 1) throw UsageError("config: samples per ray must be >= 1");
  if (reservoir_capacity < 1) throw UsageError("config: reservoir capacity must be >= 1");
  if (cells < 1) throw UsageError("config: cells per subdivision must be >= 1");
  if (max_depth < 0) throw UsageError("config: max nesting depth must be >= 0");
  for (size_t i = 1; i < subdivide_epochs.size(); ++i) {
    if (subdivide_epochs[i] <= subdivide_epochs[i - 1]) {
      throw UsageError("config: subdivision schedule must be strictly increasing");
    }
  }
  if (balance.alpha <= 0.0) throw UsageError("config: balance alpha must be positive");
  if (balance.steps < 0) throw UsageError("config: balance steps must be >= 0");
  if (balance.knn < 1) throw UsageError("config: balance knn must be >= 1");
  if (eval_views < 1) throw UsageError("config: eval views must be >= 1");
  if (eval_every < 1) throw UsageError("config: eval cadence must be >= 1");
  if (threads < 1) throw UsageError("config: thread count must be >= 1");
}

FieldArch TrainConfig::arch_for_level(int level) const {
  FieldArch arch;
  const size_t i = std::min(static_cast<size_t>(level), widths.size() - 1);
  arch.width = widths[i];
  arch.depth = depth;
  arch.l_pos = l_pos;
  arch.l_dir = l_dir;
  return arch;
}

std::string metrics_csv_header() {
  return "epoch,wall_clock_s,train_loss,test_psnr,test_ssim,n_leaf_cells,weight_std";
}

std::string metrics_csv_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%d,%.9g", r.epoch, r.wall_clock_s,
                r.train_loss, r.test_psnr, r.test_ssim, r.n_leaf_cells, r.weight_std);
  return buf;
}

void harvest(std::span<const WeightedSample> candidates, int q, SampleReservoir& reservoir) {
  const int room = reservoir.capacity - static_cast<int>(reservoir.samples.size());
  const int take = std::min({q, room, static_cast<int>(candidates.size())});
  if (take <= 0) return;
  std::vector<int> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b) {
    if (candidates[static_cast<size_t>(a)].weight != candidates[static_cast<size_t>(b)].weight) {
      return candidates[static_cast<size_t>(a)].weight > candidates[static_cast<size_t>(b)].weight;
    }
    return a < b;
  });
  for (int i = 0; i < take; ++i) {
    reservoir.samples.push_back(candidates[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
  }
}

void TrainClock::start() {
  if (running_ || virtual_) return;
  running_ = true;
  started_ = std::chrono::steady_clock::now();
}

void TrainClock::stop() {
  if (!running_ || virtual_) return;
  running_ = false;
  accumulated_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
}

void TrainClock::add_work(double units) {
  if (virtual_) accumulated_ += units;
}

double TrainClock::elapsed() const {
  double total = accumulated_;
  if (running_ && !virtual_) {
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  }
  return total;
}

Trainer::Trainer(TrainConfig cfg, const Dataset& dataset)
    : cfg_(std::move(cfg)), dataset_(dataset), rng_(cfg_.seed), clock_(cfg_.virtual_clock) {
  cfg_.validate();
  if (dataset_.train.empty()) throw DataError("trainer: dataset has no training views");
  reservoir_.capacity = cfg_.reservoir_capacity;

  // The global stage is a single cell holding the lightweight scene net.
  root_ = make_diagram({dataset_.scene_box.centre()}, 0);
  root_.cells[0].net =
      std::make_shared<FieldNet>(FieldNet::random(cfg_.arch_for_level(0), rng_.next_u64()));

  size_t total_rays = 0;
  for (const View& v : dataset_.train) total_rays += v.image.pixel_count();
  ray_order_.resize(total_rays);
  std::iota(ray_order_.begin(), ray_order_.end(), size_t{0});
  rng_.shuffle(ray_order_);
}

const FieldNet& Trainer::global_net() const {
  const auto leaves = collect_leaves(root_);
  return *leaves.front()->net;
}

Trainer::NodeTraining& Trainer::training_slot(const VoronoiNode* node) {
  auto it = node_training_.find(node);
  if (it == node_training_.end()) {
    auto slot = std::make_unique<NodeTraining>();
    slot->adam = AdamState::zeros(node->net->arch);
    slot->grads = FieldGrads::zeros(node->net->arch);
    it = node_training_.emplace(node, std::move(slot)).first;
  }
  return *it->second;
}

std::vector<Ray> Trainer::draw_batch() {
  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(cfg_.batch_rays));
  const size_t per_view = dataset_.train.front().image.pixel_count();
  for (int i = 0; i < cfg_.batch_rays; ++i) {
    if (ray_cursor_ >= ray_order_.size()) {
      rng_.shuffle(ray_order_);
      ray_cursor_ = 0;
    }
    const size_t id = ray_order_[ray_cursor_++];
    const View& view = dataset_.train[id / per_view];
    const size_t pix = id % per_view;
    const int x = static_cast<int>(pix) % view.image.width;
    const int y = static_cast<int>(pix) / view.image.width;
    Ray r = make_ray(view.cam, x, y, dataset_.near, dataset_.far);
    r.target = view.image.pixel(x, y);
    rays.push_back(r);
  }
  return rays;
}

void Trainer::process_batch(std::span<const Ray> rays, int harvest_quota, double& loss_sum) {
  const int n = cfg_.samples_per_ray;
  const size_t chunk_rays =
      std::max<size_t>(1, static_cast<size_t>(kMaxSamplesInFlight / std::max(1, n)));

  std::vector<const VoronoiNode*> touched;  // first-encounter order
  std::vector<WeightedSample> candidates;
  candidates.reserve(rays.size() * static_cast<size_t>(n));
  double batch_error = 0.0;
  double work_units = 0.0;

  for (size_t begin = 0; begin < rays.size(); begin += chunk_rays) {
    const size_t count = std::min(chunk_rays, rays.size() - begin);
    const std::span<const Ray> chunk = rays.subspan(begin, count);

    SampleBatch batch = build_sample_batch(chunk, n, Jitter::kStratified, &rng_);
    route_and_forward(root_, chunk, batch, cfg_.threads);
    const std::vector<CompositeResult> results =
        composite_batch(chunk, batch, dataset_.background, cfg_.threads);

    // Upstream of the mean channel-summed squared error over the whole batch.
    const double inv_rays = 1.0 / static_cast<double>(rays.size());
    std::vector<double> d_sigma(batch.size(), 0.0);
    std::vector<Rgb> d_colour(batch.size(), Rgb{0.0, 0.0, 0.0});
    parallel_for(static_cast<int64_t>(count), cfg_.threads, [&](int64_t rb, int64_t re) {
      for (int64_t r = rb; r < re; ++r) {
        const size_t base = static_cast<size_t>(r) * static_cast<size_t>(n);
        const Ray& ray = chunk[static_cast<size_t>(r)];
        Rgb up;
        for (int c = 0; c < 3; ++c) {
          up[c] = 2.0 * (results[static_cast<size_t>(r)].colour[c] - ray.target[c]) * inv_rays;
        }
        composite_backward(
            std::span<const double>(batch.sigma).subspan(base, static_cast<size_t>(n)),
            std::span<const Rgb>(batch.colour).subspan(base, static_cast<size_t>(n)),
            std::span<const double>(batch.delta).subspan(base, static_cast<size_t>(n)),
            dataset_.background,
            std::span<const double>(batch.w).subspan(base, static_cast<size_t>(n)),
            results[static_cast<size_t>(r)].t_final, up,
            std::span<double>(d_sigma).subspan(base, static_cast<size_t>(n)),
            std::span<Rgb>(d_colour).subspan(base, static_cast<size_t>(n)));
      }
    });

    for (const CompositeResult& res : results) batch_error += res.error;

    // Slots are created serially; the parallel backward below only looks them up.
    for (const SampleBatch::LeafGroup& group : batch.groups) training_slot(group.node);

    parallel_for(static_cast<int64_t>(batch.groups.size()), cfg_.threads,
                 [&](int64_t gb, int64_t ge) {
                   for (int64_t g = gb; g < ge; ++g) {
                     SampleBatch::LeafGroup& group = batch.groups[static_cast<size_t>(g)];
                     const Eigen::Index m = static_cast<Eigen::Index>(group.samples.size());
                     Eigen::MatrixXd g_rgb(3, m);
                     Eigen::VectorXd g_sigma(m);
                     for (Eigen::Index k = 0; k < m; ++k) {
                       const size_t i = static_cast<size_t>(group.samples[static_cast<size_t>(k)]);
                       g_rgb(0, k) = d_colour[i][0];
                       g_rgb(1, k) = d_colour[i][1];
                       g_rgb(2, k) = d_colour[i][2];
                       g_sigma(k) = d_sigma[i];
                     }
                     field_backward(*group.node->net, group.fb, g_rgb, g_sigma,
                                    training_slot(group.node).grads);
                   }
                 });

    for (const SampleBatch::LeafGroup& group : batch.groups) {
      NodeTraining& slot = training_slot(group.node);
      if (!slot.touched) {
        slot.touched = true;
        touched.push_back(group.node);
      }
      work_units += 2e-9 * static_cast<double>(group.node->net->param_count()) *
                    static_cast<double>(group.samples.size());
    }

    // Harvest candidates carry the sample mass w_i * E(r) and the ray target;
    // the same mass feeds the per-cell error accumulators.
    for (size_t r = 0; r < count; ++r) {
      const size_t base = r * static_cast<size_t>(n);
      const double err = results[r].error;
      for (size_t k = base; k < base + static_cast<size_t>(n); ++k) {
        const double mass = batch.w[k] * err;
        candidates.push_back(WeightedSample{batch.pos[k], mass, chunk[r].target});
        cell_error_[batch.groups[static_cast<size_t>(batch.leaf_of[k])].node] += mass;
      }
    }
  }

  if (!std::isfinite(batch_error)) {
    throw NumericError("trainer: non-finite loss in epoch " + std::to_string(epoch_));
  }
  loss_sum += batch_error;
  clock_.add_work(work_units);

  const AdamHyper hp{cfg_.lr, 0.9, 0.999, 1e-8};
  for (const VoronoiNode* node : touched) {
    NodeTraining& slot = training_slot(node);
    if (!adam_step(*const_cast<VoronoiNode*>(node)->net, slot.adam, slot.grads, hp)) {
      warnings_.push_back("trainer: skipped optimizer step on non-finite gradient");
    }
    slot.grads = FieldGrads::zeros(node->net->arch);
    slot.touched = false;
  }

  harvest(candidates, harvest_quota, reservoir_);
}

MetricsRow Trainer::train_epoch(std::optional<double> deadline_s) {
  const int q = reservoir_.capacity / cfg_.batches_per_epoch;
  double loss_sum = 0.0;
  int batches_done = 0;

  clock_.start();
  for (int b = 0; b < cfg_.batches_per_epoch; ++b) {
    const std::vector<Ray> rays = draw_batch();
    process_batch(rays, q, loss_sum);
    ++batches_done;
    if (deadline_s && clock_.elapsed() >= *deadline_s) break;
  }
  clock_.stop();

  MetricsRow row;
  row.epoch = epoch_;
  row.train_loss = loss_sum / (static_cast<double>(batches_done) * cfg_.batch_rays);
  row.n_leaf_cells = leaf_count();
  row.weight_std = reservoir_weight_std();
  if (epoch_ % cfg_.eval_every == 0) {
    const auto [psnr, s] = test_psnr_ssim(cfg_.eval_views, cfg_.samples_per_ray);
    last_psnr_ = psnr;
    last_ssim_ = s;
  }
  row.test_psnr = last_psnr_;
  row.test_ssim = last_ssim_;
  row.wall_clock_s = clock_.elapsed();
  metrics_.push_back(row);
  epoch_ += 1;
  return row;
}

double Trainer::reservoir_weight_std() const {
  const auto leaves = collect_leaves(root_);
  if (leaves.size() < 2 || reservoir_.samples.empty()) return 0.0;
  std::unordered_map<const VoronoiNode*, size_t> ordinal;
  for (size_t i = 0; i < leaves.size(); ++i) ordinal[leaves[i]] = i;
  std::vector<double> mass(leaves.size(), 0.0);
  for (const WeightedSample& s : reservoir_.samples) {
    mass[ordinal.at(assign_nested(s.pos, root_).leaf)] += s.weight;
  }
  return normalized_weight_std(mass);
}

double Trainer::test_mse(int views, int samples_per_ray) const {
  if (dataset_.test.empty()) throw DataError("trainer: dataset has no test views");
  const int count = std::min<int>(views, static_cast<int>(dataset_.test.size()));
  RenderOptions opt;
  opt.samples_per_ray = samples_per_ray;
  opt.background = dataset_.background;
  opt.jitter = Jitter::kMidpoint;
  opt.threads = cfg_.threads;
  double mse_sum = 0.0;
  for (int i = 0; i < count; ++i) {
    const View& v = dataset_.test[static_cast<size_t>(i)];
    mse_sum += render_view(v.cam, v.image, root_, dataset_.near, dataset_.far, opt).mse;
  }
  return mse_sum / count;
}

std::pair<double, double> Trainer::test_psnr_ssim(int views, int samples_per_ray) const {
  if (dataset_.test.empty()) throw DataError("trainer: dataset has no test views");
  const int count = std::min<int>(views, static_cast<int>(dataset_.test.size()));
  RenderOptions opt;
  opt.samples_per_ray = samples_per_ray;
  opt.background = dataset_.background;
  opt.jitter = Jitter::kMidpoint;
  opt.threads = cfg_.threads;
  double mse_sum = 0.0;
  double ssim_sum = 0.0;
  for (int i = 0; i < count; ++i) {
    const View& v = dataset_.test[static_cast<size_t>(i)];
    const RenderedView rv = render_view(v.cam, v.image, root_, dataset_.near, dataset_.far, opt);
    mse_sum += rv.mse;
    ssim_sum += ssim(rv.image, v.image);
  }
  return {psnr_from_mse(mse_sum / count), ssim_sum / count};
}

std::vector<WeightedSample> Trainer::samples_of_leaf(const VoronoiNode* node) const {
  std::vector<WeightedSample> out;
  for (const WeightedSample& s : reservoir_.samples) {
    if (assign_nested(s.pos, root_).leaf == node) out.push_back(s);
  }
  return out;
}

void Trainer::subdivide_leaf(VoronoiDiagram& parent, int index, VoronoiNode& node,
                             std::span<const WeightedSample> samples) {
  const BalanceResult balanced =
      balance(init_centres(samples, cfg_.cells, rng_.next_u64()), samples, cfg_.balance);
  std::vector<Vec3> centres = balanced.centres;

  // Balancing may push a centre across the parent cell boundary; pull any
  // escapee back towards the cell's sample centroid (inside, by convexity).
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const WeightedSample& s : samples) centroid += s.pos;
  centroid = centroid / static_cast<double>(samples.size());
  for (Vec3& c : centres) {
    for (int it = 0; it < 64 && assign_cell(c, parent) != index; ++it) {
      c = (c + centroid) * 0.5;
    }
  }
  // Repairs can collide centres; nudge exact duplicates apart.
  Rng dup_rng(rng_.next_u64());
  for (size_t i = 0; i < centres.size(); ++i) {
    for (size_t j = 0; j < i; ++j) {
      if (centres[i] == centres[j]) {
        centres[i] += dup_rng.unit_vector() * 1e-9;
        j = static_cast<size_t>(-1);
      }
    }
  }

  auto child = std::make_unique<VoronoiDiagram>(make_diagram(centres, parent.level + 1));
  const FieldArch child_arch = cfg_.arch_for_level(parent.level + 1);
  for (VoronoiNode& cell : child->cells) {
    if (cfg_.fresh_init) {
      cell.net = std::make_shared<FieldNet>(FieldNet::random(child_arch, rng_.next_u64()));
    } else {
      cell.net = std::make_shared<FieldNet>(clone_params(*node.net));
    }
  }
  node.child = std::move(child);
  node.net.reset();  // the parent net is retired once its children exist
}

int Trainer::subdivide_all() {
  if (reservoir_.samples.empty()) {
    throw UsageError("trainer: subdivision requires a non-empty reservoir");
  }
  if (rounds_ >= cfg_.max_depth) {
    throw UsageError("trainer: maximum nesting depth already reached");
  }

  int subdivided = 0;
  if (rounds_ == 0) {
    // First round: the global stage becomes the root diagram, fed by the full
    // reservoir and seeded from the global net.
    if (static_cast<int>(reservoir_.samples.size()) < cfg_.cells) {
      warnings_.push_back("trainer: root subdivision skipped, reservoir smaller than cell count");
      return 0;
    }
    const BalanceResult balanced = balance(
        init_centres(reservoir_.samples, cfg_.cells, rng_.next_u64()), reservoir_.samples,
        cfg_.balance);
    VoronoiDiagram new_root = make_diagram(balanced.centres, 0);
    const FieldArch arch = cfg_.arch_for_level(1);
    const std::shared_ptr<FieldNet> global = root_.cells[0].net;
    for (VoronoiNode& cell : new_root.cells) {
      if (cfg_.fresh_init) {
        cell.net = std::make_shared<FieldNet>(FieldNet::random(arch, rng_.next_u64()));
      } else {
        cell.net = std::make_shared<FieldNet>(clone_params(*global));
      }
    }
    root_ = std::move(new_root);
    subdivided = 1;
  } else {
    struct LeafRef {
      VoronoiDiagram* parent;
      int index;
    };
    std::vector<LeafRef> leaves;
    const auto walk = [&](auto&& self, VoronoiDiagram& d) -> void {
      for (size_t i = 0; i < d.cells.size(); ++i) {
        if (d.cells[i].is_leaf()) {
          leaves.push_back(LeafRef{&d, static_cast<int>(i)});
        } else {
          self(self, *d.cells[i].child);
        }
      }
    };
    walk(walk, root_);

    int target = -1;
    if (cfg_.error_targeted) {
      double worst = -1.0;
      for (size_t i = 0; i < leaves.size(); ++i) {
        const VoronoiNode* node = &leaves[i].parent->cells[static_cast<size_t>(leaves[i].index)];
        const auto it = cell_error_.find(node);
        const double err = it == cell_error_.end() ? 0.0 : it->second;
        if (err > worst) {
          worst = err;
          target = static_cast<int>(i);
        }
      }
    }

    for (size_t i = 0; i < leaves.size(); ++i) {
      if (cfg_.error_targeted && static_cast<int>(i) != target) continue;
      VoronoiNode& node = leaves[i].parent->cells[static_cast<size_t>(leaves[i].index)];
      const std::vector<WeightedSample> samples = samples_of_leaf(&node);
      if (static_cast<int>(samples.size()) < cfg_.cells) {
        warnings_.push_back("trainer: cell skipped this round, " +
                            std::to_string(samples.size()) + " samples < " +
                            std::to_string(cfg_.cells) + " cells");
        continue;
      }
      subdivide_leaf(*leaves[i].parent, leaves[i].index, node, samples);
      ++subdivided;
    }
  }

  if (subdivided > 0) rounds_ += 1;
  node_training_.clear();  // child nets get fresh optimizer moments
  cell_error_.clear();
  return subdivided;
}

std::vector<std::string> Trainer::run(const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  const ModelMeta meta{dataset_.scene_box, dataset_.background, dataset_.near, dataset_.far};
  const bool budget_mode = cfg_.budget_s > 0.0;
  const int epoch_limit = budget_mode && cfg_.epochs == 0 ? INT32_MAX : cfg_.epochs;

  for (int e = 0; e < epoch_limit; ++e) {
    const bool scheduled = std::find(cfg_.subdivide_epochs.begin(), cfg_.subdivide_epochs.end(),
                                     e) != cfg_.subdivide_epochs.end();
    if (scheduled && rounds_ < cfg_.max_depth && !reservoir_.samples.empty()) {
      const std::string res_path =
          (fs::path(out_dir) / ("reservoir_round" + std::to_string(rounds_ + 1) + ".ply")).string();
      write_samples_ply(res_path, reservoir_.samples);
      written.push_back(res_path);
      subdivide_all();
      const std::string ck_path =
          (fs::path(out_dir) / ("checkpoint_round" + std::to_string(rounds_) + ".vfck")).string();
      save_checkpoint(ck_path, root_, meta);
      written.push_back(ck_path);
    }
    reservoir_.clear();
    cell_error_.clear();
    train_epoch(budget_mode ? std::optional<double>(cfg_.budget_s) : std::nullopt);
    if (budget_mode && clock_.elapsed() >= cfg_.budget_s) break;
  }

  const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  {
    std::ofstream out(metrics_path);
    if (!out) throw DataError("trainer: cannot write " + metrics_path);
    out << metrics_csv_header() << "\n";
    for (const MetricsRow& row : metrics_) out << metrics_csv_row(row) << "\n";
  }
  written.push_back(metrics_path);

  const std::string ck_path = (fs::path(out_dir) / "checkpoint.vfck").string();
  save_checkpoint(ck_path, root_, meta);
  written.push_back(ck_path);

  const std::string res_path = (fs::path(out_dir) / "reservoir.ply").string();
  write_samples_ply(res_path, reservoir_.samples);
  written.push_back(res_path);

  return written;
}

std::vector<CompareRow> run_compare(const TrainConfig& arm_a, const TrainConfig& arm_b,
                                    const Dataset& dataset, double budget_s,
                                    const std::string& out_dir) {
  if (budget_s <= 0.0) throw UsageError("compare: wall-clock budget must be positive");
  fs::create_directories(out_dir);

  std::vector<CompareRow> rows;
  const auto run_arm = [&](const TrainConfig& cfg, const std::string& name) {
    TrainConfig arm = cfg;
    arm.budget_s = budget_s;
    arm.epochs = 0;
    Trainer trainer(arm, dataset);
    trainer.run((fs::path(out_dir) / ("arm_" + name)).string());
    for (const MetricsRow& row : trainer.metrics()) {
      rows.push_back(CompareRow{name, row.wall_clock_s, row.test_psnr});
    }
  };
  run_arm(arm_a, "a");
  run_arm(arm_b, "b");

  std::ofstream out(fs::path(out_dir) / "compare.csv");
  if (!out) throw DataError("compare: cannot write compare.csv");
  out << "arm,wall_clock_s,test_psnr\n";
  for (const CompareRow& row : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g", row.arm.c_str(), row.wall_clock_s,
                  row.test_psnr);
    out << buf << "\n";
  }
  return rows;
}

}  // namespace vf
