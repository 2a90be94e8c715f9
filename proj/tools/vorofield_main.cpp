// Command-line front end for the vorofield shared library. Talks to the core
// exclusively through the C API in vorofield.h.
#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "vorofield.h"

namespace {

struct ConfigDeleter {
  void operator()(vf_config* c) const { vf_config_free(c); }
};
struct DatasetDeleter {
  void operator()(vf_dataset* d) const { vf_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(vf_model* m) const { vf_model_free(m); }
};
using ConfigPtr = std::unique_ptr<vf_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<vf_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<vf_model, ModelDeleter>;

[[noreturn]] void die(vf_status status) {
  std::fprintf(stderr, "error: %s\n", vf_last_error());
  std::exit(static_cast<int>(status));
}

void check(vf_status status) {
  if (status != VF_OK) die(status);
}

struct CommonOpts {
  std::string config_path;
  std::string dataset_dir;
  std::string fixture;
  std::string out_dir;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_out) {
  cmd->add_option("--config", opts.config_path, "JSON config file (defaults apply otherwise)");
  cmd->add_option("--dataset", opts.dataset_dir, "dataset directory (transforms JSON layout)");
  cmd->add_option("--fixture", opts.fixture,
                  "analytic fixture name (blobs3, cluster-uneven, ship-like-multi-object)");
  auto* out = cmd->add_option("--out", opts.out_dir, "output/run directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", opts.seed, "RNG seed override");
  cmd->add_option("--threads", opts.threads, "worker thread cap (VOROFIELD_THREADS as fallback)");
  cmd->add_option("--set", opts.overrides, "config override key=value (repeatable)")
      ->type_name("KEY=VALUE");
}

ConfigPtr build_config(const CommonOpts& opts) {
  vf_config* raw = nullptr;
  if (opts.config_path.empty()) {
    check(vf_config_default(&raw));
  } else {
    check(vf_config_load(opts.config_path.c_str(), &raw));
  }
  ConfigPtr cfg(raw);

  if (!opts.dataset_dir.empty()) {
    check(vf_config_set(cfg.get(), "scene.dataset", opts.dataset_dir.c_str()));
  }
  if (!opts.fixture.empty()) {
    check(vf_config_set(cfg.get(), "scene.fixture", opts.fixture.c_str()));
    check(vf_config_set(cfg.get(), "scene.dataset", ""));
  }
  if (opts.seed >= 0) {
    check(vf_config_set(cfg.get(), "seed", std::to_string(opts.seed).c_str()));
  }

  int threads = opts.threads;
  if (threads <= 0) {
    if (const char* env = std::getenv("VOROFIELD_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) {
    check(vf_config_set(cfg.get(), "threads", std::to_string(threads).c_str()));
  }

  for (const std::string& kv : opts.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
      std::exit(VF_ERR_USAGE);
    }
    check(vf_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return cfg;
}

DatasetPtr open_dataset(const vf_config* cfg) {
  vf_dataset* raw = nullptr;
  check(vf_dataset_open(cfg, &raw));
  return DatasetPtr(raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vorofield: adaptive nested Voronoi radiance fields"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  add_common(train, train_opts, true);

  CommonOpts render_opts;
  std::string render_checkpoint, render_split = "test";
  int render_samples = 128;
  bool render_cell_vis = false;
  auto* render = app.add_subcommand("render", "render a dataset split from a checkpoint");
  add_common(render, render_opts, true);
  render->add_option("--checkpoint", render_checkpoint, "checkpoint file")->required();
  render->add_option("--split", render_split, "train or test");
  render->add_option("--samples", render_samples, "samples per ray");
  render->add_flag("--cell-vis", render_cell_vis,
                   "colour pixels by the Voronoi cell of the heaviest sample");

  CommonOpts eval_opts;
  std::string eval_checkpoint, eval_split = "test";
  int eval_samples = 128;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a split without writing images");
  add_common(eval, eval_opts, true);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "train or test");
  eval->add_option("--samples", eval_samples, "samples per ray");

  CommonOpts compare_opts;
  std::string config_a, config_b;
  double budget_s = 60.0;
  auto* compare = app.add_subcommand("compare", "train two arms with a matched time budget");
  add_common(compare, compare_opts, true);
  compare->add_option("--config-a", config_a, "config for arm a")->required();
  compare->add_option("--config-b", config_b, "config for arm b")->required();
  compare->add_option("--budget-s", budget_s, "training wall-clock budget per arm, seconds");

  std::string export_checkpoint, export_reservoir, export_what = "centres", export_out;
  auto* exp = app.add_subcommand("export", "PLY export of centres or weighted samples");
  exp->add_option("--checkpoint", export_checkpoint, "checkpoint file (for centres)");
  exp->add_option("--reservoir", export_reservoir, "reservoir PLY (for samples)");
  exp->add_option("--what", export_what, "centres or samples");
  exp->add_option("--out", export_out, "output PLY path")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    ConfigPtr cfg = build_config(train_opts);
    DatasetPtr ds = open_dataset(cfg.get());
    check(vf_train(cfg.get(), ds.get(), train_opts.out_dir.c_str()));
    std::printf("run written to %s\n", train_opts.out_dir.c_str());
    return 0;
  }

  if (render->parsed() || eval->parsed()) {
    const bool metrics_only = eval->parsed();
    const CommonOpts& opts = metrics_only ? eval_opts : render_opts;
    const std::string& ck = metrics_only ? eval_checkpoint : render_checkpoint;
    const std::string& split = metrics_only ? eval_split : render_split;
    const int samples = metrics_only ? eval_samples : render_samples;

    ConfigPtr cfg = build_config(opts);
    DatasetPtr ds = open_dataset(cfg.get());
    vf_model* raw = nullptr;
    check(vf_model_open(ck.c_str(), &raw));
    ModelPtr model(raw);
    int threads = opts.threads;
    if (threads <= 0) {
      if (const char* env = std::getenv("VOROFIELD_THREADS")) threads = std::atoi(env);
    }
    check(vf_render_split(model.get(), ds.get(), split.c_str(), samples,
                          threads > 0 ? threads : 1, render_cell_vis ? 1 : 0,
                          metrics_only ? 1 : 0, opts.out_dir.c_str()));
    std::printf("%s metrics written to %s\n", split.c_str(), opts.out_dir.c_str());
    return 0;
  }

  if (compare->parsed()) {
    CommonOpts arm_a_opts = compare_opts;
    arm_a_opts.config_path = config_a;
    CommonOpts arm_b_opts = compare_opts;
    arm_b_opts.config_path = config_b;
    ConfigPtr cfg_a = build_config(arm_a_opts);
    ConfigPtr cfg_b = build_config(arm_b_opts);
    DatasetPtr ds = open_dataset(cfg_a.get());
    check(vf_compare(cfg_a.get(), cfg_b.get(), ds.get(), budget_s, compare_opts.out_dir.c_str()));
    std::printf("compare results written to %s\n", compare_opts.out_dir.c_str());
    return 0;
  }

  if (exp->parsed()) {
    if (export_what == "centres") {
      if (export_checkpoint.empty()) {
        std::fprintf(stderr, "error: exporting centres requires --checkpoint\n");
        return VF_ERR_USAGE;
      }
      vf_model* raw = nullptr;
      check(vf_model_open(export_checkpoint.c_str(), &raw));
      ModelPtr model(raw);
      check(vf_export_centres(model.get(), export_out.c_str()));
    } else if (export_what == "samples") {
      if (export_reservoir.empty()) {
        std::fprintf(stderr, "error: exporting samples requires --reservoir\n");
        return VF_ERR_USAGE;
      }
      check(vf_export_samples(export_reservoir.c_str(), export_out.c_str()));
    } else {
      std::fprintf(stderr, "error: unknown export format '%s' (centres or samples)\n",
                   export_what.c_str());
      return VF_ERR_USAGE;
    }
    std::printf("exported %s to %s\n", export_what.c_str(), export_out.c_str());
    return 0;
  }

  return 0;
}
