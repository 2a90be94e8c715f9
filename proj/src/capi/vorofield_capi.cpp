#include "vorofield.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "core/artifact.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/ply.hpp"
#include "core/png_io.hpp"
#include "core/trainer.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

template <typename Fn>
vf_status guarded(Fn&& fn) {
  try {
    fn();
    return VF_OK;
  } catch (const vf::UsageError& e) {
    g_last_error = e.what();
    return VF_ERR_USAGE;
  } catch (const vf::DataError& e) {
    g_last_error = e.what();
    return VF_ERR_DATA;
  } catch (const vf::NumericError& e) {
    g_last_error = e.what();
    return VF_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VF_ERR_NUMERIC;
  }
}

vf_status require(bool ok, const char* message) {
  if (!ok) {
    g_last_error = message;
    return VF_ERR_USAGE;
  }
  return VF_OK;
}

}  // namespace

struct vf_config {
  nlohmann::json doc;
};

struct vf_dataset {
  vf::Dataset data;
};

struct vf_model {
  vf::Model model;
};

extern "C" {

const char* vf_version(void) { return "0.1.0"; }

const char* vf_last_error(void) { return g_last_error.c_str(); }

vf_status vf_config_default(vf_config** out) {
  if (vf_status s = require(out != nullptr, "vf_config_default: null output"); s != VF_OK) return s;
  return guarded([&] { *out = new vf_config{vf::default_config_json()}; });
}

vf_status vf_config_load(const char* path, vf_config** out) {
  if (vf_status s = require(path && out, "vf_config_load: null argument"); s != VF_OK) return s;
  return guarded([&] {
    // Files only need to mention what they change from the defaults.
    nlohmann::json doc = vf::default_config_json();
    doc.merge_patch(vf::load_config_json(path));
    vf::parse_config(doc);
    *out = new vf_config{std::move(doc)};
  });
}

vf_status vf_config_set(vf_config* cfg, const char* key, const char* value) {
  if (vf_status s = require(cfg && key && value, "vf_config_set: null argument"); s != VF_OK) {
    return s;
  }
  return guarded([&] {
    nlohmann::json doc = cfg->doc;
    vf::apply_override(doc, key, value);
    vf::parse_config(doc);  // reject broken overrides before committing
    cfg->doc = std::move(doc);
  });
}

vf_status vf_config_dump(const vf_config* cfg, char** out_json) {
  if (vf_status s = require(cfg && out_json, "vf_config_dump: null argument"); s != VF_OK) return s;
  return guarded([&] {
    const std::string text = cfg->doc.dump(2);
    *out_json = new char[text.size() + 1];
    std::memcpy(*out_json, text.c_str(), text.size() + 1);
  });
}

void vf_config_free(vf_config* cfg) { delete cfg; }

void vf_string_free(char* s) { delete[] s; }

vf_status vf_dataset_open(const vf_config* cfg, vf_dataset** out) {
  if (vf_status s = require(cfg && out, "vf_dataset_open: null argument"); s != VF_OK) return s;
  return guarded([&] {
    const vf::AppConfig app = vf::parse_config(cfg->doc);
    *out = new vf_dataset{vf::build_dataset(app.scene, app.train.seed, app.train.threads)};
  });
}

vf_status vf_dataset_export(const vf_dataset* ds, const char* dir) {
  if (vf_status s = require(ds && dir, "vf_dataset_export: null argument"); s != VF_OK) return s;
  return guarded([&] { vf::export_dataset(ds->data, dir); });
}

vf_status vf_dataset_counts(const vf_dataset* ds, int* train_views, int* test_views) {
  if (vf_status s = require(ds != nullptr, "vf_dataset_counts: null dataset"); s != VF_OK) return s;
  if (train_views) *train_views = static_cast<int>(ds->data.train.size());
  if (test_views) *test_views = static_cast<int>(ds->data.test.size());
  return VF_OK;
}

void vf_dataset_free(vf_dataset* ds) { delete ds; }

vf_status vf_train(const vf_config* cfg, const vf_dataset* ds, const char* out_dir) {
  if (vf_status s = require(cfg && ds && out_dir, "vf_train: null argument"); s != VF_OK) return s;
  return guarded([&] {
    const vf::AppConfig app = vf::parse_config(cfg->doc);
    const std::string started = vf::utc_timestamp();
    vf::Trainer trainer(app.train, ds->data);
    std::vector<std::string> outputs = trainer.run(out_dir);
    vf::write_manifest(out_dir, "train", cfg->doc, app.train.seed, started, std::move(outputs));
  });
}

vf_status vf_compare(const vf_config* arm_a, const vf_config* arm_b, const vf_dataset* ds,
                     double budget_s, const char* out_dir) {
  if (vf_status s = require(arm_a && arm_b && ds && out_dir, "vf_compare: null argument");
      s != VF_OK) {
    return s;
  }
  return guarded([&] {
    const vf::AppConfig a = vf::parse_config(arm_a->doc);
    const vf::AppConfig b = vf::parse_config(arm_b->doc);
    const std::string started = vf::utc_timestamp();
    vf::run_compare(a.train, b.train, ds->data, budget_s, out_dir);
    nlohmann::json config;
    config["arm_a"] = arm_a->doc;
    config["arm_b"] = arm_b->doc;
    config["budget_s"] = budget_s;
    vf::write_manifest(out_dir, "compare", config, a.train.seed, started,
                       {(fs::path(out_dir) / "compare.csv").string()});
  });
}

vf_status vf_model_open(const char* checkpoint_path, vf_model** out) {
  if (vf_status s = require(checkpoint_path && out, "vf_model_open: null argument"); s != VF_OK) {
    return s;
  }
  return guarded([&] { *out = new vf_model{vf::load_checkpoint(checkpoint_path)}; });
}

vf_status vf_model_save(const vf_model* m, const char* path) {
  if (vf_status s = require(m && path, "vf_model_save: null argument"); s != VF_OK) return s;
  return guarded([&] { vf::save_checkpoint(path, m->model.root, m->model.meta); });
}

vf_status vf_model_leaf_count(const vf_model* m, int* out) {
  if (vf_status s = require(m && out, "vf_model_leaf_count: null argument"); s != VF_OK) return s;
  *out = static_cast<int>(vf::collect_leaves(m->model.root).size());
  return VF_OK;
}

void vf_model_free(vf_model* m) { delete m; }

vf_status vf_render_split(const vf_model* m, const vf_dataset* ds, const char* split,
                          int samples_per_ray, int threads, int cell_vis, int metrics_only,
                          const char* out_dir) {
  if (vf_status s = require(m && ds && split && out_dir, "vf_render_split: null argument");
      s != VF_OK) {
    return s;
  }
  return guarded([&] {
    const std::string split_name = split;
    const std::vector<vf::View>* views = nullptr;
    if (split_name == "train") {
      views = &ds->data.train;
    } else if (split_name == "test") {
      views = &ds->data.test;
    } else {
      throw vf::UsageError("render: unknown split '" + split_name + "' (use train or test)");
    }
    if (samples_per_ray < 1) throw vf::UsageError("render: samples per ray must be >= 1");

    fs::create_directories(out_dir);
    const std::string started = vf::utc_timestamp();
    std::vector<std::string> outputs;
    vf::RenderOptions opt;
    opt.samples_per_ray = samples_per_ray;
    opt.background = m->model.meta.background;
    opt.threads = threads < 1 ? 1 : threads;
    opt.cell_vis = cell_vis != 0;

    const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw vf::DataError("render: cannot write " + csv_path);
    csv << "view,file,psnr,ssim\n";
    for (size_t i = 0; i < views->size(); ++i) {
      const vf::View& view = (*views)[i];
      const vf::RenderedView rv = vf::render_view(view.cam, view.image, m->model.root,
                                                  m->model.meta.near, m->model.meta.far, opt);
      std::string file;
      if (!metrics_only) {
        file = split_name + "_" + std::to_string(i) + ".png";
        const std::string png_path = (fs::path(out_dir) / file).string();
        vf::write_png(png_path, rv.image);
        outputs.push_back(png_path);
      }
      const double view_ssim = opt.cell_vis ? 0.0 : vf::ssim(rv.image, view.image);
      char row[256];
      std::snprintf(row, sizeof(row), "%zu,%s,%.9g,%.9g", i, file.c_str(), rv.psnr, view_ssim);
      csv << row << "\n";
    }
    csv.close();
    outputs.push_back(csv_path);

    nlohmann::json config;
    config["split"] = split_name;
    config["samples_per_ray"] = samples_per_ray;
    config["cell_vis"] = cell_vis != 0;
    vf::write_manifest(out_dir, metrics_only ? "eval" : "render", config, 0, started,
                       std::move(outputs));
  });
}

vf_status vf_export_centres(const vf_model* m, const char* out_path) {
  if (vf_status s = require(m && out_path, "vf_export_centres: null argument"); s != VF_OK) {
    return s;
  }
  return guarded([&] {
    std::vector<vf::Vec3> centres;
    for (const vf::VoronoiNode* leaf : vf::collect_leaves(m->model.root)) {
      centres.push_back(leaf->centre);
    }
    vf::write_points_ply(out_path, centres);
  });
}

vf_status vf_export_samples(const char* reservoir_ply_in, const char* out_path) {
  if (vf_status s = require(reservoir_ply_in && out_path, "vf_export_samples: null argument");
      s != VF_OK) {
    return s;
  }
  return guarded([&] {
    const std::vector<vf::WeightedSample> samples = vf::read_samples_ply(reservoir_ply_in);
    vf::write_samples_ply(out_path, samples);
  });
}

}  // extern "C"
