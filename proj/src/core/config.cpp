#include "core/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace vf {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& scope, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw DataError("config: unknown key '" + (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace

nlohmann::json default_config_json() {
  json doc;
  doc["seed"] = 1;
  doc["threads"] = 1;
  doc["scene"] = {{"fixture", "blobs3"},
                  {"dataset", ""},
                  {"resolution", 128},
                  {"downscale", 1},
                  {"background", {1.0, 1.0, 1.0}},
                  {"train_views", 64},
                  {"test_views", 16},
                  {"oracle_samples", 1024}};
  doc["field"] = {{"widths", {64}}, {"depth", 4}, {"l_pos", 10}, {"l_dir", 4}};
  doc["train"] = {{"epochs", 8},
                  {"budget_s", 0.0},
                  {"batch_rays", 1024},
                  {"batches_per_epoch", 50},
                  {"samples_per_ray", 128},
                  {"lr", 1e-3},
                  {"reservoir_capacity", 10000},
                  {"subdivide_epochs", {2, 6}},
                  {"cells", 16},
                  {"max_depth", 2},
                  {"fresh_init", false},
                  {"error_targeted", false},
                  {"virtual_clock", false},
                  {"eval_views", 4},
                  {"eval_every", 1}};
  doc["balance"] = {{"alpha", 0.05}, {"steps", 500}, {"knn", 8}};
  return doc;
}

nlohmann::json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config: malformed JSON in " + path + ": " + e.what());
  }
}

AppConfig parse_config(const nlohmann::json& doc) {
  check_keys(doc, "", {"seed", "threads", "scene", "field", "train", "balance"});
  AppConfig cfg;
  read_field(doc, "seed", cfg.train.seed);
  read_field(doc, "threads", cfg.train.threads);

  if (doc.contains("scene")) {
    const json& s = doc.at("scene");
    check_keys(s, "scene",
               {"fixture", "dataset", "resolution", "downscale", "background", "train_views",
                "test_views", "oracle_samples"});
    read_field(s, "fixture", cfg.scene.fixture);
    read_field(s, "dataset", cfg.scene.dataset_dir);
    read_field(s, "resolution", cfg.scene.resolution);
    read_field(s, "downscale", cfg.scene.downscale);
    read_field(s, "background", cfg.scene.background);
    read_field(s, "train_views", cfg.scene.train_views);
    read_field(s, "test_views", cfg.scene.test_views);
    read_field(s, "oracle_samples", cfg.scene.oracle_samples);
  }
  if (doc.contains("field")) {
    const json& f = doc.at("field");
    check_keys(f, "field", {"widths", "depth", "l_pos", "l_dir"});
    read_field(f, "widths", cfg.train.widths);
    read_field(f, "depth", cfg.train.depth);
    read_field(f, "l_pos", cfg.train.l_pos);
    read_field(f, "l_dir", cfg.train.l_dir);
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train",
               {"epochs", "budget_s", "batch_rays", "batches_per_epoch", "samples_per_ray", "lr",
                "reservoir_capacity", "subdivide_epochs", "cells", "max_depth", "fresh_init",
                "error_targeted", "virtual_clock", "eval_views", "eval_every"});
    read_field(t, "epochs", cfg.train.epochs);
    read_field(t, "budget_s", cfg.train.budget_s);
    read_field(t, "batch_rays", cfg.train.batch_rays);
    read_field(t, "batches_per_epoch", cfg.train.batches_per_epoch);
    read_field(t, "samples_per_ray", cfg.train.samples_per_ray);
    read_field(t, "lr", cfg.train.lr);
    read_field(t, "reservoir_capacity", cfg.train.reservoir_capacity);
    read_field(t, "subdivide_epochs", cfg.train.subdivide_epochs);
    read_field(t, "cells", cfg.train.cells);
    read_field(t, "max_depth", cfg.train.max_depth);
    read_field(t, "fresh_init", cfg.train.fresh_init);
    read_field(t, "error_targeted", cfg.train.error_targeted);
    read_field(t, "virtual_clock", cfg.train.virtual_clock);
    read_field(t, "eval_views", cfg.train.eval_views);
    read_field(t, "eval_every", cfg.train.eval_every);
  }
  if (doc.contains("balance")) {
    const json& b = doc.at("balance");
    check_keys(b, "balance", {"alpha", "steps", "knn"});
    read_field(b, "alpha", cfg.train.balance.alpha);
    read_field(b, "steps", cfg.train.balance.steps);
    read_field(b, "knn", cfg.train.balance.knn);
  }

  cfg.train.validate();
  if (cfg.scene.fixture.empty() && cfg.scene.dataset_dir.empty()) {
    throw UsageError("config: either scene.fixture or scene.dataset must be set");
  }
  if (cfg.scene.downscale < 1) throw UsageError("config: scene.downscale must be >= 1");
  if (cfg.scene.resolution < 16) throw UsageError("config: scene.resolution must be >= 16");
  return cfg;
}

void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value) {
  if (key.empty()) throw UsageError("config: empty override key");
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw UsageError("config: malformed override key '" + key + "'");
    parts.push_back(part);
  }

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // plain string
  }

  nlohmann::json* node = &doc;
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = parsed;
}

Dataset build_dataset(const SceneSelect& scene, uint64_t seed, int threads) {
  if (!scene.dataset_dir.empty()) {
    return load_dataset(scene.dataset_dir, scene.downscale, scene.background);
  }
  FixtureOptions opt;
  opt.resolution = scene.resolution;
  opt.train_views = scene.train_views;
  opt.test_views = scene.test_views;
  opt.oracle_samples = scene.oracle_samples;
  opt.background = scene.background;
  opt.threads = threads;
  return make_fixture(scene.fixture, seed, opt).second;
}

}  // namespace vf
