#pragma once

#include <json.hpp>
#include <string>

#include "core/scene.hpp"
#include "core/trainer.hpp"

namespace vf {

// Scene selection half of the config: either a named analytic fixture or a
// dataset directory in the transforms-JSON layout.
struct SceneSelect {
  std::string fixture = "blobs3";
  std::string dataset_dir;
  int resolution = 128;
  int downscale = 1;
  Rgb background{1.0, 1.0, 1.0};
  int train_views = 64;
  int test_views = 16;
  int oracle_samples = 1024;
};

struct AppConfig {
  TrainConfig train;
  SceneSelect scene;
};

nlohmann::json default_config_json();
nlohmann::json load_config_json(const std::string& path);

// Rejects unknown keys so typos fail loudly.
AppConfig parse_config(const nlohmann::json& doc);

// Dotted-path override; the value string is parsed as JSON when possible and
// taken verbatim as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

Dataset build_dataset(const SceneSelect& scene, uint64_t seed, int threads);

}  // namespace vf
