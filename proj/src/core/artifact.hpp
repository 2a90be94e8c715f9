#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace vf {

std::string sha256_file(const std::string& path);

// Writes manifest.json into out_dir: command, config snapshot, seed,
// timestamps, per-output checksums and an overall artifact hash.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& config, uint64_t seed,
                    const std::string& started_utc, std::vector<std::string> outputs);

std::string utc_timestamp();

}  // namespace vf
