#include "core/artifact.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/error.hpp"

namespace fs = std::filesystem;

namespace vf {

namespace {

std::string hex(const unsigned char* bytes, size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (size_t i = 0; i < n; ++i) {
    out[i * 2] = digits[bytes[i] >> 4];
    out[i * 2 + 1] = digits[bytes[i] & 0xf];
  }
  return out;
}

std::string sha256_bytes(const void* data, size_t n) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("artifact: SHA-256 failed");
  }
  return hex(digest, len);
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("artifact: cannot open " + path);

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw NumericError("artifact: SHA-256 init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, len);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& config, uint64_t seed,
                    const std::string& started_utc, std::vector<std::string> outputs) {
  std::sort(outputs.begin(), outputs.end());
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["started_utc"] = started_utc;
  manifest["finished_utc"] = utc_timestamp();

  std::string combined;
  manifest["outputs"] = nlohmann::json::array();
  for (const std::string& path : outputs) {
    const std::string digest = sha256_file(path);
    const std::string rel = fs::relative(path, out_dir).string();
    nlohmann::json entry;
    entry["path"] = rel;
    entry["sha256"] = digest;
    entry["bytes"] = static_cast<uint64_t>(fs::file_size(path));
    manifest["outputs"].push_back(entry);
    combined += rel + ":" + digest + "\n";
  }
  manifest["artifact_hash"] = sha256_bytes(combined.data(), combined.size());

  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw DataError("artifact: cannot write manifest.json in " + out_dir);
  out << manifest.dump(2) << "\n";
}

}  // namespace vf
