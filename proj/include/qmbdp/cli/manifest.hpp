#pragma once

// Run manifest: resolved configuration, seed, timestamps and a SHA-256 digest
// of every artifact.

#include <qmbdp/error.hpp>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qmbdp::cli {

inline constexpr const char* kToolName = "qmbdp";
inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Artifact {
  std::string file;  ///< relative to the output directory
  std::string content;
};

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  std::string started;
  std::string finished;
  std::size_t failed_points = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  ///< (file, sha256)
  std::vector<std::size_t> sizes;

  void add(const Artifact& a) {
    outputs.emplace_back(a.file, sha256_hex(a.content));
    sizes.push_back(a.content.size());
  }

  [[nodiscard]] std::string json() const {
    nlohmann::ordered_json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["command"] = command;
    j["master_seed"] = master_seed;
    j["threads"] = threads;
    j["started"] = started;
    j["finished"] = finished;
    j["status"] = failed_points == 0 ? "ok" : "failed";
    j["failed_points"] = failed_points;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < outputs.size(); ++i)
      files.push_back({{"file", outputs[i].first}, {"bytes", sizes[i]}, {"sha256", outputs[i].second}});
    j["outputs"] = files;
    return j.dump(2) + "\n";
  }
};

}  // namespace qmbdp::cli
