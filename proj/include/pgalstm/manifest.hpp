#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgalstm/config.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/version.hpp"

namespace pgalstm {

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_digest(const std::string& path) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(read_file(path));
  return os.str();
}

// What a command read, what it wrote and the full configuration it ran
// with. Free of timestamps, so identical runs write identical manifests.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();

  void add_input(const std::string& path) { inputs.emplace_back(path, file_digest(path)); }
  void add_output(const std::string& path) { outputs.emplace_back(path, file_digest(path)); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["toolkit_version"] = std::string(kToolkitVersion);
    j["seeds"] = {{"data_seed", config.at("data_seed")}, {"split_seed", config.at("split_seed")},
                  {"ae_seed", config.at("ae_seed")},     {"seed", config.at("seed")},
                  {"runs", config.at("runs")},           {"mc_seed", config.at("mc_seed")}};
    j["config"] = config;
    const auto files = [](const auto& list) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& [path, digest] : list) arr.push_back({{"path", path}, {"digest", digest}});
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["summary"] = summary;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << to_json().dump(2) << '\n';
  }
};

// Applies the configuration recorded in a manifest.
inline void apply_manifest_config(ExperimentConfig& cfg, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  if (!j.contains("config") || !j["config"].is_object()) throw DataError("manifest " + path + " has no config");
  for (const auto& [key, value] : j["config"].items()) set_config_value(cfg, key, value.get<std::string>());
}

}  // namespace pgalstm
