// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/errors.hpp"
#include "evomerge/merge_ops.hpp"
#include "evomerge/version.hpp"

namespace evomerge {

/// Everything needed to reproduce a run's output artifacts byte for byte.
/// Written atomically (temp file + rename) at run end.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config_paths;
  std::uint64_t seed = 0;
  std::string tool_version = kVersion;
  std::string started_at;
  std::string finished_at;
  nlohmann::json best_config;  // MergeConfig JSON, or null
  double best_fitness = 0;
  bool has_best = false;
  std::vector<std::string> output_paths;

  static std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
  }

  nlohmann::json to_json() const {
    return {{"format", kManifestFormatVersion},
            {"command", command},
            {"config_paths", config_paths},
            {"seed", seed},
            {"tool_version", tool_version},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"best_config", has_best ? best_config : nlohmann::json(nullptr)},
            {"best_fitness", best_fitness},
            {"outputs", output_paths}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_paths = j.at("config_paths").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    if (!j.at("best_config").is_null()) {
      m.best_config = j.at("best_config");
      m.has_best = true;
    }
    m.best_fitness = j.at("best_fitness").get<double>();
    m.output_paths = j.at("outputs").get<std::vector<std::string>>();
    return m;
  }

  void write(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error("cannot write manifest '" + path + "'");
      out << to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
  }
};

}  // namespace evomerge
