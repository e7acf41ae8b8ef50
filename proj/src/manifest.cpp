#include "fareflow/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fareflow/hash.hpp"

namespace fareflow::manifest {

nlohmann::json RunManifest::args() const {
  return nlohmann::json::parse(args_json_);
}

void RunManifest::set_args(const nlohmann::json& j) { args_json_ = j.dump(); }

void RunManifest::add_input(const std::string& path) {
  inputs.push_back(FileRef{path, hash_file(path)});
}

void RunManifest::add_output(const std::string& path) {
  outputs.push_back(FileRef{path, hash_file(path)});
}

nlohmann::json RunManifest::to_json() const {
  auto files = [](const std::vector<FileRef>& refs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const FileRef& r : refs) {
      arr.push_back(nlohmann::json{{"path", r.path}, {"hash", r.hash}});
    }
    return arr;
  };
  return nlohmann::json{{"tool_version", tool_version},
                        {"command", command},
                        {"started_at_utc", started_at_utc},
                        {"wall_ms", wall_ms},
                        {"args", args()},
                        {"inputs", files(inputs)},
                        {"outputs", files(outputs)}};
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << to_json().dump(2) << "\n";
  if (!out) throw std::runtime_error("short write on manifest: " + path);
}

RunManifest start_manifest(const std::string& command) {
  RunManifest m;
  m.tool_version = "fareflow 1.0.0";
  m.command = command;
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  m.started_at_utc = buf;
  return m;
}

}  // namespace fareflow::manifest
