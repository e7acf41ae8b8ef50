#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fareflow::manifest {

// Provenance record written next to every subcommand's outputs: the exact
// arguments, content hashes of every input and output, and wall time. This
// file is the only place timestamps appear, so data outputs stay bytewise
// reproducible.
struct RunManifest {
  std::string tool_version;
  std::string command;
  std::string started_at_utc;  // ISO 8601
  double wall_ms = 0.0;

  struct FileRef {
    std::string path;
    std::string hash;  // "fnv64:<hex>"
  };
  std::vector<FileRef> inputs;
  std::vector<FileRef> outputs;
  nlohmann::json args() const;
  void set_args(const nlohmann::json& j);

  // Hashes the file now; call for inputs before running and for outputs
  // after they are written.
  void add_input(const std::string& path);
  void add_output(const std::string& path);

  nlohmann::json to_json() const;
  void save(const std::string& path) const;

 private:
  std::string args_json_ = "{}";
};

// Stamps started_at_utc from the system clock.
RunManifest start_manifest(const std::string& command);

}  // namespace fareflow::manifest
