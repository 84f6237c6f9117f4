#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qarm {

// Per-stage provenance record: what was read (with checksums), what was
// written (with checksums), the seed and the config echo. Together the
// manifests turn the output directory into a content-addressed DAG.
struct StageManifest {
  std::string stage;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::vector<std::pair<std::string, std::uint64_t>> inputs;   // rel path
  std::vector<std::pair<std::string, std::uint64_t>> outputs;  // rel path
};

void save_stage_manifest(const std::filesystem::path& out_dir,
                         const StageManifest& m);
StageManifest load_stage_manifest(const std::filesystem::path& out_dir,
                                  const std::string& stage);

// Verifies that `rel` exists under out_dir and still matches the checksum
// the producing stage recorded. Throws a runtime_error naming the
// producing subcommand when missing, StaleArtifact on checksum mismatch.
// Returns the verified checksum.
std::uint64_t require_artifact(const std::filesystem::path& out_dir,
                               const std::string& rel,
                               const std::string& producer_stage);

}  // namespace qarm
