#include "qarm/manifest.hpp"

#include "qarm/embedding.hpp"
#include "qarm/errors.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& out_dir,
                                    const std::string& stage) {
  return out_dir / ("stage_" + stage + ".manifest");
}

}  // namespace

void save_stage_manifest(const std::filesystem::path& out_dir,
                         const StageManifest& m) {
  std::string out;
  out += "stage=" + m.stage + "\n";
  out += "seed=" + std::to_string(m.seed) + "\n";
  out += "wall_ms=" + fmt_double(m.wall_ms) + "\n";
  for (const auto& [k, v] : m.config_echo) out += "config." + k + "=" + v + "\n";
  for (const auto& [p, c] : m.inputs)
    out += "input=" + p + ":" + std::to_string(c) + "\n";
  for (const auto& [p, c] : m.outputs)
    out += "output=" + p + ":" + std::to_string(c) + "\n";
  write_text(manifest_path(out_dir, m.stage), out);
}

StageManifest load_stage_manifest(const std::filesystem::path& out_dir,
                                  const std::string& stage) {
  const auto path = manifest_path(out_dir, stage);
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing manifest for stage '" + stage +
                             "'; run `qarm " + stage + "` first");
  StageManifest m;
  for (const auto& line : read_lines(path)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "stage") m.stage = val;
    else if (key == "seed") m.seed = static_cast<std::uint64_t>(parse_int(val));
    else if (key == "wall_ms") m.wall_ms = parse_double(val);
    else if (key.rfind("config.", 0) == 0)
      m.config_echo.emplace_back(key.substr(7), val);
    else if (key == "input" || key == "output") {
      const auto colon = val.rfind(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("manifest: bad artifact line " + line);
      const std::string rel = val.substr(0, colon);
      const std::uint64_t sum = std::stoull(val.substr(colon + 1));
      (key == "input" ? m.inputs : m.outputs).emplace_back(rel, sum);
    }
  }
  return m;
}

std::uint64_t require_artifact(const std::filesystem::path& out_dir,
                               const std::string& rel,
                               const std::string& producer_stage) {
  const auto path = out_dir / rel;
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing artifact '" + rel + "'; run `qarm " +
                             producer_stage + "` first");
  const StageManifest m = load_stage_manifest(out_dir, producer_stage);
  for (const auto& [p, recorded] : m.outputs) {
    if (p != rel) continue;
    const std::uint64_t current = file_checksum(path);
    if (current != recorded)
      throw StaleArtifact("artifact '" + rel +
                          "' does not match the checksum recorded by stage '" +
                          producer_stage + "'; re-run `qarm " + producer_stage +
                          "`");
    return current;
  }
  throw std::runtime_error("artifact '" + rel +
                           "' is not an output of stage '" + producer_stage +
                           "'; run `qarm " + producer_stage + "` first");
}

}  // namespace qarm
