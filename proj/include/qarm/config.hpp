#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qarm/align.hpp"
#include "qarm/pairs.hpp"
#include "qarm/ranker.hpp"
#include "qarm/synth.hpp"

namespace qarm {

// Every stage's tunables in one place. Presets: "desk" (fast, small) and
// "paper-default" (K=25, L=6, d=64 code setup).
struct PipelineConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;

  GenConfig world;
  std::size_t events = 50000;

  MfConfig mf;
  std::size_t u2i_window = 50;
  double swing_alpha = 1.0;
  std::size_t swing_top_m = 10;
  std::size_t swing_user_cap = 200;
  double pair_holdout = 0.1;

  AlignConfig align;

  std::size_t quant_K = 8;
  std::size_t quant_L = 4;
  std::size_t quant_N = 64;
  bool vq_exclude_self = false;

  RankerConfig ranker;
  std::vector<Variant> variants = {Variant::Baseline, Variant::IaRep,
                                   Variant::Vq, Variant::Rq, Variant::VqRq};
  double split_train = 0.8;
  double split_valid = 0.1;
  double split_test = 0.1;

  static PipelineConfig desk();
  static PipelineConfig paper_default();

  void validate() const;
};

// key=value text file with '#' comments, `include <relpath>` (relative to
// the including file) and `preset=<name>` lines, applied in order on top
// of the desk defaults.
PipelineConfig load_config_file(const std::filesystem::path& path);

PipelineConfig preset_config(const std::string& name);

// Applies one "key=value" override; throws on unknown keys or bad values.
void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                     const std::string& value);

// Canonical dump used for manifests and config echoes.
std::vector<std::pair<std::string, std::string>> config_dump(
    const PipelineConfig& cfg);

}  // namespace qarm
