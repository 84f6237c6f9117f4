#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qarm/config.hpp"
#include "qarm/manifest.hpp"
#include "qarm/quantize.hpp"

namespace qarm {

// Stage entry points shared by the CLI and the tests. Every stage reads
// its upstream artifacts from out_dir (validating them against the
// producer's manifest), writes its own artifacts plus a stage manifest,
// and is byte-reproducible for a fixed (config, seed).
void stage_synth(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_mine_pairs(const PipelineConfig& cfg,
                      const std::filesystem::path& out);
void stage_align(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_build_codes(const PipelineConfig& cfg,
                       const std::filesystem::path& out);
void stage_encode(const PipelineConfig& cfg, const std::filesystem::path& out);

// Empty variant list = cfg.variants.
void stage_train(const PipelineConfig& cfg, const std::filesystem::path& out,
                 std::vector<Variant> variants = {});
void stage_evaluate(const PipelineConfig& cfg,
                    const std::filesystem::path& out,
                    std::vector<Variant> variants = {});
void stage_report(const PipelineConfig& cfg, const std::filesystem::path& out);

// axis "K" re-encodes and retrains the vq variant per value; axis "d"
// retrains the vq_rq variant with the given code embedding width.
void stage_sweep(const PipelineConfig& cfg, const std::filesystem::path& out,
                 const std::string& axis, const std::vector<std::size_t>& values);

void run_full_pipeline(const PipelineConfig& cfg,
                       const std::filesystem::path& out);

// Derived per-stage seeds (documented, stable).
std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& what);

// Training inputs reconstructed from artifacts; shared by train/evaluate
// so both see the identical dataset split.
struct AssembledData {
  InteractionLog log;
  std::vector<SemanticCodes> codes;     // catalog order (sorted by item id)
  std::vector<std::string> item_ids;    // == codes item ids
  std::vector<std::string> user_ids;    // sorted distinct log users
  Mat aligned_by_catalog;               // aligned rows in catalog order
  DatasetSplit split;
};
AssembledData load_training_inputs(const PipelineConfig& cfg,
                                   const std::filesystem::path& out);

}  // namespace qarm
