#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qarm/errors.hpp"
#include "qarm/pipeline.hpp"
#include "qarm/tsv.hpp"

using namespace qarm;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

// Small enough to run every stage in well under a second.
PipelineConfig tiny_config() {
  PipelineConfig cfg = PipelineConfig::desk();
  cfg.world.n_items = 200;
  cfg.world.n_users = 60;
  cfg.world.n_categories = 6;
  cfg.world.n_styles = 6;
  cfg.world.d_base = 12;
  cfg.events = 3000;
  cfg.mf.epochs = 2;
  cfg.align.steps = 40;
  cfg.align.d_hidden = 16;
  cfg.align.d_out = 8;
  cfg.quant_K = 4;
  cfg.quant_L = 2;
  cfg.quant_N = 16;
  cfg.ranker.epochs = 1;
  cfg.variants = {Variant::Baseline, Variant::VqRq};
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config: presets pin the advertised values") {
  const PipelineConfig desk = PipelineConfig::desk();
  CHECK(desk.world.n_items == 2000);
  CHECK(desk.align.d_out == 32);
  CHECK(desk.quant_N == 64);

  const PipelineConfig paper = PipelineConfig::paper_default();
  CHECK(paper.quant_K == 25);
  CHECK(paper.quant_L == 6);
  CHECK(paper.align.d_out == 64);
  CHECK(paper.ranker.e == 64);
  paper.validate();

  CHECK_THROWS_AS(preset_config("unknown"), std::invalid_argument);
}

TEST_CASE("config: key=value files with includes and comments") {
  TempDir dir("qarm_cfg_test");
  write_text(dir.path / "base.cfg",
             "# comment line\n"
             "world.items=321\n"
             "align.steps=77\n");
  write_text(dir.path / "main.cfg",
             "include base.cfg\n"
             "seed=9  # trailing comment\n"
             "world.items=500\n");
  const PipelineConfig cfg = load_config_file(dir.path / "main.cfg");
  CHECK(cfg.world.n_items == 500);  // later line wins
  CHECK(cfg.align.steps == 77);
  CHECK(cfg.seed == 9);

  write_text(dir.path / "preset.cfg", "preset=paper-default\nquant.N=32\n");
  const PipelineConfig paper = load_config_file(dir.path / "preset.cfg");
  CHECK(paper.quant_K == 25);
  CHECK(paper.quant_N == 32);

  write_text(dir.path / "bad.cfg", "no_such_key=1\n");
  CHECK_THROWS_AS(load_config_file(dir.path / "bad.cfg"),
                  std::invalid_argument);
  write_text(dir.path / "bad2.cfg", "world.items\n");
  CHECK_THROWS_AS(load_config_file(dir.path / "bad2.cfg"),
                  std::invalid_argument);
}

TEST_CASE("config: overrides validate values") {
  PipelineConfig cfg = PipelineConfig::desk();
  apply_config_kv(cfg, "ranker.variants", "baseline,vq");
  REQUIRE(cfg.variants.size() == 2);
  CHECK(cfg.variants[1] == Variant::Vq);
  apply_config_kv(cfg, "ranker.split", "0.7,0.2,0.1");
  CHECK(cfg.split_train == doctest::Approx(0.7));
  CHECK_THROWS_AS(apply_config_kv(cfg, "ranker.split", "0.7,0.3"),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_config_kv(cfg, "quant.vq_exclude_self", "maybe"),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_config_kv(cfg, "bogus", "1"), std::invalid_argument);

  cfg.quant_N = 10000;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("pipeline: stages chain, manifests detect staleness and gaps") {
  TempDir dir("qarm_pipe_test");
  const PipelineConfig cfg = tiny_config();

  // Running a downstream stage before its producer names the producer.
  CHECK_THROWS_WITH_AS(stage_mine_pairs(cfg, dir.path),
                       "missing artifact 'log.tsv'; run `qarm synth` first",
                       std::runtime_error);

  stage_synth(cfg, dir.path);
  stage_mine_pairs(cfg, dir.path);
  stage_align(cfg, dir.path);
  stage_build_codes(cfg, dir.path);
  stage_encode(cfg, dir.path);

  // Corrupting an upstream artifact trips the checksum guard.
  {
    const std::string bytes = file_bytes(dir.path / "log.tsv");
    write_text(dir.path / "log.tsv", bytes + "tamper\n");
    CHECK_THROWS_AS(stage_mine_pairs(cfg, dir.path), StaleArtifact);
    write_text(dir.path / "log.tsv", bytes);  // restore
  }

  stage_train(cfg, dir.path);
  stage_evaluate(cfg, dir.path);
  stage_report(cfg, dir.path);

  const auto ladder = read_lines(dir.path / "ladder.tsv");
  REQUIRE(ladder.size() == 3);  // header + 2 variants
  CHECK(ladder[1].rfind("baseline\t", 0) == 0);
  CHECK(ladder[2].rfind("vq_rq\t", 0) == 0);

  const StageManifest m = load_stage_manifest(dir.path, "encode");
  CHECK(m.stage == "encode");
  CHECK(!m.inputs.empty());
  CHECK(!m.outputs.empty());
  CHECK(m.wall_ms >= 0.0);
}

TEST_CASE("pipeline: reruns are byte-identical, artifacts never mutate") {
  TempDir a("qarm_repro_a"), b("qarm_repro_b");
  const PipelineConfig cfg = tiny_config();

  run_full_pipeline(cfg, a.path);

  // Snapshot of upstream artifacts to verify no stage mutates them.
  const std::string log_before = file_bytes(a.path / "log.tsv");
  const std::string aligned_before = file_bytes(a.path / "aligned.qemb");

  run_full_pipeline(cfg, b.path);

  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path);
    if (rel.string().find(".manifest") != std::string::npos)
      continue;  // manifests carry wall-clock times
    INFO("artifact ", rel.string());
    CHECK(file_bytes(entry.path()) == file_bytes(b.path / rel));
    ++compared;
  }
  CHECK(compared > 10);
  CHECK(file_bytes(a.path / "log.tsv") == log_before);
  CHECK(file_bytes(a.path / "aligned.qemb") == aligned_before);
}

TEST_CASE("pipeline: sweep emits one row per axis value") {
  TempDir dir("qarm_sweep_test");
  PipelineConfig cfg = tiny_config();
  cfg.variants = {Variant::Baseline, Variant::Vq};
  run_full_pipeline(cfg, dir.path);

  stage_sweep(cfg, dir.path, "K", {2, 4});
  const auto rows = read_lines(dir.path / "sweep_K.tsv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("K\t", 0) == 0);
  CHECK(rows[1].rfind("2\t", 0) == 0);
  CHECK(rows[2].rfind("4\t", 0) == 0);

  stage_sweep(cfg, dir.path, "d", {4});
  const auto drows = read_lines(dir.path / "sweep_d.tsv");
  REQUIRE(drows.size() == 2);

  CHECK_THROWS_AS(stage_sweep(cfg, dir.path, "zz", {1}),
                  std::invalid_argument);
}
