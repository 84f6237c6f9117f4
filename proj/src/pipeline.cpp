#include "qarm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "qarm/align.hpp"
#include "qarm/errors.hpp"
#include "qarm/pca.hpp"
#include "qarm/report.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

namespace fs = std::filesystem;

namespace {

class StageTimer {
 public:
  StageTimer() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

void record_outputs(const fs::path& out, StageManifest& m,
                    const std::vector<std::string>& rels) {
  for (const auto& rel : rels)
    m.outputs.emplace_back(rel, file_checksum(out / rel));
}

std::size_t variant_index(Variant v) { return static_cast<std::size_t>(v); }

std::string ckpt_dir_name(Variant v) {
  return std::string("ckpt_") + variant_name(v);
}

std::vector<std::string> ckpt_files(const fs::path& out, Variant v) {
  std::vector<std::string> rels;
  const fs::path dir = out / ckpt_dir_name(v);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    rels.push_back(ckpt_dir_name(v) + "/" + f.filename().string());
  return rels;
}

}  // namespace

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& what) {
  if (what == "world") return cfg.seed;
  if (what == "log") return cfg.seed + 1;
  if (what == "mf") return cfg.seed + 2;
  if (what == "pair_split") return cfg.seed + 3;
  if (what == "align") return cfg.seed + 4;
  if (what == "rq") return cfg.seed + 5;
  if (what.rfind("ranker.", 0) == 0)
    return cfg.seed + 10 + variant_index(parse_variant(what.substr(7)));
  throw std::invalid_argument("stage_seed: unknown role " + what);
}

void stage_synth(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  StageTimer timer;

  const World world = generate_world(cfg.world, stage_seed(cfg, "world"));
  const InteractionLog log = emit_log(world, cfg.events, stage_seed(cfg, "log"));

  save_qemb(out / "base.qemb", world.base_embeddings());
  save_log(out / "log.tsv", log);
  save_items_tsv(out / "items.tsv", world);
  save_world_manifest(out / "world.txt", world);

  StageManifest m;
  m.stage = "synth";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  record_outputs(out, m, {"base.qemb", "log.tsv", "items.tsv", "world.txt"});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_mine_pairs(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageTimer timer;
  StageManifest m;
  m.stage = "mine-pairs";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("log.tsv", require_artifact(out, "log.tsv", "synth"));

  const InteractionLog log = load_log(out / "log.tsv");
  const IdEmbeddingModel mf =
      train_id_embeddings(log, cfg.mf, stage_seed(cfg, "mf"));
  {
    std::string curve = "epoch\tloss\n";
    for (std::size_t i = 0; i < mf.loss_curve.size(); ++i)
      curve += std::to_string(i + 1) + "\t" + fmt_double(mf.loss_curve[i]) +
               "\n";
    write_text(out / "mf_loss.tsv", curve);
  }

  const PairDataset u2i = mine_u2i_pairs(log, mf, cfg.u2i_window);
  const PairDataset i2i = mine_i2i_swing(log, cfg.swing_alpha, cfg.swing_top_m,
                                         cfg.swing_user_cap);
  const PairDataset all = merge_pairs(u2i, i2i);
  PairDataset train, holdout;
  split_pairs(all, cfg.pair_holdout, stage_seed(cfg, "pair_split"), &train,
              &holdout);

  save_pairs(out / "pairs.tsv", all);
  save_pairs(out / "pairs_train.tsv", train);
  save_pairs(out / "pairs_holdout.tsv", holdout);

  record_outputs(out, m, {"pairs.tsv", "pairs_train.tsv", "pairs_holdout.tsv",
                          "mf_loss.tsv"});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_align(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageTimer timer;
  StageManifest m;
  m.stage = "align";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("base.qemb",
                        require_artifact(out, "base.qemb", "synth"));
  m.inputs.emplace_back(
      "pairs_train.tsv", require_artifact(out, "pairs_train.tsv", "mine-pairs"));
  m.inputs.emplace_back("pairs_holdout.tsv",
                        require_artifact(out, "pairs_holdout.tsv", "mine-pairs"));

  const EmbeddingMatrix base = load_qemb(out / "base.qemb");
  const PairDataset train = load_pairs(out / "pairs_train.tsv");
  const PairDataset holdout = load_pairs(out / "pairs_holdout.tsv");

  const AlignResult res =
      align_train(base, train, cfg.align, stage_seed(cfg, "align"));
  save_qemb(out / "aligned.qemb", res.aligned);
  {
    EmbeddingMatrix raw;
    raw.data = res.aligned_raw;
    raw.ids = res.aligned.ids;
    save_qemb(out / "aligned_raw.qemb", raw);
  }
  {
    std::string curve = "step\tloss\n";
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i)
      curve += std::to_string(i + 1) + "\t" + fmt_double(res.loss_curve[i]) +
               "\n";
    write_text(out / "align_loss.tsv", curve);
  }
  {
    // Consistency monitor: held-out pair recall, aligned vs raw base.
    std::string rep;
    if (!holdout.pairs.empty()) {
      rep += "recall10_base=" + fmt_double(eval_pair_recall(base, holdout, 10)) +
             "\n";
      rep += "recall10_aligned=" +
             fmt_double(eval_pair_recall(res.aligned, holdout, 10)) + "\n";
    } else {
      rep += "recall10_base=nan\nrecall10_aligned=nan\n";
    }
    rep += "holdout_pairs=" + std::to_string(holdout.pairs.size()) + "\n";
    write_text(out / "align_report.txt", rep);
  }

  record_outputs(out, m, {"aligned.qemb", "aligned_raw.qemb", "align_loss.tsv",
                          "align_report.txt"});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_build_codes(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageTimer timer;
  StageManifest m;
  m.stage = "build-codes";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("aligned.qemb",
                        require_artifact(out, "aligned.qemb", "align"));
  m.inputs.emplace_back("aligned_raw.qemb",
                        require_artifact(out, "aligned_raw.qemb", "align"));

  const EmbeddingMatrix aligned = load_qemb(out / "aligned.qemb");
  const EmbeddingMatrix raw = load_qemb(out / "aligned_raw.qemb");

  const RQCodebooks rq = build_rq_codebooks(raw.data, cfg.quant_N, cfg.quant_L,
                                            stage_seed(cfg, "rq"));
  save_rq_codebooks(out / "codebooks", rq, cfg.quant_K,
                    content_checksum(aligned));

  std::vector<std::string> rels = {"codebooks/codebooks.manifest"};
  for (std::size_t l = 1; l <= rq.levels.size(); ++l)
    rels.push_back("codebooks/rq_level_" + std::to_string(l) + ".qemb");
  record_outputs(out, m, rels);
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_encode(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageTimer timer;
  StageManifest m;
  m.stage = "encode";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("aligned.qemb",
                        require_artifact(out, "aligned.qemb", "align"));
  m.inputs.emplace_back("aligned_raw.qemb",
                        require_artifact(out, "aligned_raw.qemb", "align"));
  m.inputs.emplace_back(
      "codebooks/codebooks.manifest",
      require_artifact(out, "codebooks/codebooks.manifest", "build-codes"));

  const EmbeddingMatrix aligned = load_qemb(out / "aligned.qemb");
  const EmbeddingMatrix raw = load_qemb(out / "aligned_raw.qemb");
  std::uint64_t recorded = 0;
  const RQCodebooks rq = load_rq_codebooks(out / "codebooks", &recorded);
  if (recorded != content_checksum(aligned))
    throw StaleArtifact(
        "codebooks were built from a different aligned matrix; re-run "
        "`qarm build-codes`");

  const VQCodebook vq = build_vq_codebook(aligned);
  const auto codes = encode_catalog(aligned, raw.data, vq, rq, cfg.quant_K,
                                    cfg.vq_exclude_self);
  save_codes(out / "codes.tsv", codes, cfg.quant_K, cfg.quant_L);

  record_outputs(out, m, {"codes.tsv"});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

AssembledData load_training_inputs(const PipelineConfig& cfg,
                                   const fs::path& out) {
  AssembledData data;
  require_artifact(out, "log.tsv", "synth");
  require_artifact(out, "codes.tsv", "encode");
  require_artifact(out, "aligned.qemb", "align");

  data.log = load_log(out / "log.tsv");
  data.codes = load_codes(out / "codes.tsv", cfg.quant_K, cfg.quant_L);
  for (const auto& c : data.codes) data.item_ids.push_back(c.item_id);

  std::set<std::string> users;
  for (const auto& r : data.log.rows) users.insert(r.user_id);
  data.user_ids.assign(users.begin(), users.end());

  const EmbeddingMatrix aligned = load_qemb(out / "aligned.qemb");
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < aligned.ids.size(); ++i)
    row_of[aligned.ids[i]] = i;
  data.aligned_by_catalog = Mat(data.item_ids.size(), aligned.cols());
  for (std::size_t i = 0; i < data.item_ids.size(); ++i) {
    const auto it = row_of.find(data.item_ids[i]);
    if (it == row_of.end())
      throw StaleArtifact("codes.tsv references item " + data.item_ids[i] +
                          " missing from aligned.qemb; re-run `qarm encode`");
    std::copy(aligned.data.row(it->second).begin(),
              aligned.data.row(it->second).end(),
              data.aligned_by_catalog.row(i).begin());
  }

  data.split =
      assemble_dataset(data.log, data.item_ids, data.user_ids,
                       cfg.ranker.n_history, cfg.split_train, cfg.split_valid,
                       cfg.split_test);
  return data;
}

void stage_train(const PipelineConfig& cfg, const fs::path& out,
                 std::vector<Variant> variants) {
  cfg.validate();
  if (variants.empty()) variants = cfg.variants;
  StageTimer timer;
  StageManifest m;
  m.stage = "train";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("log.tsv", require_artifact(out, "log.tsv", "synth"));
  m.inputs.emplace_back("codes.tsv",
                        require_artifact(out, "codes.tsv", "encode"));
  m.inputs.emplace_back("aligned.qemb",
                        require_artifact(out, "aligned.qemb", "align"));

  const AssembledData data = load_training_inputs(cfg, out);

  std::vector<std::string> rels;
  for (Variant v : variants) {
    RankerConfig rc = cfg.ranker;
    rc.variant = v;
    const std::uint64_t seed =
        stage_seed(cfg, std::string("ranker.") + variant_name(v));
    MoEModel model =
        make_moe_model(rc, &data.codes, &data.aligned_by_catalog,
                       data.user_ids.size(), data.item_ids.size(), seed);
    const TrainStats stats = train_ranker(model, data.split.train, seed + 1);
    save_checkpoint(out / ckpt_dir_name(v), model);
    save_epoch_metrics(out / ("metrics_" + std::string(variant_name(v)) +
                              ".tsv"),
                       stats);
    rels.push_back("metrics_" + std::string(variant_name(v)) + ".tsv");
    for (const auto& rel : ckpt_files(out, v)) rels.push_back(rel);
  }

  record_outputs(out, m, rels);
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_evaluate(const PipelineConfig& cfg, const fs::path& out,
                    std::vector<Variant> variants) {
  cfg.validate();
  if (variants.empty()) variants = cfg.variants;
  StageTimer timer;
  StageManifest m;
  m.stage = "evaluate";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);
  m.inputs.emplace_back("log.tsv", require_artifact(out, "log.tsv", "synth"));
  m.inputs.emplace_back("codes.tsv",
                        require_artifact(out, "codes.tsv", "encode"));
  m.inputs.emplace_back("items.tsv",
                        require_artifact(out, "items.tsv", "synth"));

  const AssembledData data = load_training_inputs(cfg, out);
  const std::vector<int> groups = popularity_groups(data.log, data.item_ids);

  // Baseline predictions anchor the per-group deltas; fall back to the
  // evaluated variant itself when no baseline checkpoint exists.
  std::vector<std::array<double, 2>> baseline_probs;
  const bool have_baseline =
      fs::exists(out / ckpt_dir_name(Variant::Baseline) / "model.manifest");
  if (have_baseline) {
    MoEModel base = load_checkpoint(out / ckpt_dir_name(Variant::Baseline),
                                    &data.codes, &data.aligned_by_catalog);
    baseline_probs = base.predict(data.split.test);
  }

  std::vector<std::string> rels;
  for (Variant v : variants) {
    MoEModel model = load_checkpoint(out / ckpt_dir_name(v), &data.codes,
                                     &data.aligned_by_catalog);
    const auto probs = model.predict(data.split.test);
    const auto& base_ref = have_baseline ? baseline_probs : probs;
    const MetricReport report = evaluate_predictions(
        data.split.test, probs, base_ref, groups, cfg.ranker.tasks);
    const auto ctcvr = ctcvr_auc(data.split.test, probs);
    const std::string rel =
        "report_" + std::string(variant_name(v)) + ".tsv";
    save_report(out / rel, report, ctcvr);
    rels.push_back(rel);
  }

  // Figure-style 2D projections of base and aligned geometry.
  {
    const auto tags = load_items_tsv(out / "items.tsv");
    const EmbeddingMatrix base = load_qemb(out / "base.qemb");
    const EmbeddingMatrix aligned = load_qemb(out / "aligned.qemb");
    save_projection_tsv(out / "projection_base.tsv", base.ids,
                        pca_project_2d(base.data), tags);
    save_projection_tsv(out / "projection_aligned.tsv", aligned.ids,
                        pca_project_2d(aligned.data), tags);
    rels.push_back("projection_base.tsv");
    rels.push_back("projection_aligned.tsv");
  }

  record_outputs(out, m, rels);
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_report(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  StageTimer timer;
  StageManifest m;
  m.stage = "report";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);

  const std::vector<std::string> metrics = {"ctr.auc",  "ctr.uauc", "ctr.gauc",
                                            "cvr.auc",  "cvr.uauc", "cvr.gauc"};
  std::string ladder = "variant";
  for (const auto& k : metrics) ladder += "\t" + k;
  ladder += "\tdelta_ctr_auc\n";

  double baseline_ctr_auc = 0.0;
  bool have_baseline = false;
  std::vector<std::pair<Variant, std::map<std::string, std::string>>> rows;
  for (Variant v : cfg.variants) {
    const std::string rel = "report_" + std::string(variant_name(v)) + ".tsv";
    m.inputs.emplace_back(rel, require_artifact(out, rel, "evaluate"));
    rows.emplace_back(v, load_report_summary(out / rel));
    if (v == Variant::Baseline) {
      baseline_ctr_auc = parse_double(rows.back().second.at("ctr.auc"));
      have_baseline = true;
    }
  }
  for (auto& [v, kv] : rows) {
    ladder += variant_name(v);
    for (const auto& k : metrics)
      ladder += "\t" + (kv.count(k) ? kv.at(k) : "nan");
    const double delta =
        have_baseline ? parse_double(kv.at("ctr.auc")) - baseline_ctr_auc : 0.0;
    ladder += "\t" + fmt_double(delta) + "\n";
  }
  write_text(out / "ladder.tsv", ladder);

  record_outputs(out, m, {"ladder.tsv"});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void stage_sweep(const PipelineConfig& cfg, const fs::path& out,
                 const std::string& axis,
                 const std::vector<std::size_t>& values) {
  cfg.validate();
  if (axis != "K" && axis != "d")
    throw std::invalid_argument("sweep: axis must be K or d");
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  StageTimer timer;
  StageManifest m;
  m.stage = "sweep";
  m.seed = cfg.seed;
  m.config_echo = config_dump(cfg);

  // The swept variant retrains per value on top of the shared upstream
  // artifacts; deltas reference the parent run's baseline report.
  double parent_baseline_auc = 0.0;
  bool have_parent_baseline = false;
  if (fs::exists(out / "report_baseline.tsv")) {
    parent_baseline_auc = parse_double(
        load_report_summary(out / "report_baseline.tsv").at("ctr.auc"));
    have_parent_baseline = true;
  }

  const Variant variant = axis == "K" ? Variant::Vq : Variant::VqRq;
  std::string table = axis + "\tctr.auc\tctr.uauc\tctr.gauc\tdelta_ctr_auc\n";

  for (std::size_t value : values) {
    const fs::path sub = out / ("sweep_" + axis + "_" + std::to_string(value));
    fs::create_directories(sub);
    fs::create_directories(sub / "codebooks");

    // Share upstream artifacts (and their manifests) by copy.
    const std::vector<std::string> shared = {
        "base.qemb",        "log.tsv",          "items.tsv",
        "world.txt",        "aligned.qemb",     "aligned_raw.qemb",
        "align_loss.tsv",   "align_report.txt", "stage_synth.manifest",
        "stage_align.manifest", "stage_build-codes.manifest"};
    for (const auto& rel : shared)
      fs::copy_file(out / rel, sub / rel, fs::copy_options::overwrite_existing);
    for (const auto& e : fs::directory_iterator(out / "codebooks"))
      fs::copy_file(e.path(), sub / "codebooks" / e.path().filename(),
                    fs::copy_options::overwrite_existing);

    PipelineConfig swept = cfg;
    swept.variants = {variant};
    if (axis == "K")
      swept.quant_K = value;
    else
      swept.ranker.e = value;

    if (axis == "K") {
      stage_encode(swept, sub);
    } else {
      fs::copy_file(out / "codes.tsv", sub / "codes.tsv",
                    fs::copy_options::overwrite_existing);
      fs::copy_file(out / "stage_encode.manifest", sub / "stage_encode.manifest",
                    fs::copy_options::overwrite_existing);
    }
    stage_train(swept, sub, {variant});
    stage_evaluate(swept, sub, {variant});

    const auto kv = load_report_summary(
        sub / ("report_" + std::string(variant_name(variant)) + ".tsv"));
    const double auc_v = parse_double(kv.at("ctr.auc"));
    table += std::to_string(value) + "\t" + kv.at("ctr.auc") + "\t" +
             kv.at("ctr.uauc") + "\t" + kv.at("ctr.gauc") + "\t" +
             fmt_double(have_parent_baseline ? auc_v - parent_baseline_auc
                                             : 0.0) +
             "\n";
  }

  const std::string rel = "sweep_" + axis + ".tsv";
  write_text(out / rel, table);
  record_outputs(out, m, {rel});
  m.wall_ms = timer.ms();
  save_stage_manifest(out, m);
}

void run_full_pipeline(const PipelineConfig& cfg, const fs::path& out) {
  stage_synth(cfg, out);
  stage_mine_pairs(cfg, out);
  stage_align(cfg, out);
  stage_build_codes(cfg, out);
  stage_encode(cfg, out);
  stage_train(cfg, out);
  stage_evaluate(cfg, out);
  stage_report(cfg, out);
}

}  // namespace qarm
