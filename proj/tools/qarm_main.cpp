// Command-line driver for the quantitative-alignment pipeline. Each
// subcommand runs one stage against an output directory; stages validate
// their upstream artifacts through the stage manifests.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "qarm/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset = "desk";
  std::string out_dir = "out";
  long long seed = -1;  // -1 = keep config value
  std::vector<std::string> overrides;
};

qarm::PipelineConfig resolve_config(const CommonOpts& opts) {
  qarm::PipelineConfig cfg = opts.config_path.empty()
                                 ? qarm::preset_config(opts.preset)
                                 : qarm::load_config_file(opts.config_path);
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    qarm::apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--preset", opts.preset, "desk | paper-default")
      ->check(CLI::IsMember({"desk", "paper-default"}));
  cmd->add_option("--out", opts.out_dir, "artifact directory");
  cmd->add_option("--seed", opts.seed, "master seed override");
  cmd->add_option("--set", opts.overrides, "config override key=value")
      ->take_all();
}

std::vector<qarm::Variant> parse_variant_list(
    const std::vector<std::string>& names) {
  std::vector<qarm::Variant> out;
  for (const auto& n : names) out.push_back(qarm::parse_variant(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"behavior-aligned semantic-code recommendation pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> variant_names;
  std::string sweep_axis = "K";
  std::vector<std::size_t> sweep_values;

  auto* synth = app.add_subcommand("synth", "generate the synthetic world");
  auto* mine = app.add_subcommand("mine-pairs", "mine behavior item pairs");
  auto* align = app.add_subcommand("align", "train the alignment head");
  auto* codes = app.add_subcommand("build-codes", "fit residual codebooks");
  auto* encode = app.add_subcommand("encode", "emit semantic codes");
  auto* train = app.add_subcommand("train", "train ranker variants");
  auto* evaluate = app.add_subcommand("evaluate", "score checkpoints");
  auto* sweep = app.add_subcommand("sweep", "hyper-parameter sweep");
  auto* report = app.add_subcommand("report", "aggregate the variant ladder");
  auto* pipeline =
      app.add_subcommand("pipeline", "run every stage in order");

  for (CLI::App* cmd : {synth, mine, align, codes, encode, train, evaluate,
                        sweep, report, pipeline})
    add_common(cmd, opts);
  for (CLI::App* cmd : {train, evaluate})
    cmd->add_option("--variant", variant_names,
                    "baseline | ia_rep | vq | rq | vq_rq (repeatable)")
        ->take_all();
  sweep->add_option("--axis", sweep_axis, "K | d")
      ->check(CLI::IsMember({"K", "d"}));
  sweep->add_option("--values", sweep_values, "axis values")->required()
      ->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    const qarm::PipelineConfig cfg = resolve_config(opts);
    if (synth->parsed()) qarm::stage_synth(cfg, opts.out_dir);
    if (mine->parsed()) qarm::stage_mine_pairs(cfg, opts.out_dir);
    if (align->parsed()) qarm::stage_align(cfg, opts.out_dir);
    if (codes->parsed()) qarm::stage_build_codes(cfg, opts.out_dir);
    if (encode->parsed()) qarm::stage_encode(cfg, opts.out_dir);
    if (train->parsed())
      qarm::stage_train(cfg, opts.out_dir, parse_variant_list(variant_names));
    if (evaluate->parsed())
      qarm::stage_evaluate(cfg, opts.out_dir,
                           parse_variant_list(variant_names));
    if (sweep->parsed())
      qarm::stage_sweep(cfg, opts.out_dir, sweep_axis, sweep_values);
    if (report->parsed()) qarm::stage_report(cfg, opts.out_dir);
    if (pipeline->parsed()) qarm::run_full_pipeline(cfg, opts.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
