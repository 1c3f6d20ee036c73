// Command-line front end: make-synthetic, prepare, train, predict, evaluate,
// report. Exit codes: 0 success, 1 partial failure, 2 invalid invocation.

#include "aigveval/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace aigveval;

struct ConfigArgs {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 0;
  bool seed_set = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "flat key=value config file");
    app->add_option("--preset", preset, "named base config (synthetic)")
        ->check(CLI::IsMember({"synthetic"}));
    app->add_option("--set", overrides, "override a config key (key=value, repeatable)");
    app->add_option("--seed", seed, "RNG seed")->each([this](const std::string&) {
      seed_set = true;
    });
  }

  PipelineConfig resolve() const {
    ConfigMap map;
    if (preset == "synthetic") map = pipeline_config_to_map(synthetic_preset_config());
    if (!config_file.empty())
      for (const auto& [k, v] : load_config_file(config_file)) map[k] = v;
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ValidationError("--set expects key=value, got '" + kv + "'");
      map[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (seed_set) map["seed"] = std::to_string(seed);
    return pipeline_config_from_map(map);
  }
};

int run(int argc, char** argv) {
  CLI::App app{"AIGV visual quality assessment pipeline"};
  app.require_subcommand(1);

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "generate the labeled synthetic dataset");
  std::string synth_out;
  SyntheticSpec synth_spec;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--train-videos", synth_spec.train_videos);
  synth->add_option("--val-videos", synth_spec.val_videos);
  synth->add_option("--frames", synth_spec.frames);
  synth->add_option("--width", synth_spec.width);
  synth->add_option("--height", synth_spec.height);
  synth->add_option("--seed", synth_spec.seed);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "sample videos and cache features");
  std::string prep_manifest, prep_cache;
  int workers = 1;
  ConfigArgs prep_cfg;
  prepare->add_option("--manifest", prep_manifest)->required();
  prepare->add_option("--cache-dir", prep_cache)->required();
  prepare->add_option("--workers", workers, "parallel workers");
  prep_cfg.attach(prepare);
  int grid_size = 0, fragment_edge = 0, clip_length = 0, alpha = 0, semantic_frames = 0;
  prepare->add_option("--grid-size", grid_size);
  prepare->add_option("--fragment-edge", fragment_edge);
  prepare->add_option("--clip-length", clip_length);
  prepare->add_option("--alpha", alpha);
  prepare->add_option("--semantic-frames", semantic_frames);

  // train
  auto* train = app.add_subcommand("train", "fit the model on a prepared dataset");
  std::string train_manifest, val_manifest, train_cache, train_out;
  ConfigArgs train_cfg;
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--val-manifest", val_manifest, "validation manifest (defaults to --manifest)");
  train->add_option("--cache-dir", train_cache)->required();
  train->add_option("--out", train_out)->required();
  train_cfg.attach(train);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "score a manifest from a checkpoint");
  std::string pred_manifest, pred_ckpt, pred_cache, pred_out;
  predict_cmd->add_option("--manifest", pred_manifest)->required();
  predict_cmd->add_option("--checkpoint", pred_ckpt)->required();
  predict_cmd->add_option("--cache-dir", pred_cache)->required();
  predict_cmd->add_option("--out", pred_out)->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "correlation metrics for a prediction CSV");
  std::string eval_pred, eval_manifest, eval_out;
  evaluate->add_option("--predictions", eval_pred)->required();
  evaluate->add_option("--manifest", eval_manifest)->required();
  evaluate->add_option("--out", eval_out, "directory for report files");

  // report
  auto* report = app.add_subcommand("report", "rank several prediction CSVs by MainScore");
  std::string report_manifest, report_out;
  std::vector<std::string> report_preds;
  report->add_option("--manifest", report_manifest)->required();
  report->add_option("--out", report_out, "directory for the table CSV");
  report->add_option("predictions", report_preds, "prediction CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the error message
    return code == 0 ? 0 : 2;
  }

  if (*synth) {
    auto ds = generate_synthetic_dataset(synth_out, synth_spec);
    std::cout << "wrote " << ds.train_manifest.string() << " and " << ds.val_manifest.string()
              << "\n";
    return 0;
  }

  if (*prepare) {
    PipelineConfig cfg = prep_cfg.resolve();
    if (grid_size) cfg.sampling.grid_size = grid_size;
    if (fragment_edge) cfg.sampling.fragment_edge = fragment_edge;
    if (clip_length) cfg.sampling.clip_length = clip_length;
    if (alpha) cfg.sampling.alpha = alpha;
    if (semantic_frames) cfg.sampling.semantic_frame_count = semantic_frames;
    cfg.sampling.validate();
    auto manifest = load_manifest(prep_manifest, cfg.mos_min, cfg.mos_max);
    auto result = cmd_prepare(manifest, cfg, prep_cache, workers);
    write_config_echo(cfg, fs::path(prep_cache) / "config_echo.txt");
    std::cout << "prepared " << result.prepared << ", skipped " << result.skipped << ", failed "
              << result.failed.size() << "\n";
    for (const auto& id : result.failed) std::cout << "failed: " << id << "\n";
    return result.exit_code();
  }

  if (*train) {
    PipelineConfig cfg = train_cfg.resolve();
    auto tm = load_manifest(train_manifest, cfg.mos_min, cfg.mos_max);
    auto vm = val_manifest.empty() ? tm : load_manifest(val_manifest, cfg.mos_min, cfg.mos_max);
    auto artifacts = cmd_train(tm, vm, cfg, train_cache, train_out);
    std::cout << "checkpoint: " << artifacts.checkpoint.string() << "\n"
              << "best:       " << artifacts.best_checkpoint.string() << "\n"
              << "log:        " << artifacts.log_csv.string() << "\n";
    for (const EpochLog& e : artifacts.epoch_logs)
      std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " val_main " << e.val_main
                << "\n";
    return 0;
  }

  if (*predict_cmd) {
    auto manifest = load_manifest(pred_manifest);
    cmd_predict(manifest, pred_ckpt, pred_cache, pred_out);
    std::cout << "wrote " << pred_out << "\n";
    return 0;
  }

  if (*evaluate) {
    auto manifest = load_manifest(eval_manifest);
    auto rep = cmd_evaluate(read_predictions(eval_pred), manifest);
    std::cout << format_report(rep);
    if (!eval_out.empty()) {
      fs::create_directories(eval_out);
      write_report_kv(rep, fs::path(eval_out) / "report.kv");
      std::ofstream txt(fs::path(eval_out) / "report.txt");
      txt << format_report(rep);
    }
    return 0;
  }

  if (*report) {
    auto manifest = load_manifest(report_manifest);
    std::vector<fs::path> paths(report_preds.begin(), report_preds.end());
    auto rows = cmd_report(paths, manifest);
    std::cout << format_report_table(rows);
    if (!report_out.empty()) {
      fs::create_directories(report_out);
      write_report_table_csv(rows, fs::path(report_out) / "report_table.csv");
    }
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
