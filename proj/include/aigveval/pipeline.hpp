#pragma once

#include "aigveval/config.hpp"
#include "aigveval/encoders.hpp"
#include "aigveval/media_io.hpp"
#include "aigveval/metrics.hpp"
#include "aigveval/model.hpp"
#include "aigveval/sampling.hpp"
#include "aigveval/synthetic.hpp"
#include "aigveval/training.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

namespace aigveval {

namespace fs = std::filesystem;

inline fs::path cache_path(const fs::path& cache_dir, const std::string& video_id, Modality m) {
  return cache_dir / (video_id + "." + modality_name(m) + ".feat");
}

/// Sample the three views of one video and write its toy feature caches.
inline void prepare_video(const ManifestRecord& rec, const PipelineConfig& cfg,
                          const ExtractorBundle& ex, const fs::path& cache_dir) {
  FrameSequence video = decode_video(rec.uri, rec.video_id);
  auto save = [&](Modality m, const Mat& features, const std::string& producer) {
    FeatureCache cache;
    cache.video_id = rec.video_id;
    cache.modality = m;
    cache.shape = {features.rows(), features.cols()};
    cache.values.reserve(static_cast<std::size_t>(features.size()));
    for (Eigen::Index r = 0; r < features.rows(); ++r)
      for (Eigen::Index c = 0; c < features.cols(); ++c) cache.values.push_back(features(r, c));
    cache.producer = producer;
    save_feature_cache(cache, cache_path(cache_dir, rec.video_id, m));
  };
  if (cfg.has_modality(Modality::semantic)) {
    FrameSequence key_frames = uniform_frame_sample(video, cfg.sampling.semantic_frame_count);
    save(Modality::semantic, encode_semantic(key_frames, *ex.semantic).features,
         ex.semantic->name());
  }
  if (cfg.has_modality(Modality::technical)) {
    FragmentVideo fragments = grid_minipatch_sample(video, cfg.sampling);
    save(Modality::technical, encode_technical(fragments, *ex.technical).features,
         ex.technical->name());
  }
  if (cfg.has_modality(Modality::motion)) {
    SlowFastClip clip = slowfast_sample(video, cfg.sampling);
    save(Modality::motion, encode_motion(clip, *ex.motion).features, ex.motion->name());
  }
}

struct PrepareResult {
  int prepared = 0;
  int skipped = 0;
  std::vector<std::string> failed;

  int exit_code() const { return failed.empty() ? 0 : 1; }
};

/// Idempotent feature preparation: videos whose caches already exist are
/// skipped; per-video failures are collected, not fatal.
inline PrepareResult cmd_prepare(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                 const fs::path& cache_dir, int workers = 1,
                                 std::ostream& log = std::cerr) {
  fs::create_directories(cache_dir);
  ExtractorBundle ex = make_extractors(cfg.extractor);
  PrepareResult result;
  std::mutex mu;

  auto fresh = [&](const ManifestRecord& rec) {
    for (Modality m : cfg.modalities)
      if (!fs::exists(cache_path(cache_dir, rec.video_id, m))) return false;
    return true;
  };

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ManifestRecord& rec = manifest.records[i];
      if (fresh(rec)) {
        std::lock_guard lock(mu);
        ++result.skipped;
        continue;
      }
      try {
        prepare_video(rec, cfg, ex, cache_dir);
        std::lock_guard lock(mu);
        ++result.prepared;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        result.failed.push_back(rec.video_id);
        log << "prepare: " << rec.video_id << " failed: " << e.what() << "\n";
      }
    }
  };

  workers = std::max(1, workers);
  if (workers == 1 || manifest.records.size() < 2) {
    work(0, manifest.records.size());
  } else {
    std::vector<std::thread> pool;
    std::size_t n = manifest.records.size();
    std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      std::size_t b = std::min(n, static_cast<std::size_t>(w) * chunk);
      std::size_t e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return result;
}

/// Load per-video features from the cache directory, in manifest order.
inline std::vector<VideoFeatures> load_dataset(const DatasetManifest& manifest,
                                               const PipelineConfig& cfg,
                                               const fs::path& cache_dir) {
  std::vector<VideoFeatures> out;
  out.reserve(manifest.records.size());
  for (const ManifestRecord& rec : manifest.records) {
    VideoFeatures video;
    video.video_id = rec.video_id;
    video.mos = rec.mos;
    for (Modality m : cfg.modalities) {
      fs::path path = cache_path(cache_dir, rec.video_id, m);
      if (!fs::exists(path))
        throw IoError("missing feature cache for video " + rec.video_id + " (" +
                      modality_name(m) + "); run prepare first");
      video.features[m] = load_feature_cache(path, m).as_matrix();
    }
    out.push_back(std::move(video));
  }
  return out;
}

inline std::map<Modality, int> dataset_feature_dims(const std::vector<VideoFeatures>& data) {
  if (data.empty()) throw ValidationError("empty dataset");
  std::map<Modality, int> dims;
  for (const auto& [m, f] : data.front().features) dims[m] = static_cast<int>(f.cols());
  return dims;
}

struct TrainArtifacts {
  fs::path checkpoint;       // final train state
  fs::path best_checkpoint;  // best validation snapshot
  fs::path log_csv;
  std::vector<EpochLog> epoch_logs;
  std::vector<Real> loss_history;
};

inline TrainArtifacts cmd_train(const DatasetManifest& train_manifest,
                                const DatasetManifest& val_manifest, const PipelineConfig& cfg,
                                const fs::path& cache_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto train_set = load_dataset(train_manifest, cfg, cache_dir);
  auto val_set = load_dataset(val_manifest, cfg, cache_dir);
  for (const auto& v : train_set)
    if (!v.mos) throw ValidationError("training video " + v.video_id + " has no MOS");

  // Fill the projection widths from what the caches actually contain, so
  // imported backbone features and toy features both just work.
  Model model = Model::init(cfg, dataset_feature_dims(train_set));
  TrainState state = fit(std::move(model), train_set, val_set);

  TrainArtifacts artifacts;
  artifacts.checkpoint = out_dir / "checkpoint.bin";
  artifacts.best_checkpoint = out_dir / "best.bin";
  artifacts.log_csv = out_dir / "train_log.csv";
  write_checkpoint(train_state_to_checkpoint(state), artifacts.checkpoint);
  write_checkpoint(state.best, artifacts.best_checkpoint);
  std::ofstream log(artifacts.log_csv);
  log << "epoch,train_loss,val_plcc,val_srocc,val_main\n" << std::setprecision(10);
  for (const EpochLog& e : state.epoch_logs)
    log << e.epoch << "," << e.train_loss << "," << e.val_plcc << "," << e.val_srocc << ","
        << e.val_main << "\n";
  write_config_echo(cfg, out_dir / "config_echo.txt");
  artifacts.epoch_logs = state.epoch_logs;
  artifacts.loss_history = state.loss_history;
  return artifacts;
}

inline std::vector<ScoreRecord> cmd_predict(const DatasetManifest& manifest,
                                            const fs::path& checkpoint_path,
                                            const fs::path& cache_dir,
                                            const fs::path& out_csv) {
  Model model = model_from_checkpoint(read_checkpoint(checkpoint_path));
  auto dataset = load_dataset(manifest, model.cfg, cache_dir);
  auto records = predict(model, dataset);
  write_predictions(records, out_csv);
  if (out_csv.has_parent_path())
    write_config_echo(model.cfg, out_csv.parent_path() / "config_echo.txt");
  return records;
}

inline EvalReport cmd_evaluate(const std::vector<ScoreRecord>& predictions,
                               const DatasetManifest& manifest) {
  std::map<std::string, Real> mos;
  for (const auto& rec : manifest.records) {
    if (!rec.mos) throw ValidationError("evaluate: video " + rec.video_id + " has no MOS");
    mos[rec.video_id] = *rec.mos;
  }
  std::set<std::string> pred_ids, manifest_ids;
  for (const auto& p : predictions) pred_ids.insert(p.video_id);
  for (const auto& [id, _] : mos) manifest_ids.insert(id);
  if (pred_ids != manifest_ids) {
    std::ostringstream msg;
    msg << "evaluate: video_id sets differ;";
    for (const auto& id : manifest_ids)
      if (!pred_ids.count(id)) msg << " missing-prediction:" << id;
    for (const auto& id : pred_ids)
      if (!manifest_ids.count(id)) msg << " unknown-id:" << id;
    throw ValidationError(msg.str());
  }
  Vec s(static_cast<Eigen::Index>(predictions.size())), y(s.size());
  Eigen::Index i = 0;
  for (const auto& p : predictions) {
    s[i] = p.score;
    y[i] = mos.at(p.video_id);
    ++i;
  }
  return evaluate_scores(s, y);
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "samples    " << r.n << "\n"
      << "PLCC       " << r.plcc << "\n"
      << "SROCC      " << r.srocc << "\n"
      << "KRCC       " << r.krcc << "\n"
      << "RMSE       " << r.rmse << "\n"
      << "MainScore  " << r.main_score << "\n";
  return out.str();
}

inline void write_report_kv(const EvalReport& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << std::setprecision(10);
  out << "n = " << r.n << "\nplcc = " << r.plcc << "\nsrocc = " << r.srocc
      << "\nkrcc = " << r.krcc << "\nrmse = " << r.rmse << "\nmain_score = " << r.main_score
      << "\n";
}

struct ModelRow {
  std::string name;
  EvalReport report;
};

/// Rank prediction files by MainScore (descending, name tie-break).
inline std::vector<ModelRow> cmd_report(const std::vector<fs::path>& prediction_csvs,
                                        const DatasetManifest& manifest) {
  if (prediction_csvs.empty()) throw ValidationError("report: need at least one prediction CSV");
  std::vector<ModelRow> rows;
  for (const auto& path : prediction_csvs)
    rows.push_back({path.stem().string(), cmd_evaluate(read_predictions(path), manifest)});
  std::sort(rows.begin(), rows.end(), [](const ModelRow& a, const ModelRow& b) {
    if (a.report.main_score != b.report.main_score)
      return a.report.main_score > b.report.main_score;
    return a.name < b.name;
  });
  return rows;
}

inline std::string format_report_table(const std::vector<ModelRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(6) << "Rank" << std::setw(24) << "Model" << std::right
      << std::setw(11) << "MainScore" << std::setw(8) << "PLCC" << std::setw(8) << "SROCC"
      << "\n";
  out << std::fixed << std::setprecision(3);
  int rank = 1;
  for (const auto& row : rows)
    out << std::left << std::setw(6) << rank++ << std::setw(24) << row.name << std::right
        << std::setw(11) << row.report.main_score << std::setw(8) << row.report.plcc
        << std::setw(8) << row.report.srocc << "\n";
  return out.str();
}

inline void write_report_table_csv(const std::vector<ModelRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << "rank,model,main_score,plcc,srocc\n" << std::setprecision(10);
  int rank = 1;
  for (const auto& row : rows)
    out << rank++ << "," << row.name << "," << row.report.main_score << "," << row.report.plcc
        << "," << row.report.srocc << "\n";
}

}  // namespace aigveval
