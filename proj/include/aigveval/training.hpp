#pragma once

#include "aigveval/config.hpp"
#include "aigveval/metrics.hpp"
#include "aigveval/model.hpp"
#include "aigveval/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

namespace aigveval {

/// Linear warmup from 0 to lr over warmup_steps, then the configured decay
/// shape down to 0 (or flat for "constant") at total_steps.
inline Real lr_schedule(long step, long total_steps, long warmup_steps, Real base_lr,
                        ScheduleShape shape = ScheduleShape::linear) {
  if (step < 0 || step > total_steps) throw ValidationError("lr_schedule: step out of range");
  if (warmup_steps > 0 && step <= warmup_steps)
    return base_lr * static_cast<Real>(step) / static_cast<Real>(warmup_steps);
  if (shape == ScheduleShape::constant) return base_lr;
  if (total_steps == warmup_steps) return base_lr;
  Real progress = static_cast<Real>(step - warmup_steps) /
                  static_cast<Real>(total_steps - warmup_steps);
  if (shape == ScheduleShape::cosine)
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
  return base_lr * (1.0 - progress);
}

struct EpochLog {
  int epoch = 0;
  Real train_loss = 0;
  Real val_plcc = 0, val_srocc = 0, val_main = 0;
};

struct TrainState {
  Model model;
  long step = 0;
  int epoch = 0;
  std::vector<std::vector<Real>> adam_m, adam_v;  // aligned with trainable params
  Rng rng;
  std::vector<Real> loss_history;  // per step
  std::vector<EpochLog> epoch_logs;
  Checkpoint best;  // best-validation snapshot
  Real best_main = -1.0;

  static TrainState init(Model model) {
    TrainState st;
    st.rng.seed(model.cfg.seed ^ 0x7a1b5eed0c0ffee1ULL);
    st.model = std::move(model);
    auto params = model_params(st.model);
    for (const ParamRef& p : params) {
      if (!p.trainable) continue;
      st.adam_m.emplace_back(p.size, 0.0);
      st.adam_v.emplace_back(p.size, 0.0);
    }
    return st;
  }
};

namespace detail {

constexpr Real kAdamBeta1 = 0.9;
constexpr Real kAdamBeta2 = 0.999;
constexpr Real kAdamEps = 1e-8;

}  // namespace detail

/// One optimizer step over a batch: forward every video, Eq.-8 loss on the
/// batch scores, backward, AdamW update of the trainable, non-frozen
/// parameters. Returns the batch loss.
inline Real train_step(TrainState& state, const std::vector<const VideoFeatures*>& batch,
                       Real lr) {
  Model& model = state.model;
  const auto m = static_cast<Eigen::Index>(batch.size());
  if (m < 1) throw ValidationError("train_step: empty batch");

  std::vector<ModelForwardCache> caches(batch.size());
  Batch scores;
  scores.s.resize(m);
  scores.y.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const VideoFeatures& video = *batch[static_cast<std::size_t>(i)];
    if (!video.mos) throw ValidationError("train_step: video " + video.video_id + " has no MOS");
    scores.s[i] = model_forward(model, video, &caches[static_cast<std::size_t>(i)]);
    scores.y[i] = *video.mos;
  }

  Vec d_scores;
  Real loss = total_loss(scores, model.cfg.loss, &d_scores, /*training=*/true);
  if (!std::isfinite(loss)) {
    std::ostringstream diag;
    diag << "train_step: non-finite loss at step " << state.step << "; scores=[";
    for (Eigen::Index i = 0; i < m; ++i) diag << scores.s[i] << (i + 1 < m ? " " : "]");
    throw ValidationError(diag.str());
  }

  ModelGrads grads = ModelGrads::zeros_like(model);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (d_scores[i] == 0.0) continue;
    grads.accumulate(model_backward(model, caches[static_cast<std::size_t>(i)], d_scores[i]));
  }

  auto params = model_params(model);
  auto grefs = grad_params(model, grads);
  const Real t = static_cast<Real>(state.step + 1);
  const Real bc1 = 1.0 - std::pow(detail::kAdamBeta1, t);
  const Real bc2 = 1.0 - std::pow(detail::kAdamBeta2, t);
  std::size_t slot = 0;
  for (const ParamRef& p : params) {
    if (!p.trainable) continue;
    const ParamRef& g = grefs[slot];
    if (g.name != p.name) throw ValidationError("parameter/gradient registry mismatch");
    bool frozen = model.cfg.train.freeze.count(param_component(p.name)) > 0;
    if (!frozen && lr > 0.0) {
      auto& mom = state.adam_m[slot];
      auto& vel = state.adam_v[slot];
      for (std::size_t i = 0; i < p.size; ++i) {
        Real gv = g.data[i];
        mom[i] = detail::kAdamBeta1 * mom[i] + (1.0 - detail::kAdamBeta1) * gv;
        vel[i] = detail::kAdamBeta2 * vel[i] + (1.0 - detail::kAdamBeta2) * gv * gv;
        Real mhat = mom[i] / bc1;
        Real vhat = vel[i] / bc2;
        p.data[i] -= lr * (mhat / (std::sqrt(vhat) + detail::kAdamEps) +
                           model.cfg.train.weight_decay * p.data[i]);
      }
    }
    ++slot;
  }
  ++state.step;
  state.loss_history.push_back(loss);
  return loss;
}

inline std::vector<ScoreRecord> predict(const Model& model,
                                        const std::vector<VideoFeatures>& dataset) {
  std::vector<ScoreRecord> records;
  records.reserve(dataset.size());
  for (const VideoFeatures& video : dataset)
    records.push_back({video.video_id, model_forward(model, video), video.mos});
  return records;
}

inline Vec scores_vector(const std::vector<ScoreRecord>& records) {
  Vec v(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) v[static_cast<Eigen::Index>(i)] = records[i].score;
  return v;
}

inline Vec mos_vector(const std::vector<ScoreRecord>& records) {
  Vec v(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].mos) throw ValidationError("record " + records[i].video_id + " has no MOS");
    v[static_cast<Eigen::Index>(i)] = *records[i].mos;
  }
  return v;
}

/// Full training loop: seeded shuffling, scheduled AdamW steps, per-epoch
/// validation PLCC/SROCC, best-MainScore snapshot.
inline TrainState fit(Model model, const std::vector<VideoFeatures>& train_set,
                      const std::vector<VideoFeatures>& val_set) {
  if (train_set.empty()) throw ValidationError("fit: empty training set");
  const TrainConfig& tc = model.cfg.train;
  tc.validate();
  TrainState state = TrainState::init(std::move(model));

  const long steps_per_epoch =
      (static_cast<long>(train_set.size()) + tc.batch_size - 1) / tc.batch_size;
  const long total_steps = steps_per_epoch * tc.epochs;
  const long warmup_steps = std::lround(tc.warmup_epochs * static_cast<Real>(steps_per_epoch));

  auto validate_now = [&](const std::vector<VideoFeatures>& vs) {
    EpochLog log;
    if (vs.size() >= 2) {
      auto records = predict(state.model, vs);
      Vec s = scores_vector(records), y = mos_vector(records);
      try {
        log.val_plcc = plcc(s, y);
        log.val_srocc = srocc(s, y);
        log.val_main = main_score(log.val_plcc, log.val_srocc);
      } catch (const ValidationError&) {
        // Collapsed predictions early in training; leave the metrics at 0.
      }
    }
    return log;
  };

  if (tc.epochs == 0) {
    state.best = model_to_checkpoint(state.model);
    state.best_main = 0;
    return state;
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    state.epoch = epoch;
    // Fisher-Yates with the portable generator; batch delivery stays ordered.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_below(state.rng, i)]);

    Real epoch_loss = 0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      std::vector<const VideoFeatures*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      Real lr = lr_schedule(state.step + 1, total_steps, warmup_steps, tc.lr, tc.schedule);
      epoch_loss += train_step(state, batch, lr);
      ++batches;
    }

    EpochLog log = validate_now(val_set.empty() ? train_set : val_set);
    log.epoch = epoch + 1;
    log.train_loss = epoch_loss / static_cast<Real>(batches);
    state.epoch_logs.push_back(log);
    if (log.val_main > state.best_main) {
      state.best_main = log.val_main;
      state.best = model_to_checkpoint(state.model);
    }
  }
  if (state.best.tensors.empty()) state.best = model_to_checkpoint(state.model);
  return state;
}

// ---------------------------------------------------------------------------
// TrainState checkpointing: the model tensors plus optimizer moments, rng
// state, and loss history, so a restored run continues bit-identically.

inline Checkpoint train_state_to_checkpoint(TrainState& state) {
  Checkpoint ckpt = model_to_checkpoint(state.model);
  ckpt.meta["train.step"] = std::to_string(state.step);
  ckpt.meta["train.epoch"] = std::to_string(state.epoch);
  std::ostringstream rng_ss;
  rng_ss << state.rng;
  ckpt.meta["train.rng"] = rng_ss.str();
  ckpt.tensors.emplace_back("train.loss_history", state.loss_history);
  std::size_t slot = 0;
  for (const ParamRef& p : model_params(state.model)) {
    if (!p.trainable) continue;
    ckpt.tensors.emplace_back("adam.m." + p.name, state.adam_m[slot]);
    ckpt.tensors.emplace_back("adam.v." + p.name, state.adam_v[slot]);
    ++slot;
  }
  return ckpt;
}

inline TrainState train_state_from_checkpoint(const Checkpoint& ckpt) {
  TrainState state = TrainState::init(model_from_checkpoint(ckpt));
  if (auto it = ckpt.meta.find("train.step"); it != ckpt.meta.end())
    state.step = std::stol(it->second);
  if (auto it = ckpt.meta.find("train.epoch"); it != ckpt.meta.end())
    state.epoch = std::stoi(it->second);
  if (auto it = ckpt.meta.find("train.rng"); it != ckpt.meta.end()) {
    std::istringstream ss(it->second);
    ss >> state.rng;
  }
  if (const auto* h = ckpt.find("train.loss_history")) state.loss_history = *h;
  std::size_t slot = 0;
  for (const ParamRef& p : model_params(state.model)) {
    if (!p.trainable) continue;
    if (const auto* m = ckpt.find("adam.m." + p.name)) state.adam_m[slot] = *m;
    if (const auto* v = ckpt.find("adam.v." + p.name)) state.adam_v[slot] = *v;
    ++slot;
  }
  return state;
}

}  // namespace aigveval
