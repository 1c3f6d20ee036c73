#pragma once

#include "aigveval/common.hpp"
#include "aigveval/config.hpp"
#include "aigveval/media_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace aigveval {

/// Parameters of the procedural dataset: tiny moving-shape clips with
/// injected blur, noise and frame jitter whose combined strength defines the
/// MOS (monotone: heavier degradation, lower score).
struct SyntheticSpec {
  int width = 256;
  int height = 256;
  int frames = 8;
  int train_videos = 64;
  int val_videos = 16;
  std::uint64_t seed = 123;
};

namespace detail {

inline void box_blur_frame(std::vector<Real>& luma_rgb, int h, int w, int radius) {
  if (radius < 1) return;
  std::vector<Real> tmp(luma_rgb.size());
  auto idx = [&](int y, int x, int c) { return (static_cast<std::size_t>(y) * w + x) * 3 + c; };
  // Horizontal then vertical pass.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        Real sum = 0;
        int n = 0;
        for (int dx = -radius; dx <= radius; ++dx) {
          int xx = std::clamp(x + dx, 0, w - 1);
          sum += luma_rgb[idx(y, xx, c)];
          ++n;
        }
        tmp[idx(y, x, c)] = sum / n;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        Real sum = 0;
        int n = 0;
        for (int dy = -radius; dy <= radius; ++dy) {
          int yy = std::clamp(y + dy, 0, h - 1);
          sum += tmp[idx(yy, x, c)];
          ++n;
        }
        luma_rgb[idx(y, x, c)] = sum / n;
      }
}

}  // namespace detail

/// Render one synthetic video at degradation strength in [0, 1].
inline FrameSequence make_synthetic_video(const std::string& video_id, Real strength,
                                          std::uint64_t seed, int width = 256, int height = 256,
                                          int frames = 8) {
  Rng rng(seed ^ fnv1a(video_id));
  FrameSequence seq;
  seq.video_id = video_id;
  seq.frames_count = frames;
  seq.height = height;
  seq.width = width;
  seq.channels = 3;
  seq.fps = 8.0;
  seq.data.resize(seq.frame_size() * frames);

  // Scene: gradient backdrop, a moving disc and a drifting bar.
  Real bg_phase = uniform01(rng) * 2 * M_PI;
  Real disc_r = 20 + uniform01(rng) * 25;
  Real disc_x = disc_r + uniform01(rng) * (width - 2 * disc_r);
  Real disc_y = disc_r + uniform01(rng) * (height - 2 * disc_r);
  Real vx = (uniform01(rng) - 0.5) * 16.0;
  Real vy = (uniform01(rng) - 0.5) * 16.0;
  Real disc_col[3] = {60 + uniform01(rng) * 180, 60 + uniform01(rng) * 180,
                      60 + uniform01(rng) * 180};
  Real bar_y = uniform01(rng) * height;
  Real bar_v = 2.0 + uniform01(rng) * 6.0;

  const int blur_radius = static_cast<int>(std::lround(4.0 * strength));
  const Real noise_amp = 70.0 * strength;
  const int jitter_amp = static_cast<int>(std::lround(7.0 * strength));

  std::vector<Real> frame(static_cast<std::size_t>(height) * width * 3);
  for (int t = 0; t < frames; ++t) {
    Real cx = disc_x + vx * t, cy = disc_y + vy * t;
    Real by = bar_y + bar_v * t;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        Real base = 110 + 70 * std::sin(bg_phase + 4.0 * x / width) +
                    40 * std::cos(2.5 * y / static_cast<Real>(height) * M_PI);
        Real px[3] = {base, base * 0.9, base * 1.1};
        Real dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy < disc_r * disc_r)
          for (int c = 0; c < 3; ++c) px[c] = disc_col[c];
        Real bar_d = std::fmod(std::abs(y - by), static_cast<Real>(height));
        if (bar_d < 6.0 || bar_d > height - 6.0)
          for (int c = 0; c < 3; ++c) px[c] = 235.0 - px[c] * 0.3;
        for (int c = 0; c < 3; ++c)
          frame[(static_cast<std::size_t>(y) * width + x) * 3 + c] = px[c];
      }
    }
    detail::box_blur_frame(frame, height, width, blur_radius);

    int shift_x = jitter_amp > 0
                      ? static_cast<int>(uniform_below(rng, 2 * jitter_amp + 1)) - jitter_amp
                      : 0;
    int shift_y = jitter_amp > 0
                      ? static_cast<int>(uniform_below(rng, 2 * jitter_amp + 1)) - jitter_amp
                      : 0;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        int sy = std::clamp(y + shift_y, 0, height - 1);
        int sx = std::clamp(x + shift_x, 0, width - 1);
        for (int c = 0; c < 3; ++c) {
          Real v = frame[(static_cast<std::size_t>(sy) * width + sx) * 3 + c];
          if (noise_amp > 0) v += uniform_sym(rng, noise_amp);
          seq.at(t, y, x, c) =
              static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      }
    }
  }
  return seq;
}

/// MOS on [1, 5], monotone decreasing in degradation strength.
inline Real synthetic_mos(Real strength) { return 5.0 - 4.0 * strength; }

/// Ready-to-train configuration for the procedural dataset. The architecture
/// matches the library defaults; only the learning rate is raised to a scale
/// where a few hundred optimizer steps on toy statistics can converge.
inline PipelineConfig synthetic_preset_config() {
  PipelineConfig cfg;
  cfg.train.lr = 5e-3;
  return cfg;
}

struct SyntheticDataset {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
};

/// Write frame directories plus train/val manifests under root.
inline SyntheticDataset generate_synthetic_dataset(const std::filesystem::path& root,
                                                   const SyntheticSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "videos");
  Rng rng(spec.seed);

  auto emit = [&](const std::string& prefix, int count, const fs::path& manifest_path) {
    std::ofstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot write manifest: " + manifest_path.string());
    manifest << "video_id,uri,mos,prompt\n" << std::setprecision(8);
    for (int i = 0; i < count; ++i) {
      std::ostringstream id;
      id << prefix << std::setw(3) << std::setfill('0') << i;
      // Strengths stratified over [0, 1] with a small jitter, so every run
      // covers the full quality range.
      Real strength = std::clamp((i + uniform01(rng)) / static_cast<Real>(count), 0.0, 1.0);
      FrameSequence video = make_synthetic_video(id.str(), strength, spec.seed, spec.width,
                                                 spec.height, spec.frames);
      fs::path dir = root / "videos" / id.str();
      encode_frame_dir(video, dir);
      manifest << id.str() << "," << dir.string() << "," << synthetic_mos(strength)
               << ",synthetic moving shapes\n";
    }
  };

  SyntheticDataset out;
  out.train_manifest = root / "train.csv";
  out.val_manifest = root / "val.csv";
  emit("train_", spec.train_videos, out.train_manifest);
  emit("val_", spec.val_videos, out.val_manifest);
  return out;
}

}  // namespace aigveval
