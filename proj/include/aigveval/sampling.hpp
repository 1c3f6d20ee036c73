#pragma once

#include "aigveval/common.hpp"
#include "aigveval/media_io.hpp"

#include <cmath>
#include <vector>

namespace aigveval {

struct SamplingSpec {
  int grid_size = 32;       // G_f
  int fragment_edge = 224;  // output spatial size of fragment frames
  std::uint64_t seed = 0;
  int clip_length = 8;  // slow-path frame count T
  int alpha = 4;        // fast path samples alpha*T frames
  int semantic_frame_count = 8;

  int patch_edge() const { return fragment_edge / grid_size; }

  void validate() const {
    if (grid_size < 1 || fragment_edge < 1 || clip_length < 1 || alpha < 1 ||
        semantic_frame_count < 1)
      throw ValidationError("SamplingSpec: all sizes must be positive");
    if (fragment_edge % grid_size != 0)
      throw ValidationError("SamplingSpec: fragment_edge must be divisible by grid_size");
  }
};

/// Source rectangle of one grid cell's mini-patch, identical across frames.
struct PatchProvenance {
  int src_y = 0, src_x = 0;  // top-left corner in the input frame
  int edge = 0;
};

struct FragmentVideo {
  FrameSequence frames;
  std::vector<PatchProvenance> provenance;  // grid_size * grid_size entries, row-major
  int grid_size = 0;
};

struct SlowFastClip {
  FrameSequence slow;
  FrameSequence fast;
  std::vector<int> slow_indices;
  std::vector<int> fast_indices;
};

/// Indices round(k*(T-1)/(count-1)) for k in [0, count); index 0 when count==1.
inline std::vector<int> uniform_indices(int total, int count) {
  if (count < 1) throw ValidationError("uniform_indices: count must be >= 1");
  std::vector<int> idx(count);
  if (count == 1) {
    idx[0] = 0;
    return idx;
  }
  for (int k = 0; k < count; ++k)
    idx[k] = static_cast<int>(std::lround(static_cast<double>(k) * (total - 1) / (count - 1)));
  return idx;
}

inline FrameSequence select_frames(const FrameSequence& video, const std::vector<int>& indices) {
  FrameSequence out;
  out.video_id = video.video_id;
  out.height = video.height;
  out.width = video.width;
  out.channels = video.channels;
  out.fps = video.fps;
  out.frames_count = static_cast<int>(indices.size());
  out.data.reserve(video.frame_size() * indices.size());
  for (int i : indices)
    out.data.insert(out.data.end(), video.frame(i), video.frame(i) + video.frame_size());
  return out;
}

inline FrameSequence uniform_frame_sample(const FrameSequence& video, int count) {
  video.validate();
  return select_frames(video, uniform_indices(video.frames_count, count));
}

/// Grid Mini-patch Sampling. The frame is split into a grid_size x grid_size
/// grid with proportional boundaries; one patch_edge^2 mini-patch is drawn
/// uniformly (seeded) inside each cell. Offsets are drawn once per video and
/// reused for every frame, so temporal distortions survive the sampling.
inline FragmentVideo grid_minipatch_sample(const FrameSequence& video, const SamplingSpec& spec) {
  video.validate();
  spec.validate();
  const int g = spec.grid_size;
  const int p = spec.patch_edge();
  if (video.height < g * p || video.width < g * p)
    throw ValidationError("grid_minipatch_sample: video " + video.video_id + " is " +
                          std::to_string(video.width) + "x" + std::to_string(video.height) +
                          ", need at least " + std::to_string(g * p) + " in each dimension");

  Rng rng(spec.seed ^ fnv1a(video.video_id));
  FragmentVideo out;
  out.grid_size = g;
  out.provenance.reserve(static_cast<std::size_t>(g) * g);
  for (int gy = 0; gy < g; ++gy) {
    const int y0 = static_cast<int>(static_cast<std::int64_t>(gy) * video.height / g);
    const int y1 = static_cast<int>(static_cast<std::int64_t>(gy + 1) * video.height / g);
    for (int gx = 0; gx < g; ++gx) {
      const int x0 = static_cast<int>(static_cast<std::int64_t>(gx) * video.width / g);
      const int x1 = static_cast<int>(static_cast<std::int64_t>(gx + 1) * video.width / g);
      if (y1 - y0 < p || x1 - x0 < p)
        throw ValidationError("grid_minipatch_sample: cell smaller than patch edge");
      PatchProvenance prov;
      prov.edge = p;
      prov.src_y = y0 + static_cast<int>(uniform_below(rng, y1 - y0 - p + 1));
      prov.src_x = x0 + static_cast<int>(uniform_below(rng, x1 - x0 - p + 1));
      out.provenance.push_back(prov);
    }
  }

  FrameSequence& frames = out.frames;
  frames.video_id = video.video_id;
  frames.frames_count = video.frames_count;
  frames.height = frames.width = spec.fragment_edge;
  frames.channels = video.channels;
  frames.fps = video.fps;
  frames.data.resize(frames.frame_size() * frames.frames_count);
  for (int t = 0; t < video.frames_count; ++t) {
    for (int gy = 0; gy < g; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        const PatchProvenance& prov = out.provenance[static_cast<std::size_t>(gy) * g + gx];
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) {
            for (int c = 0; c < video.channels; ++c) {
              frames.at(t, gy * p + dy, gx * p + dx, c) =
                  video.at(t, prov.src_y + dy, prov.src_x + dx, c);
            }
          }
        }
      }
    }
  }
  return out;
}

/// Dense pool = all decoded frames; slow path samples clip_length of them,
/// fast path samples alpha*clip_length over the same span.
inline SlowFastClip slowfast_sample(const FrameSequence& video, const SamplingSpec& spec) {
  video.validate();
  spec.validate();
  SlowFastClip clip;
  clip.slow_indices = uniform_indices(video.frames_count, spec.clip_length);
  clip.fast_indices = uniform_indices(video.frames_count, spec.alpha * spec.clip_length);
  clip.slow = select_frames(video, clip.slow_indices);
  clip.fast = select_frames(video, clip.fast_indices);
  return clip;
}

}  // namespace aigveval
