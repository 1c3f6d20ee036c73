#pragma once

#include "aigveval/common.hpp"
#include "aigveval/media_io.hpp"
#include "aigveval/sampling.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace aigveval {

struct EncoderOutput {
  Modality modality = Modality::semantic;
  Mat features;  // N x d_feat
};

struct TokenBlock {
  Modality modality = Modality::semantic;
  Mat tokens;  // N x d_model
};

// ---------------------------------------------------------------------------
// Extractor interfaces. Real backbones stay out of process: their features
// come in through the FeatureCache import path with the same output contract.

class SemanticExtractor {
 public:
  virtual ~SemanticExtractor() = default;
  virtual Mat extract(const FrameSequence& frames) const = 0;
  virtual int feature_dim() const = 0;
  virtual std::string name() const = 0;
  /// Flat view of any internal parameters, for freeze auditing.
  virtual Vec parameters() const { return Vec(); }
};

class TechnicalExtractor {
 public:
  virtual ~TechnicalExtractor() = default;
  virtual Mat extract(const FragmentVideo& fragments) const = 0;
  virtual int feature_dim() const = 0;
  virtual std::string name() const = 0;
};

class MotionExtractor {
 public:
  virtual ~MotionExtractor() = default;
  virtual Mat extract(const SlowFastClip& clip) const = 0;
  virtual int feature_dim() const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

inline Real luma(const FrameSequence& f, int t, int y, int x, const Vec& w) {
  if (f.channels == 1) return f.at(t, y, x, 0);
  return w[0] * f.at(t, y, x, 0) + w[1] * f.at(t, y, x, 1) + w[2] * f.at(t, y, x, 2);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Toy extractors: deterministic pooled pixel statistics, quality-correlated
// enough for end-to-end smoke training without any pretrained weights.

/// Per-frame brightness/contrast/layout statistics standing in for a
/// semantic backbone. One row per input frame.
class ToySemanticExtractor : public SemanticExtractor {
 public:
  static constexpr int kGrid = 4;
  static constexpr int kHistBins = 8;

  ToySemanticExtractor() : luma_weights_(3) { luma_weights_ << 0.299, 0.587, 0.114; }

  int feature_dim() const override { return 6 + kGrid * kGrid + kHistBins; }
  std::string name() const override { return "toy-semantic"; }
  Vec parameters() const override { return luma_weights_; }

  Mat extract(const FrameSequence& frames) const override {
    frames.validate();
    Mat out(frames.frames_count, feature_dim());
    for (int t = 0; t < frames.frames_count; ++t) {
      int col = 0;
      // Channel means and stds, scaled to [0,1].
      for (int c = 0; c < 3; ++c) {
        int cc = frames.channels == 3 ? c : 0;
        Real sum = 0, sum2 = 0;
        for (int y = 0; y < frames.height; ++y)
          for (int x = 0; x < frames.width; ++x) {
            Real v = frames.at(t, y, x, cc) / 255.0;
            sum += v;
            sum2 += v * v;
          }
        Real n = static_cast<Real>(frames.height) * frames.width;
        Real mean = sum / n;
        out(t, col++) = mean;
        out(t, 3 + c) = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
      }
      col = 6;
      // Coarse spatial layout: kGrid x kGrid luma means.
      for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
          int y0 = gy * frames.height / kGrid, y1 = (gy + 1) * frames.height / kGrid;
          int x0 = gx * frames.width / kGrid, x1 = (gx + 1) * frames.width / kGrid;
          Real sum = 0;
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) sum += detail::luma(frames, t, y, x, luma_weights_);
          out(t, col++) = sum / (255.0 * (y1 - y0) * (x1 - x0));
        }
      // Luma histogram.
      std::vector<Real> hist(kHistBins, 0.0);
      for (int y = 0; y < frames.height; ++y)
        for (int x = 0; x < frames.width; ++x) {
          int bin = std::min<int>(kHistBins - 1,
                                  static_cast<int>(detail::luma(frames, t, y, x, luma_weights_) /
                                                   256.0 * kHistBins));
          hist[bin] += 1.0;
        }
      for (int b = 0; b < kHistBins; ++b)
        out(t, col++) = hist[b] / (static_cast<Real>(frames.height) * frames.width);
    }
    return out;
  }

 private:
  Vec luma_weights_;
};

/// Per-fragment-frame local contrast and high-frequency energy statistics.
/// Noise and blur move these monotonically, which is what the smoke training
/// run leans on.
class ToyTechnicalExtractor : public TechnicalExtractor {
 public:
  static constexpr int kGrid = 4;

  int feature_dim() const override { return 4 + 2 * kGrid * kGrid; }
  std::string name() const override { return "toy-technical"; }

  Mat extract(const FragmentVideo& fragments) const override {
    const FrameSequence& f = fragments.frames;
    f.validate();
    Vec lw(3);
    lw << 0.299, 0.587, 0.114;
    Mat out(f.frames_count, feature_dim());
    const int H = f.height, W = f.width;
    Mat l(H, W);
    for (int t = 0; t < f.frames_count; ++t) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) l(y, x) = detail::luma(f, t, y, x, lw) / 255.0;
      Real mean = l.mean();
      Real contrast = std::sqrt((l.array() - mean).square().mean());
      Real lap_sum = 0, gx_sum = 0, gy_sum = 0;
      for (int y = 1; y + 1 < H; ++y)
        for (int x = 1; x + 1 < W; ++x) {
          lap_sum += std::abs(4 * l(y, x) - l(y - 1, x) - l(y + 1, x) - l(y, x - 1) - l(y, x + 1));
          gx_sum += std::abs(l(y, x + 1) - l(y, x));
          gy_sum += std::abs(l(y + 1, x) - l(y, x));
        }
      Real inner = static_cast<Real>(H - 2) * (W - 2);
      int col = 0;
      out(t, col++) = lap_sum / inner;
      out(t, col++) = contrast;
      out(t, col++) = gx_sum / inner;
      out(t, col++) = gy_sum / inner;
      for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
          int y0 = gy * H / kGrid, y1 = (gy + 1) * H / kGrid;
          int x0 = gx * W / kGrid, x1 = (gx + 1) * W / kGrid;
          auto block = l.block(y0, x0, y1 - y0, x1 - x0);
          Real bm = block.mean();
          out(t, col) = std::sqrt((block.array() - bm).square().mean());
          Real blap = 0;
          for (int y = std::max(1, y0); y < std::min(H - 1, y1); ++y)
            for (int x = std::max(1, x0); x < std::min(W - 1, x1); ++x)
              blap += std::abs(4 * l(y, x) - l(y - 1, x) - l(y + 1, x) - l(y, x - 1) -
                               l(y, x + 1));
          out(t, col + kGrid * kGrid) = blap / inner * kGrid * kGrid;
          ++col;
        }
    }
    return out;
  }
};

/// Pooled absolute frame-difference statistics per fast-path frame. A static
/// video maps to all-zero rows (the zero-motion baseline).
class ToyMotionExtractor : public MotionExtractor {
 public:
  static constexpr int kGrid = 4;

  int feature_dim() const override { return 3 + kGrid * kGrid; }
  std::string name() const override { return "toy-motion"; }

  Mat extract(const SlowFastClip& clip) const override {
    const FrameSequence& f = clip.fast;
    f.validate();
    Vec lw(3);
    lw << 0.299, 0.587, 0.114;
    Mat out = Mat::Zero(f.frames_count, feature_dim());
    const int H = f.height, W = f.width;
    Mat diff(H, W);
    for (int t = 1; t < f.frames_count; ++t) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          diff(y, x) = (detail::luma(f, t, y, x, lw) - detail::luma(f, t - 1, y, x, lw)) / 255.0;
      int col = 0;
      out(t, col++) = diff.array().abs().mean();
      out(t, col++) = diff.array().abs().maxCoeff();
      Real dm = diff.mean();
      out(t, col++) = std::sqrt((diff.array() - dm).square().mean());
      for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
          int y0 = gy * H / kGrid, y1 = (gy + 1) * H / kGrid;
          int x0 = gx * W / kGrid, x1 = (gx + 1) * W / kGrid;
          out(t, col++) = diff.block(y0, x0, y1 - y0, x1 - x0).array().abs().mean();
        }
    }
    return out;
  }
};

struct ExtractorBundle {
  std::shared_ptr<SemanticExtractor> semantic;
  std::shared_ptr<TechnicalExtractor> technical;
  std::shared_ptr<MotionExtractor> motion;
};

inline ExtractorBundle make_extractors(const std::string& name) {
  if (name == "toy")
    return {std::make_shared<ToySemanticExtractor>(), std::make_shared<ToyTechnicalExtractor>(),
            std::make_shared<ToyMotionExtractor>()};
  throw ValidationError("unknown extractor bundle: " + name);
}

// ---------------------------------------------------------------------------
// Encoding operations

inline EncoderOutput encode_semantic(const FrameSequence& frames, const SemanticExtractor& ex) {
  try {
    Mat f = ex.extract(frames);
    if (f.rows() != frames.frames_count)
      throw ValidationError("semantic extractor returned wrong row count");
    return {Modality::semantic, std::move(f)};
  } catch (const std::exception& e) {
    throw ValidationError("encode_semantic(" + frames.video_id + "): " + e.what());
  }
}

inline EncoderOutput encode_technical(const FragmentVideo& fragments, const TechnicalExtractor& ex) {
  try {
    if (fragments.frames.frames_count < 1)
      throw ValidationError("empty fragment set");
    Mat f = ex.extract(fragments);
    return {Modality::technical, std::move(f)};
  } catch (const std::exception& e) {
    throw ValidationError("encode_technical(" + fragments.frames.video_id + "): " + e.what());
  }
}

inline EncoderOutput encode_motion(const SlowFastClip& clip, const MotionExtractor& ex) {
  try {
    Mat f = ex.extract(clip);
    if (f.rows() != clip.fast.frames_count)
      throw ValidationError("motion extractor must emit one row per fast-path frame");
    return {Modality::motion, std::move(f)};
  } catch (const std::exception& e) {
    throw ValidationError("encode_motion(" + clip.fast.video_id + "): " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Projection into the decoder embedding space

struct ProjectionLayer {
  Mat weight;  // d_feat x d_model
  Vec bias;    // d_model

  static ProjectionLayer init(int d_feat, int d_model, Rng& rng) {
    ProjectionLayer layer;
    layer.weight = random_matrix(rng, d_feat, d_model, 1.0 / std::sqrt(static_cast<Real>(d_feat)));
    layer.bias = Vec::Zero(d_model);
    return layer;
  }
};

inline TokenBlock project(const EncoderOutput& out, const ProjectionLayer& layer) {
  if (out.features.cols() != layer.weight.rows())
    throw ValidationError("project: feature width " + std::to_string(out.features.cols()) +
                          " does not match layer input width " +
                          std::to_string(layer.weight.rows()));
  TokenBlock block;
  block.modality = out.modality;
  block.tokens = (out.features * layer.weight).rowwise() + layer.bias.transpose();
  return block;
}

struct PositionalEmbedding {
  Mat table;  // motion token count x d_model, learnable

  static PositionalEmbedding init(int rows, int d_model, Rng& rng) {
    return {random_matrix(rng, rows, d_model, 1.0 / std::sqrt(static_cast<Real>(d_model)))};
  }
};

inline TokenBlock add_positional(const TokenBlock& block, const PositionalEmbedding& pe) {
  if (block.modality != Modality::motion)
    throw ValidationError("add_positional: only motion tokens carry positional embeddings");
  if (block.tokens.rows() != pe.table.rows())
    throw ValidationError("add_positional: " + std::to_string(block.tokens.rows()) +
                          " tokens vs " + std::to_string(pe.table.rows()) + " embedding rows");
  TokenBlock out;
  out.modality = block.modality;
  out.tokens = block.tokens + pe.table;
  return out;
}

}  // namespace aigveval
