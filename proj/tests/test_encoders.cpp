#include "aigveval/encoders.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace aigveval;
using testutil::random_video;

namespace {

FrameSequence constant_video(int t, int h, int w, int c, std::uint8_t value) {
  FrameSequence seq = random_video("const", t, h, w, c, 0);
  std::fill(seq.data.begin(), seq.data.end(), value);
  return seq;
}

FragmentVideo wrap_fragments(FrameSequence frames) {
  FragmentVideo f;
  f.grid_size = 1;
  f.frames = std::move(frames);
  return f;
}

SlowFastClip wrap_clip(FrameSequence fast) {
  SlowFastClip clip;
  clip.slow = fast;
  clip.fast = std::move(fast);
  return clip;
}

}  // namespace

TEST_CASE("semantic extractor statistics on a constant frame") {
  ToySemanticExtractor ex;
  CHECK(ex.feature_dim() == 30);
  auto video = constant_video(2, 32, 32, 3, 100);
  Mat f = ex.extract(video);
  REQUIRE(f.rows() == 2);
  REQUIRE(f.cols() == 30);
  for (int c = 0; c < 3; ++c) {
    CHECK(f(0, c) == doctest::Approx(100.0 / 255.0).epsilon(1e-12));
    CHECK(f(0, 3 + c) == doctest::Approx(0.0));  // zero variance
  }
  // All 16 grid luma means equal the global mean for a flat frame.
  for (int g = 0; g < 16; ++g) CHECK(f(0, 6 + g) == doctest::Approx(100.0 / 255.0).epsilon(1e-12));
  // Histogram: luma 100 of 8 bins over [0,256) lands in bin 3 with mass 1.
  for (int b = 0; b < 8; ++b) CHECK(f(0, 22 + b) == doctest::Approx(b == 3 ? 1.0 : 0.0));
  // Histogram rows always sum to one.
  CHECK(f.row(1).segment(22, 8).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("semantic extractor is deterministic and per-frame") {
  ToySemanticExtractor ex;
  auto video = random_video("v", 4, 32, 48, 3, 77);
  Mat a = ex.extract(video);
  Mat b = ex.extract(video);
  CHECK((a - b).norm() == 0.0);
  // Each row depends only on its own frame.
  auto one = select_frames(video, {2});
  Mat c = ex.extract(one);
  CHECK((c.row(0) - a.row(2)).norm() == 0.0);
}

TEST_CASE("technical extractor separates flat from textured frames") {
  ToyTechnicalExtractor ex;
  CHECK(ex.feature_dim() == 36);
  Mat flat = ex.extract(wrap_fragments(constant_video(1, 32, 32, 1, 90)));
  CHECK(flat(0, 0) == doctest::Approx(0.0));  // no high-frequency energy
  CHECK(flat(0, 1) == doctest::Approx(0.0));  // no contrast

  // Checkerboard (luma 0 or 1): |4*l - 4*opposite| = 4 at every interior pixel.
  auto board = constant_video(1, 32, 32, 1, 0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) board.at(0, y, x, 0) = ((x + y) % 2) ? 255 : 0;
  Mat busy = ex.extract(wrap_fragments(board));
  CHECK(busy(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(busy(0, 1) == doctest::Approx(0.5).epsilon(1e-3));  // near-half-half split
  CHECK(busy(0, 2) == doctest::Approx(1.0).epsilon(1e-12));  // |dx| = 1 everywhere
  CHECK(busy(0, 0) > flat(0, 0));
}

TEST_CASE("motion extractor zero baseline and hand oracle") {
  ToyMotionExtractor ex;
  CHECK(ex.feature_dim() == 19);

  // Static video: every row is the zero vector.
  auto frame = random_video("static", 1, 32, 32, 1, 3);
  FrameSequence fixed = frame;
  for (int t = 0; t < 3; ++t)
    if (t > 0) fixed.data.insert(fixed.data.end(), frame.data.begin(), frame.data.end());
  fixed.frames_count = 3;
  Mat still = ex.extract(wrap_clip(fixed));
  CHECK(still.norm() == 0.0);

  // Two flat frames stepping 0 -> 51: |diff| = 0.2 at every pixel.
  auto stepped = constant_video(2, 32, 32, 1, 0);
  for (std::size_t i = stepped.frame_size(); i < stepped.data.size(); ++i)
    stepped.data[i] = 51;
  Mat moved = ex.extract(wrap_clip(stepped));
  CHECK(moved.row(0).norm() == 0.0);  // first row has no predecessor
  CHECK(moved(1, 0) == doctest::Approx(51.0 / 255.0).epsilon(1e-12));  // mean |diff|
  CHECK(moved(1, 1) == doctest::Approx(51.0 / 255.0).epsilon(1e-12));  // max |diff|
  CHECK(moved(1, 2) == doctest::Approx(0.0));  // uniform diff, zero spread
  for (int g = 0; g < 16; ++g)
    CHECK(moved(1, 3 + g) == doctest::Approx(51.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("encode wrappers tag modality and name the video on failure") {
  auto bundle = make_extractors("toy");
  auto video = random_video("clip-7", 3, 32, 32, 3, 11);
  auto out = encode_semantic(video, *bundle.semantic);
  CHECK(out.modality == Modality::semantic);
  CHECK(out.features.rows() == 3);

  FrameSequence broken = video;
  broken.video_id = "bad-clip";
  broken.frames_count = 0;
  broken.data.clear();
  CHECK_THROWS_WITH_AS(encode_semantic(broken, *bundle.semantic),
                       doctest::Contains("bad-clip"), ValidationError);

  FragmentVideo empty;
  empty.frames.video_id = "empty-frag";
  CHECK_THROWS_WITH_AS(encode_technical(empty, *bundle.technical),
                       doctest::Contains("empty-frag"), ValidationError);

  CHECK_THROWS_AS(make_extractors("resnet"), ValidationError);
}

TEST_CASE("projection layer matches a hand multiply") {
  EncoderOutput out;
  out.modality = Modality::technical;
  out.features = Mat(2, 3);
  out.features << 1, 2, 3, 4, 5, 6;
  ProjectionLayer layer;
  layer.weight = Mat(3, 2);
  layer.weight << 1, 0, 0, 1, 1, 1;
  layer.bias = Vec(2);
  layer.bias << 10, 20;
  auto block = project(out, layer);
  CHECK(block.modality == Modality::technical);
  CHECK(block.tokens(0, 0) == doctest::Approx(1 + 3 + 10));
  CHECK(block.tokens(0, 1) == doctest::Approx(2 + 3 + 20));
  CHECK(block.tokens(1, 0) == doctest::Approx(4 + 6 + 10));
  CHECK(block.tokens(1, 1) == doctest::Approx(5 + 6 + 20));

  ProjectionLayer wrong;
  wrong.weight = Mat::Zero(4, 2);
  wrong.bias = Vec::Zero(2);
  CHECK_THROWS_AS(project(out, wrong), ValidationError);
}

TEST_CASE("projection init scale") {
  Rng rng(5);
  auto layer = ProjectionLayer::init(36, 128, rng);
  CHECK(layer.weight.rows() == 36);
  CHECK(layer.weight.cols() == 128);
  CHECK(layer.weight.cwiseAbs().maxCoeff() <= 1.0 / 6.0 + 1e-12);
  CHECK(layer.bias.norm() == 0.0);
}

TEST_CASE("positional embedding only applies to matching motion blocks") {
  Rng rng(6);
  auto pe = PositionalEmbedding::init(32, 16, rng);
  TokenBlock motion;
  motion.modality = Modality::motion;
  motion.tokens = Mat::Ones(32, 16);
  auto out = add_positional(motion, pe);
  CHECK((out.tokens - (motion.tokens + pe.table)).norm() == 0.0);

  TokenBlock wrong_rows = motion;
  wrong_rows.tokens = Mat::Ones(8, 16);
  CHECK_THROWS_AS(add_positional(wrong_rows, pe), ValidationError);

  TokenBlock semantic = motion;
  semantic.modality = Modality::semantic;
  CHECK_THROWS_AS(add_positional(semantic, pe), ValidationError);
}
