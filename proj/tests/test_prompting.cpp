#include "aigveval/prompting.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace aigveval;

namespace {

TokenBlock block(Modality m, int rows, int d, std::uint64_t seed) {
  Rng rng(seed);
  TokenBlock b;
  b.modality = m;
  b.tokens = random_matrix(rng, rows, d, 1.0);
  return b;
}

std::map<Modality, TokenBlock> default_blocks(int d) {
  return {{Modality::semantic, block(Modality::semantic, 8, d, 1)},
          {Modality::technical, block(Modality::technical, 16, d, 2)},
          {Modality::motion, block(Modality::motion, 32, d, 3)}};
}

}  // namespace

TEST_CASE("anchor strings are the frozen canonical texts") {
  const auto& a = default_anchors();
  REQUIRE(a.size() == 4);
  CHECK(a[0].text == "The key frames of this video are");
  CHECK(a[1].text == "the technical quality features of the video are");
  CHECK(a[2].text == "the motion quality features of the video are");
  CHECK(a[3].text == "Please assess the quality of this video");
}

TEST_CASE("default template renders the composed prompt") {
  auto t = default_template();
  CHECK(t.slots() == std::vector<Modality>{Modality::semantic, Modality::technical,
                                           Modality::motion});
  CHECK(render_text(t) ==
        "The key frames of this video are:{semantic}"
        ", the technical quality features of the video are:{technical}"
        "and the motion quality features of the video are:{motion}"
        ". Please assess the quality of this video");
}

TEST_CASE("toy tokenizer round trip on the template texts") {
  ToyTokenizer tok;
  auto t = default_template();
  for (const auto& seg : t.segments) {
    if (seg.kind != PromptSegment::Kind::text) continue;
    CHECK(tok.detokenize(tok.tokenize(seg.text)) == seg.text);
  }
  CHECK(tok.tokenize("a b c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("text embedder is deterministic, case-folded, and token-sensitive") {
  TextEmbedder emb(32);
  CHECK((emb.embed("video") - emb.embed("Video")).norm() == 0.0);
  CHECK((emb.embed("video") - emb.embed("video")).norm() == 0.0);
  CHECK((emb.embed("video") - emb.embed("frames")).norm() > 0.0);
  CHECK(emb.embed("quality").size() == 32);
}

TEST_CASE("assemble builds the expected sequence length and segment map") {
  const int d = 24;
  ToyTokenizer tok;
  TextEmbedder emb(d);
  auto t = default_template();
  auto blocks = default_blocks(d);

  // Word counts of the text segments, counted with the shipped tokenizer.
  int text_tokens = 0;
  for (const auto& seg : t.segments)
    if (seg.kind == PromptSegment::Kind::text)
      text_tokens += static_cast<int>(tok.tokenize(seg.text).size());

  auto seq = assemble(t, blocks, tok, emb);
  seq.check_partition();
  CHECK(seq.embeddings.rows() == text_tokens + 8 + 16 + 32);
  CHECK(seq.embeddings.cols() == d);
  REQUIRE(seq.segment_map.size() == 7);
  CHECK(seq.segment_map[1].kind == Segment::Kind::semantic);
  CHECK(seq.segment_map[1].length == 8);
  CHECK(seq.segment_map[3].kind == Segment::Kind::technical);
  CHECK(seq.segment_map[3].length == 16);
  CHECK(seq.segment_map[5].kind == Segment::Kind::motion);
  CHECK(seq.segment_map[5].length == 32);

  // Visual rows are copied verbatim, order preserved.
  CHECK((seq.embeddings.middleRows(seq.segment_map[3].start, 16) -
         blocks.at(Modality::technical).tokens)
            .norm() == 0.0);

  // Determinism.
  auto again = assemble(t, blocks, tok, emb);
  CHECK((seq.embeddings - again.embeddings).norm() == 0.0);
}

TEST_CASE("assemble errors name the missing modality and check d_model") {
  const int d = 24;
  ToyTokenizer tok;
  TextEmbedder emb(d);
  auto blocks = default_blocks(d);
  blocks.erase(Modality::motion);
  CHECK_THROWS_WITH_AS(assemble(default_template(), blocks, tok, emb),
                       doctest::Contains("motion"), ValidationError);

  auto bad = default_blocks(d);
  bad[Modality::technical].tokens = Mat::Zero(16, d + 1);
  CHECK_THROWS_AS(assemble(default_template(), bad, tok, emb), ValidationError);
}

TEST_CASE("ablated template keeps only the enabled anchors") {
  auto t = ablated_template({Modality::technical, Modality::motion});
  CHECK(t.slots() == std::vector<Modality>{Modality::technical, Modality::motion});
  auto text = render_text(t);
  CHECK(text.find("key frames") == std::string::npos);
  CHECK(text.find("The technical quality features") != std::string::npos);
  CHECK(text.find("Please assess the quality of this video") != std::string::npos);
  CHECK_THROWS_AS(ablated_template({}), ValidationError);

  auto full = ablated_template({Modality::semantic, Modality::technical, Modality::motion});
  CHECK(render_text(full) == render_text(default_template()));
}

TEST_CASE("direct_concat keeps visual blocks plus only the task text") {
  const int d = 16;
  ToyTokenizer tok;
  TextEmbedder emb(d);
  auto blocks = default_blocks(d);
  int task_words =
      static_cast<int>(tok.tokenize(". Please assess the quality of this video").size());

  auto seq = assemble_ablation(AssemblyMode::direct_concat, blocks, tok, emb);
  seq.check_partition();
  CHECK(seq.embeddings.rows() == 56 + task_words);
  REQUIRE(seq.segment_map.size() == 4);
  CHECK(seq.segment_map[0].kind == Segment::Kind::semantic);
  CHECK(seq.segment_map[3].kind == Segment::Kind::text);
  CHECK((seq.embeddings.topRows(8) - blocks.at(Modality::semantic).tokens).norm() == 0.0);
  CHECK((seq.embeddings.middleRows(8, 16) - blocks.at(Modality::technical).tokens).norm() == 0.0);
  CHECK((seq.embeddings.middleRows(24, 32) - blocks.at(Modality::motion).tokens).norm() == 0.0);
}

TEST_CASE("fusion pools context onto semantic queries") {
  const int d = 16;
  ToyTokenizer tok;
  TextEmbedder emb(d);
  auto blocks = default_blocks(d);
  FusionCache cache;
  auto seq = assemble_ablation(AssemblyMode::fusion, blocks, tok, emb, &cache);
  seq.check_partition();
  CHECK(seq.segment_map[0].length == 8);  // queries define the visual length
  CHECK(cache.attn.rows() == 8);
  CHECK(cache.attn.cols() == 48);
  for (Eigen::Index r = 0; r < cache.attn.rows(); ++r)
    CHECK(cache.attn.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // Naive per-element oracle for one output entry.
  Mat context(48, d);
  context << blocks.at(Modality::technical).tokens, blocks.at(Modality::motion).tokens;
  Vec q = blocks.at(Modality::semantic).tokens.row(3);
  Vec scores(48);
  for (int j = 0; j < 48; ++j) scores[j] = q.dot(context.row(j)) / std::sqrt(Real(d));
  Vec e = (scores.array() - scores.maxCoeff()).exp();
  Vec w = e / e.sum();
  Real want = 0;
  for (int j = 0; j < 48; ++j) want += w[j] * context(j, 5);
  CHECK(seq.embeddings(3, 5) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("fusion backward matches central finite differences") {
  const int d = 8;
  auto sem = block(Modality::semantic, 4, d, 7);
  auto tec = block(Modality::technical, 5, d, 8);
  auto mot = block(Modality::motion, 6, d, 9);

  FusionCache cache;
  Mat out = fuse_blocks(sem, tec, mot, &cache);
  Rng rng(10);
  Mat d_out = random_matrix(rng, out.rows(), out.cols(), 1.0);

  Mat d_sem, d_tec, d_mot;
  fuse_blocks_backward(cache, d_out, d_sem, d_tec, d_mot);

  auto objective = [&](const TokenBlock& s, const TokenBlock& t, const TokenBlock& m) {
    return (fuse_blocks(s, t, m).array() * d_out.array()).sum();
  };
  const Real step = 1e-6;
  auto check_block = [&](TokenBlock b, const Mat& grad, int which) {
    for (Eigen::Index i = 0; i < b.tokens.rows(); ++i)
      for (Eigen::Index j = 0; j < b.tokens.cols(); ++j) {
        TokenBlock hi = b, lo = b;
        hi.tokens(i, j) += step;
        lo.tokens(i, j) -= step;
        Real fd = (objective(which == 0 ? hi : sem, which == 1 ? hi : tec,
                             which == 2 ? hi : mot) -
                   objective(which == 0 ? lo : sem, which == 1 ? lo : tec,
                             which == 2 ? lo : mot)) /
                  (2 * step);
        CHECK(std::abs(grad(i, j) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
      }
  };
  check_block(sem, d_sem, 0);
  check_block(tec, d_tec, 1);
  check_block(mot, d_mot, 2);
}
