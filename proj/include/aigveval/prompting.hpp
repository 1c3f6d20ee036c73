#pragma once

#include "aigveval/common.hpp"
#include "aigveval/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace aigveval {

// ---------------------------------------------------------------------------
// Semantic anchors. The four strings are frozen constants; configs may
// override them but these defaults are canonical.

enum class AnchorId { semantic, technical, motion, task };

struct SemanticAnchor {
  AnchorId id;
  std::string text;
};

inline const std::vector<SemanticAnchor>& default_anchors() {
  static const std::vector<SemanticAnchor> anchors = {
      {AnchorId::semantic, "The key frames of this video are"},
      {AnchorId::technical, "the technical quality features of the video are"},
      {AnchorId::motion, "the motion quality features of the video are"},
      {AnchorId::task, "Please assess the quality of this video"},
  };
  return anchors;
}

// ---------------------------------------------------------------------------
// Prompt template

struct PromptSegment {
  enum class Kind { text, slot };
  Kind kind;
  std::string text;  // kind == text
  Modality slot = Modality::semantic;  // kind == slot

  static PromptSegment make_text(std::string t) { return {Kind::text, std::move(t), {}}; }
  static PromptSegment make_slot(Modality m) { return {Kind::slot, {}, m}; }
};

struct PromptTemplate {
  std::vector<PromptSegment> segments;

  std::vector<Modality> slots() const {
    std::vector<Modality> out;
    for (const auto& s : segments)
      if (s.kind == PromptSegment::Kind::slot) out.push_back(s.slot);
    return out;
  }
};

/// The canonical prompt: anchor texts joined with the composed punctuation,
/// one slot per modality in semantic, technical, motion order.
inline PromptTemplate default_template() {
  const auto& a = default_anchors();
  PromptTemplate t;
  t.segments = {
      PromptSegment::make_text(a[0].text + ":"),
      PromptSegment::make_slot(Modality::semantic),
      PromptSegment::make_text(", " + a[1].text + ":"),
      PromptSegment::make_slot(Modality::technical),
      PromptSegment::make_text("and " + a[2].text + ":"),
      PromptSegment::make_slot(Modality::motion),
      PromptSegment::make_text(". " + a[3].text),
  };
  return t;
}

/// Template with some modalities removed (encoder-ablation rows). Removing a
/// modality drops both its anchor text and its slot; the task text stays.
inline PromptTemplate ablated_template(const std::vector<Modality>& enabled) {
  auto has = [&](Modality m) {
    return std::find(enabled.begin(), enabled.end(), m) != enabled.end();
  };
  const auto& a = default_anchors();
  PromptTemplate t;
  bool first = true;
  auto add = [&](const std::string& text, Modality m) {
    std::string lead = first ? "" : (m == Modality::motion ? "and " : ", ");
    std::string body = text;
    if (first && !body.empty()) body[0] = static_cast<char>(std::toupper(body[0]));
    t.segments.push_back(PromptSegment::make_text(lead + body + ":"));
    t.segments.push_back(PromptSegment::make_slot(m));
    first = false;
  };
  if (has(Modality::semantic)) add(a[0].text, Modality::semantic);
  if (has(Modality::technical)) add(a[1].text, Modality::technical);
  if (has(Modality::motion)) add(a[2].text, Modality::motion);
  if (t.segments.empty()) throw ValidationError("ablated_template: no modalities enabled");
  t.segments.push_back(PromptSegment::make_text(". " + a[3].text));
  return t;
}

/// Human-readable rendering with {modality} markers at the slots.
inline std::string render_text(const PromptTemplate& t) {
  std::string out;
  for (const auto& s : t.segments) {
    if (s.kind == PromptSegment::Kind::text) out += s.text;
    else out += std::string("{") + modality_name(s.slot) + "}";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy tokenizer: split on single spaces, one token per word, punctuation kept
// attached. Join-with-space de-tokenization reproduces the input exactly for
// single-spaced text, which all shipped templates are.

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
  virtual std::string detokenize(const std::vector<std::string>& tokens) const = 0;
};

class ToyTokenizer : public Tokenizer {
 public:
  std::vector<std::string> tokenize(const std::string& text) const override {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
      if (c == ' ') {
        tokens.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    tokens.push_back(cur);
    return tokens;
  }

  std::string detokenize(const std::vector<std::string>& tokens) const override {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }
};

/// Fixed hash-based vocabulary embedding: every token (case-folded) maps to a
/// deterministic d_model row. Not trainable; a real LLM embedding table plugs
/// in behind the same interface at paper scale.
class TextEmbedder {
 public:
  explicit TextEmbedder(int d_model) : d_model_(d_model) {}

  int d_model() const { return d_model_; }

  Vec embed(const std::string& token) const {
    std::string folded;
    for (char c : token) folded += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    Rng rng(fnv1a(folded) ^ 0x5eedf00dcafe1234ull);
    Vec row(d_model_);
    Real scale = 1.0 / std::sqrt(static_cast<Real>(d_model_));
    for (int i = 0; i < d_model_; ++i) row[i] = uniform_sym(rng, scale);
    return row;
  }

  Mat embed_all(const std::vector<std::string>& tokens) const {
    Mat out(static_cast<Eigen::Index>(tokens.size()), d_model_);
    for (std::size_t i = 0; i < tokens.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = embed(tokens[i]).transpose();
    return out;
  }

 private:
  int d_model_;
};

// ---------------------------------------------------------------------------
// Assembled multi-modal sequence

struct Segment {
  enum class Kind { text, semantic, technical, motion };
  Kind kind;
  int start = 0;
  int length = 0;
};

inline Segment::Kind segment_kind(Modality m) {
  switch (m) {
    case Modality::semantic: return Segment::Kind::semantic;
    case Modality::technical: return Segment::Kind::technical;
    case Modality::motion: return Segment::Kind::motion;
  }
  return Segment::Kind::text;
}

struct MultiModalSequence {
  Mat embeddings;  // L x d_model
  std::vector<Segment> segment_map;

  void check_partition() const {
    int cursor = 0;
    for (const auto& s : segment_map) {
      if (s.start != cursor || s.length < 0)
        throw ValidationError("segment map does not partition the sequence");
      cursor += s.length;
    }
    if (cursor != embeddings.rows())
      throw ValidationError("segment map does not cover the sequence");
  }
};

inline MultiModalSequence assemble(const PromptTemplate& t,
                                   const std::map<Modality, TokenBlock>& blocks,
                                   const Tokenizer& tokenizer, const TextEmbedder& embedder) {
  for (Modality m : t.slots())
    if (!blocks.count(m))
      throw ValidationError(std::string("assemble: missing token block for modality ") +
                            modality_name(m));

  std::vector<Mat> parts;
  MultiModalSequence seq;
  int cursor = 0;
  for (const auto& s : t.segments) {
    Mat part;
    Segment::Kind kind;
    if (s.kind == PromptSegment::Kind::text) {
      part = embedder.embed_all(tokenizer.tokenize(s.text));
      kind = Segment::Kind::text;
    } else {
      const TokenBlock& block = blocks.at(s.slot);
      if (block.tokens.cols() != embedder.d_model())
        throw ValidationError("assemble: token block d_model mismatch");
      part = block.tokens;
      kind = segment_kind(s.slot);
    }
    seq.segment_map.push_back({kind, cursor, static_cast<int>(part.rows())});
    cursor += static_cast<int>(part.rows());
    parts.push_back(std::move(part));
  }
  seq.embeddings.resize(cursor, embedder.d_model());
  for (std::size_t i = 0; i < parts.size(); ++i)
    seq.embeddings.middleRows(seq.segment_map[i].start, seq.segment_map[i].length) = parts[i];
  return seq;
}

enum class AssemblyMode { anchors, direct_concat, fusion };

inline AssemblyMode parse_assembly_mode(const std::string& s) {
  if (s == "anchors") return AssemblyMode::anchors;
  if (s == "direct_concat") return AssemblyMode::direct_concat;
  if (s == "fusion") return AssemblyMode::fusion;
  throw ValidationError("unknown assembly mode: " + s);
}

/// Cache of the fusion cross-attention intermediates, needed for backprop.
struct FusionCache {
  Mat queries;   // semantic tokens, Nq x d
  Mat context;   // technical+motion tokens stacked, Nc x d
  Mat attn;      // softmax weights, Nq x Nc
  int technical_rows = 0;
};

/// Parameterless single-head cross-attention: semantic tokens query the
/// stacked technical+motion tokens. Output row count equals the semantic
/// block's row count.
inline Mat fuse_blocks(const TokenBlock& semantic, const TokenBlock& technical,
                       const TokenBlock& motion, FusionCache* cache = nullptr) {
  const int d = static_cast<int>(semantic.tokens.cols());
  Mat context(technical.tokens.rows() + motion.tokens.rows(), d);
  context << technical.tokens, motion.tokens;
  Mat scores = semantic.tokens * context.transpose() / std::sqrt(static_cast<Real>(d));
  Mat attn(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Vec row = scores.row(r);
    Real mx = row.maxCoeff();
    Vec e = (row.array() - mx).exp();
    attn.row(r) = e.transpose() / e.sum();
  }
  if (cache) {
    cache->queries = semantic.tokens;
    cache->context = context;
    cache->attn = attn;
    cache->technical_rows = static_cast<int>(technical.tokens.rows());
  }
  return attn * context;
}

/// Table-3 assembly variants. "anchors" is the full prompt; "direct_concat"
/// stacks the visual blocks and appends only the task text; "fusion" pools
/// technical+motion onto semantic queries first.
inline MultiModalSequence assemble_ablation(AssemblyMode mode,
                                            const std::map<Modality, TokenBlock>& blocks,
                                            const Tokenizer& tokenizer,
                                            const TextEmbedder& embedder,
                                            FusionCache* fusion_cache = nullptr) {
  if (mode == AssemblyMode::anchors)
    return assemble(default_template(), blocks, tokenizer, embedder);

  for (Modality m : {Modality::semantic, Modality::technical, Modality::motion})
    if (!blocks.count(m))
      throw ValidationError(std::string("assemble_ablation: missing token block for modality ") +
                            modality_name(m));

  const std::string task_text = ". " + default_anchors()[3].text;
  Mat task = embedder.embed_all(tokenizer.tokenize(task_text));

  MultiModalSequence seq;
  if (mode == AssemblyMode::direct_concat) {
    const Mat& s = blocks.at(Modality::semantic).tokens;
    const Mat& t = blocks.at(Modality::technical).tokens;
    const Mat& m = blocks.at(Modality::motion).tokens;
    seq.embeddings.resize(s.rows() + t.rows() + m.rows() + task.rows(), embedder.d_model());
    seq.embeddings << s, t, m, task;
    int cursor = 0;
    for (auto [kind, rows] : {std::pair{Segment::Kind::semantic, (int)s.rows()},
                              {Segment::Kind::technical, (int)t.rows()},
                              {Segment::Kind::motion, (int)m.rows()},
                              {Segment::Kind::text, (int)task.rows()}}) {
      seq.segment_map.push_back({kind, cursor, rows});
      cursor += rows;
    }
  } else {  // fusion
    Mat fused = fuse_blocks(blocks.at(Modality::semantic), blocks.at(Modality::technical),
                            blocks.at(Modality::motion), fusion_cache);
    seq.embeddings.resize(fused.rows() + task.rows(), embedder.d_model());
    seq.embeddings << fused, task;
    seq.segment_map.push_back({Segment::Kind::semantic, 0, static_cast<int>(fused.rows())});
    seq.segment_map.push_back(
        {Segment::Kind::text, static_cast<int>(fused.rows()), static_cast<int>(task.rows())});
  }
  return seq;
}

/// Backprop through fuse_blocks: gradients w.r.t. the semantic queries and
/// the technical/motion context blocks.
inline void fuse_blocks_backward(const FusionCache& cache, const Mat& d_out, Mat& d_semantic,
                                 Mat& d_technical, Mat& d_motion) {
  const Real inv_sqrt_d = 1.0 / std::sqrt(static_cast<Real>(cache.queries.cols()));
  Mat d_attn = d_out * cache.context.transpose();
  Mat d_context = cache.attn.transpose() * d_out;
  // Softmax rows.
  Mat d_scores(d_attn.rows(), d_attn.cols());
  for (Eigen::Index r = 0; r < d_attn.rows(); ++r) {
    Real dot = d_attn.row(r).cwiseProduct(cache.attn.row(r)).sum();
    d_scores.row(r) = cache.attn.row(r).cwiseProduct((d_attn.row(r).array() - dot).matrix());
  }
  d_scores *= inv_sqrt_d;
  d_semantic = d_scores * cache.context;
  d_context += d_scores.transpose() * cache.queries;
  d_technical = d_context.topRows(cache.technical_rows);
  d_motion = d_context.bottomRows(d_context.rows() - cache.technical_rows);
}

}  // namespace aigveval
