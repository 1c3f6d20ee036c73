#pragma once

#include "aigveval/config.hpp"
#include "aigveval/encoders.hpp"
#include "aigveval/media_io.hpp"
#include "aigveval/prompting.hpp"
#include "aigveval/regressor.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aigveval {

/// Per-video feature rows for every enabled modality, plus the target.
struct VideoFeatures {
  std::string video_id;
  std::map<Modality, Mat> features;
  std::optional<Real> mos;
};

/// The full trainable pipeline behind the encoders: projections, positional
/// embedding, text embedder, and the toy decoder.
struct Model {
  PipelineConfig cfg;
  std::map<Modality, int> feature_dims;
  ExtractorBundle extractors;
  ProjectionLayer proj_semantic, proj_technical, proj_motion;
  PositionalEmbedding pe;
  ToyDecoder decoder;
  ToyTokenizer tokenizer;
  TextEmbedder embedder;

  Model() : embedder(1) {}

  ProjectionLayer& projection(Modality m) {
    switch (m) {
      case Modality::semantic: return proj_semantic;
      case Modality::technical: return proj_technical;
      case Modality::motion: return proj_motion;
    }
    throw ValidationError("bad modality");
  }
  const ProjectionLayer& projection(Modality m) const {
    return const_cast<Model*>(this)->projection(m);
  }

  static Model init(const PipelineConfig& cfg,
                    std::map<Modality, int> feature_dims = {}) {
    if (cfg.assembly != AssemblyMode::anchors && cfg.modalities.size() != 3)
      throw ValidationError("direct_concat/fusion assembly requires all three modalities");
    Model m;
    m.cfg = cfg;
    m.extractors = make_extractors(cfg.extractor);
    // Datasets for ablated modality subsets only provide dims for the enabled
    // modalities; default the rest so every projection (and the rng sequence)
    // stays identical across ablation variants.
    if (!feature_dims.count(Modality::semantic))
      feature_dims[Modality::semantic] = m.extractors.semantic->feature_dim();
    if (!feature_dims.count(Modality::technical))
      feature_dims[Modality::technical] = m.extractors.technical->feature_dim();
    if (!feature_dims.count(Modality::motion))
      feature_dims[Modality::motion] = m.extractors.motion->feature_dim();
    m.feature_dims = feature_dims;
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    m.proj_semantic = ProjectionLayer::init(feature_dims.at(Modality::semantic), cfg.d_model, rng);
    m.proj_technical = ProjectionLayer::init(feature_dims.at(Modality::technical), cfg.d_model, rng);
    m.proj_motion = ProjectionLayer::init(feature_dims.at(Modality::motion), cfg.d_model, rng);
    m.pe = PositionalEmbedding::init(cfg.sampling.alpha * cfg.sampling.clip_length, cfg.d_model,
                                     rng);
    m.decoder = ToyDecoder::init(cfg.decoder_config(), cfg.lora, rng);
    m.embedder = TextEmbedder(cfg.d_model);
    return m;
  }

  PromptTemplate prompt_template() const {
    if (cfg.modalities.size() == 3) return default_template();
    return ablated_template(cfg.modalities);
  }
};

struct ModelForwardCache {
  std::map<Modality, Mat> features;
  std::map<Modality, int> block_rows;
  MultiModalSequence seq;
  DecoderCache dec;
  FusionCache fusion;
  LevelLogits logits;
  Real score = 0;
};

inline Real model_forward(const Model& model, const VideoFeatures& video,
                          ModelForwardCache* cache = nullptr) {
  std::map<Modality, TokenBlock> blocks;
  for (Modality m : model.cfg.modalities) {
    auto it = video.features.find(m);
    if (it == video.features.end())
      throw ValidationError("model_forward(" + video.video_id + "): missing " +
                            modality_name(m) + " features");
    EncoderOutput out{m, it->second};
    TokenBlock block = project(out, model.projection(m));
    if (m == Modality::motion) block = add_positional(block, model.pe);
    blocks[m] = std::move(block);
  }

  MultiModalSequence seq;
  FusionCache* fc = cache ? &cache->fusion : nullptr;
  if (model.cfg.assembly == AssemblyMode::anchors) {
    seq = assemble(model.prompt_template(), blocks, model.tokenizer, model.embedder);
  } else {
    seq = assemble_ablation(model.cfg.assembly, blocks, model.tokenizer, model.embedder, fc);
  }

  DecoderCache* dc = cache ? &cache->dec : nullptr;
  LevelLogits logits = decoder_forward(model.decoder, seq, dc);
  Real score = score_from_logits(logits);
  if (cache) {
    for (Modality m : model.cfg.modalities) {
      cache->features[m] = video.features.at(m);
      cache->block_rows[m] = static_cast<int>(blocks.at(m).tokens.rows());
    }
    cache->seq = std::move(seq);
    cache->logits = logits;
    cache->score = score;
  }
  return score;
}

/// Gradients for every trainable component, shaped like the model.
struct ModelGrads {
  ProjectionLayer d_proj_semantic, d_proj_technical, d_proj_motion;
  Mat d_pe;
  std::vector<DecoderGrads::LayerGrads> d_layers;
  Mat d_readout_W;
  Vec d_readout_b;

  ProjectionLayer& d_projection(Modality m) {
    switch (m) {
      case Modality::semantic: return d_proj_semantic;
      case Modality::technical: return d_proj_technical;
      case Modality::motion: return d_proj_motion;
    }
    throw ValidationError("bad modality");
  }

  static ModelGrads zeros_like(const Model& model) {
    ModelGrads g;
    auto zero_proj = [](const ProjectionLayer& p) {
      return ProjectionLayer{Mat::Zero(p.weight.rows(), p.weight.cols()),
                             Vec::Zero(p.bias.size())};
    };
    g.d_proj_semantic = zero_proj(model.proj_semantic);
    g.d_proj_technical = zero_proj(model.proj_technical);
    g.d_proj_motion = zero_proj(model.proj_motion);
    g.d_pe = Mat::Zero(model.pe.table.rows(), model.pe.table.cols());
    g.d_layers.resize(model.decoder.layers.size());
    for (std::size_t l = 0; l < model.decoder.layers.size(); ++l) {
      const auto& attn = model.decoder.layers[l].attn;
      auto& lg = g.d_layers[l];
      if (attn.lora_q.enabled()) {
        lg.dA_q = Mat::Zero(attn.lora_q.A.rows(), attn.lora_q.A.cols());
        lg.dB_q = Mat::Zero(attn.lora_q.B.rows(), attn.lora_q.B.cols());
      }
      if (attn.lora_k.enabled()) {
        lg.dA_k = Mat::Zero(attn.lora_k.A.rows(), attn.lora_k.A.cols());
        lg.dB_k = Mat::Zero(attn.lora_k.B.rows(), attn.lora_k.B.cols());
      }
    }
    g.d_readout_W = Mat::Zero(model.decoder.readout_W.rows(), model.decoder.readout_W.cols());
    g.d_readout_b = Vec::Zero(model.decoder.readout_b.size());
    return g;
  }

  void accumulate(const ModelGrads& other) {
    auto add_proj = [](ProjectionLayer& a, const ProjectionLayer& b) {
      a.weight += b.weight;
      a.bias += b.bias;
    };
    add_proj(d_proj_semantic, other.d_proj_semantic);
    add_proj(d_proj_technical, other.d_proj_technical);
    add_proj(d_proj_motion, other.d_proj_motion);
    d_pe += other.d_pe;
    for (std::size_t l = 0; l < d_layers.size(); ++l) {
      auto add = [](Mat& a, const Mat& b) {
        if (b.size()) a += b;
      };
      add(d_layers[l].dA_q, other.d_layers[l].dA_q);
      add(d_layers[l].dB_q, other.d_layers[l].dB_q);
      add(d_layers[l].dA_k, other.d_layers[l].dA_k);
      add(d_layers[l].dB_k, other.d_layers[l].dB_k);
    }
    d_readout_W += other.d_readout_W;
    d_readout_b += other.d_readout_b;
  }
};

/// Backprop d_score through decoder, assembly, positional embedding, and the
/// three projections. Gradients stop at the (fixed) features and text rows.
inline ModelGrads model_backward(const Model& model, const ModelForwardCache& cache,
                                 Real d_score) {
  ModelGrads grads = ModelGrads::zeros_like(model);
  Vec d_logits = d_score * score_from_logits_grad(cache.logits);
  DecoderGrads dg = decoder_backward(model.decoder, cache.dec, d_logits);
  for (std::size_t l = 0; l < dg.layers.size(); ++l) grads.d_layers[l] = dg.layers[l];
  grads.d_readout_W = dg.d_readout_W;
  grads.d_readout_b = dg.d_readout_b;

  // Slice the input-sequence gradient back to the visual blocks.
  std::map<Modality, Mat> d_blocks;
  if (model.cfg.assembly == AssemblyMode::fusion) {
    // Single visual segment of fused rows at the front.
    const Segment& seg = cache.seq.segment_map.front();
    Mat d_fused = dg.d_input.middleRows(seg.start, seg.length);
    Mat d_sem, d_tec, d_mot;
    fuse_blocks_backward(cache.fusion, d_fused, d_sem, d_tec, d_mot);
    d_blocks[Modality::semantic] = d_sem;
    d_blocks[Modality::technical] = d_tec;
    d_blocks[Modality::motion] = d_mot;
  } else {
    for (const Segment& seg : cache.seq.segment_map) {
      if (seg.kind == Segment::Kind::text) continue;
      Modality m = seg.kind == Segment::Kind::semantic    ? Modality::semantic
                   : seg.kind == Segment::Kind::technical ? Modality::technical
                                                          : Modality::motion;
      d_blocks[m] = dg.d_input.middleRows(seg.start, seg.length);
    }
  }

  for (Modality m : model.cfg.modalities) {
    const Mat& d_tokens = d_blocks.at(m);
    if (m == Modality::motion) grads.d_pe += d_tokens;
    const Mat& features = cache.features.at(m);
    ProjectionLayer& dp = grads.d_projection(m);
    dp.weight += features.transpose() * d_tokens;
    dp.bias += d_tokens.colwise().sum().transpose();
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Parameter registry: stable, named traversal of every weight tensor. The
// optimizer walks the trainable subset; checkpoints serialize all of them.

struct ParamRef {
  std::string name;
  Real* data;
  std::size_t size;
  bool trainable;
};

inline std::vector<ParamRef> model_params(Model& m) {
  std::vector<ParamRef> refs;
  auto add = [&](const std::string& name, Mat& mat, bool trainable) {
    refs.push_back({name, mat.data(), static_cast<std::size_t>(mat.size()), trainable});
  };
  auto addv = [&](const std::string& name, Vec& v, bool trainable) {
    refs.push_back({name, v.data(), static_cast<std::size_t>(v.size()), trainable});
  };
  auto add_proj = [&](const std::string& name, ProjectionLayer& p) {
    add(name + ".weight", p.weight, true);
    addv(name + ".bias", p.bias, true);
  };
  add_proj("proj.semantic", m.proj_semantic);
  add_proj("proj.technical", m.proj_technical);
  add_proj("proj.motion", m.proj_motion);
  add("pe.table", m.pe.table, true);
  for (std::size_t l = 0; l < m.decoder.layers.size(); ++l) {
    std::string p = "decoder.layer" + std::to_string(l);
    auto& layer = m.decoder.layers[l];
    add(p + ".Wq", layer.attn.Wq, false);
    add(p + ".Wk", layer.attn.Wk, false);
    add(p + ".Wv", layer.attn.Wv, false);
    add(p + ".Wo", layer.attn.Wo, false);
    if (layer.attn.lora_q.enabled()) {
      add(p + ".lora_q.A", layer.attn.lora_q.A, true);
      add(p + ".lora_q.B", layer.attn.lora_q.B, true);
    }
    if (layer.attn.lora_k.enabled()) {
      add(p + ".lora_k.A", layer.attn.lora_k.A, true);
      add(p + ".lora_k.B", layer.attn.lora_k.B, true);
    }
    add(p + ".mlp.W1", layer.mlp.W1, false);
    addv(p + ".mlp.b1", layer.mlp.b1, false);
    add(p + ".mlp.W2", layer.mlp.W2, false);
    addv(p + ".mlp.b2", layer.mlp.b2, false);
  }
  add("readout.W", m.decoder.readout_W, true);
  addv("readout.b", m.decoder.readout_b, true);
  return refs;
}

/// Gradient buffers in the same order/naming as the trainable model params.
inline std::vector<ParamRef> grad_params(const Model& m, ModelGrads& g) {
  std::vector<ParamRef> refs;
  auto add = [&](const std::string& name, Mat& mat) {
    refs.push_back({name, mat.data(), static_cast<std::size_t>(mat.size()), true});
  };
  auto addv = [&](const std::string& name, Vec& v) {
    refs.push_back({name, v.data(), static_cast<std::size_t>(v.size()), true});
  };
  auto add_proj = [&](const std::string& name, ProjectionLayer& p) {
    add(name + ".weight", p.weight);
    addv(name + ".bias", p.bias);
  };
  add_proj("proj.semantic", g.d_proj_semantic);
  add_proj("proj.technical", g.d_proj_technical);
  add_proj("proj.motion", g.d_proj_motion);
  add("pe.table", g.d_pe);
  for (std::size_t l = 0; l < m.decoder.layers.size(); ++l) {
    std::string p = "decoder.layer" + std::to_string(l);
    const auto& attn = m.decoder.layers[l].attn;
    if (attn.lora_q.enabled()) {
      add(p + ".lora_q.A", g.d_layers[l].dA_q);
      add(p + ".lora_q.B", g.d_layers[l].dB_q);
    }
    if (attn.lora_k.enabled()) {
      add(p + ".lora_k.A", g.d_layers[l].dA_k);
      add(p + ".lora_k.B", g.d_layers[l].dB_k);
    }
  }
  add("readout.W", g.d_readout_W);
  addv("readout.b", g.d_readout_b);
  return refs;
}

/// Component label used by the freeze set; e.g. "proj.semantic.weight" ->
/// "proj_semantic", "decoder.layer0.lora_q.A" -> "lora".
inline std::string param_component(const std::string& name) {
  if (name.rfind("proj.", 0) == 0) {
    auto second = name.find('.', 5);
    return "proj_" + name.substr(5, second - 5);
  }
  if (name.rfind("pe.", 0) == 0) return "pe";
  if (name.find(".lora_") != std::string::npos) return "lora";
  if (name.rfind("decoder.", 0) == 0) return "decoder";
  if (name.rfind("readout.", 0) == 0) return "readout";
  return name;
}

// ---------------------------------------------------------------------------
// Checkpoint container: config echo + named tensors + free-form metadata.

namespace detail {

constexpr char kCkptMagic[8] = {'A', 'I', 'G', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace detail

struct Checkpoint {
  ConfigMap config;
  ConfigMap meta;
  std::vector<std::pair<std::string, std::vector<Real>>> tensors;

  const std::vector<Real>* find(const std::string& name) const {
    for (const auto& [n, v] : tensors)
      if (n == name) return &v;
    return nullptr;
  }
};

inline void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(detail::kCkptMagic, 8);
  detail::write_u32(out, detail::kCkptVersion);
  auto write_map = [&](const ConfigMap& map) {
    detail::write_u32(out, static_cast<std::uint32_t>(map.size()));
    for (const auto& [k, v] : map) {
      detail::write_string(out, k);
      detail::write_string(out, v);
    }
  };
  write_map(ckpt.config);
  write_map(ckpt.meta);
  detail::write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, values] : ckpt.tensors) {
    detail::write_string(out, name);
    detail::write_i64(out, static_cast<std::int64_t>(values.size()));
    detail::write_doubles(out, values.data(), values.size());
  }
  if (!out) throw IoError("short write: " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw IoError("corrupt checkpoint header: " + path.string());
  if (detail::read_u32(in) != detail::kCkptVersion)
    throw IoError("unsupported checkpoint version: " + path.string());
  Checkpoint ckpt;
  auto read_map = [&]() {
    ConfigMap map;
    auto n = detail::read_u32(in);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto k = detail::read_string(in);
      map[k] = detail::read_string(in);
    }
    return map;
  };
  ckpt.config = read_map();
  ckpt.meta = read_map();
  auto count = detail::read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = detail::read_string(in);
    auto size = detail::read_i64(in);
    std::vector<Real> values(static_cast<std::size_t>(size));
    detail::read_doubles(in, values.data(), values.size());
    ckpt.tensors.emplace_back(std::move(name), std::move(values));
  }
  return ckpt;
}

inline Checkpoint model_to_checkpoint(Model& model) {
  Checkpoint ckpt;
  ckpt.config = pipeline_config_to_map(model.cfg);
  for (auto [m, d] : model.feature_dims)
    ckpt.meta[std::string("feat_dim.") + modality_name(m)] = std::to_string(d);
  for (const ParamRef& p : model_params(model))
    ckpt.tensors.emplace_back(p.name, std::vector<Real>(p.data, p.data + p.size));
  return ckpt;
}

inline Model model_from_checkpoint(const Checkpoint& ckpt,
                                   std::optional<int> expect_d_model = std::nullopt) {
  PipelineConfig cfg = pipeline_config_from_map(ckpt.config);
  if (expect_d_model && cfg.d_model != *expect_d_model)
    throw ValidationError("checkpoint d_model " + std::to_string(cfg.d_model) +
                          " does not match expected " + std::to_string(*expect_d_model));
  std::map<Modality, int> dims;
  for (Modality m : {Modality::semantic, Modality::technical, Modality::motion}) {
    auto it = ckpt.meta.find(std::string("feat_dim.") + modality_name(m));
    if (it != ckpt.meta.end()) dims[m] = std::stoi(it->second);
  }
  Model model = Model::init(cfg, dims);
  for (const ParamRef& p : model_params(model)) {
    const auto* values = ckpt.find(p.name);
    if (!values) throw IoError("checkpoint missing tensor " + p.name);
    if (values->size() != p.size)
      throw IoError("checkpoint tensor " + p.name + " has wrong size");
    std::copy(values->begin(), values->end(), p.data);
  }
  return model;
}

}  // namespace aigveval
