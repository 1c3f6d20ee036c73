#pragma once

#include "aigveval/common.hpp"
#include "aigveval/prompting.hpp"
#include "aigveval/regressor.hpp"
#include "aigveval/sampling.hpp"
#include "aigveval/objectives.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace aigveval {

using ConfigMap = std::map<std::string, std::string>;

/// Flat key=value config format. '#' starts a comment; whitespace around the
/// separator is ignored.
inline ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  ConfigMap map;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(lineno) + ": expected key=value");
    map[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return map;
}

enum class ScheduleShape { linear, cosine, constant };

inline ScheduleShape parse_schedule(const std::string& s) {
  if (s == "linear") return ScheduleShape::linear;
  if (s == "cosine") return ScheduleShape::cosine;
  if (s == "constant") return ScheduleShape::constant;
  throw ValidationError("unknown schedule shape: " + s);
}

inline const char* schedule_name(ScheduleShape s) {
  switch (s) {
    case ScheduleShape::linear: return "linear";
    case ScheduleShape::cosine: return "cosine";
    case ScheduleShape::constant: return "constant";
  }
  return "?";
}

struct TrainConfig {
  Real lr = 1e-5;
  Real weight_decay = 0.05;
  int epochs = 10;
  Real warmup_epochs = 2.5;
  int batch_size = 8;
  ScheduleShape schedule = ScheduleShape::linear;
  std::set<std::string> freeze = {"semantic_extractor"};

  void validate() const {
    if (lr <= 0) throw ValidationError("TrainConfig: lr must be positive");
    if (warmup_epochs < 0 || warmup_epochs > epochs)
      throw ValidationError("TrainConfig: warmup_epochs outside [0, epochs]");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
  }
};

struct PipelineConfig {
  SamplingSpec sampling;
  int d_model = 128;
  int decoder_layers = 2;
  int decoder_heads = 4;
  int decoder_hidden = 0;  // 0 -> 4 * d_model
  std::string extractor = "toy";
  AssemblyMode assembly = AssemblyMode::anchors;
  std::vector<Modality> modalities = {Modality::semantic, Modality::technical, Modality::motion};
  LoRAConfig lora;
  LossWeights loss;
  TrainConfig train;
  Real mos_min = 1.0, mos_max = 5.0;
  std::uint64_t seed = 0;

  ToyDecoderConfig decoder_config() const {
    return {decoder_layers, decoder_heads, d_model, decoder_hidden};
  }

  bool has_modality(Modality m) const {
    for (Modality mm : modalities)
      if (mm == m) return true;
    return false;
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_map(const ConfigMap& map) {
  PipelineConfig cfg;
  std::set<std::string> known;
  auto get = [&](const std::string& key, auto& out) {
    known.insert(key);
    auto it = map.find(key);
    if (it == map.end()) return false;
    std::istringstream ss(it->second);
    ss >> out;
    if (ss.fail()) throw ValidationError("config key " + key + ": cannot parse '" + it->second + "'");
    return true;
  };
  auto get_string = [&](const std::string& key, std::string& out) {
    known.insert(key);
    auto it = map.find(key);
    if (it != map.end()) out = it->second;
  };

  get("model.d_model", cfg.d_model);
  get("model.layers", cfg.decoder_layers);
  get("model.heads", cfg.decoder_heads);
  get("model.hidden", cfg.decoder_hidden);
  get_string("model.extractor", cfg.extractor);
  std::string assembly = "anchors", modalities, schedule = "linear", targets;
  get_string("model.assembly", assembly);
  cfg.assembly = parse_assembly_mode(assembly);
  get_string("model.modalities", modalities);
  if (!modalities.empty()) {
    cfg.modalities.clear();
    for (const auto& m : detail::split_list(modalities)) cfg.modalities.push_back(parse_modality(m));
  }

  get("sampling.grid_size", cfg.sampling.grid_size);
  get("sampling.fragment_edge", cfg.sampling.fragment_edge);
  get("sampling.clip_length", cfg.sampling.clip_length);
  get("sampling.alpha", cfg.sampling.alpha);
  get("sampling.semantic_frames", cfg.sampling.semantic_frame_count);

  get("train.lr", cfg.train.lr);
  get("train.weight_decay", cfg.train.weight_decay);
  get("train.epochs", cfg.train.epochs);
  get("train.warmup_epochs", cfg.train.warmup_epochs);
  get("train.batch_size", cfg.train.batch_size);
  get_string("train.schedule", schedule);
  cfg.train.schedule = parse_schedule(schedule);

  get("lora.rank", cfg.lora.rank);
  get("lora.scaling", cfg.lora.scaling);
  get_string("lora.targets", targets);
  if (!targets.empty()) {
    cfg.lora.targets.clear();
    for (const auto& t : detail::split_list(targets)) cfg.lora.targets.insert(t);
  }

  get("loss.lambda_rank", cfg.loss.lambda_rank);
  get("data.mos_min", cfg.mos_min);
  get("data.mos_max", cfg.mos_max);
  get("seed", cfg.seed);

  // freeze.<component> = true|false; semantic_extractor is frozen by default.
  for (const auto& [key, value] : map) {
    if (key.rfind("freeze.", 0) == 0) {
      std::string component = key.substr(7);
      if (value == "true" || value == "1") cfg.train.freeze.insert(component);
      else cfg.train.freeze.erase(component);
      continue;
    }
    if (!known.count(key))
      throw ValidationError("unknown config key: " + key);
  }

  cfg.sampling.seed = cfg.seed;
  cfg.sampling.validate();
  cfg.lora.validate();
  cfg.loss.validate();
  cfg.train.validate();
  return cfg;
}

inline ConfigMap pipeline_config_to_map(const PipelineConfig& cfg) {
  ConfigMap map;
  auto put = [&](const std::string& key, auto value) {
    std::ostringstream ss;
    ss << std::setprecision(17) << value;
    map[key] = ss.str();
  };
  put("model.d_model", cfg.d_model);
  put("model.layers", cfg.decoder_layers);
  put("model.heads", cfg.decoder_heads);
  put("model.hidden", cfg.decoder_hidden);
  map["model.extractor"] = cfg.extractor;
  map["model.assembly"] = cfg.assembly == AssemblyMode::anchors        ? "anchors"
                          : cfg.assembly == AssemblyMode::direct_concat ? "direct_concat"
                                                                        : "fusion";
  std::string mods;
  for (Modality m : cfg.modalities) {
    if (!mods.empty()) mods += ",";
    mods += modality_name(m);
  }
  map["model.modalities"] = mods;
  put("sampling.grid_size", cfg.sampling.grid_size);
  put("sampling.fragment_edge", cfg.sampling.fragment_edge);
  put("sampling.clip_length", cfg.sampling.clip_length);
  put("sampling.alpha", cfg.sampling.alpha);
  put("sampling.semantic_frames", cfg.sampling.semantic_frame_count);
  put("train.lr", cfg.train.lr);
  put("train.weight_decay", cfg.train.weight_decay);
  put("train.epochs", cfg.train.epochs);
  put("train.warmup_epochs", cfg.train.warmup_epochs);
  put("train.batch_size", cfg.train.batch_size);
  map["train.schedule"] = schedule_name(cfg.train.schedule);
  put("lora.rank", cfg.lora.rank);
  put("lora.scaling", cfg.lora.scaling);
  std::string targets;
  for (const auto& t : cfg.lora.targets) {
    if (!targets.empty()) targets += ",";
    targets += t;
  }
  map["lora.targets"] = targets;
  put("loss.lambda_rank", cfg.loss.lambda_rank);
  put("data.mos_min", cfg.mos_min);
  put("data.mos_max", cfg.mos_max);
  put("seed", cfg.seed);
  for (const auto& f : cfg.train.freeze) map["freeze." + f] = "true";
  return map;
}

/// Every artifact directory gets the exact resolved config written next to it.
inline void write_config_echo(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config echo: " + path.string());
  for (const auto& [k, v] : pipeline_config_to_map(cfg)) out << k << " = " << v << "\n";
}

}  // namespace aigveval
