#pragma once

#include "aigveval/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace aigveval {

// ---------------------------------------------------------------------------
// Dataset manifest

struct ManifestRecord {
  std::string video_id;
  std::string uri;
  std::optional<Real> mos;
  std::optional<std::string> prompt;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
};

namespace detail {

/// RFC-4180 line split: quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> split_csv_line(const std::string& line, int row_for_errors) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    throw IoError("unterminated quote in CSV row " + std::to_string(row_for_errors));
  fields.push_back(cur);
  return fields;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

/// Parse a manifest CSV. Header must name video_id and uri; mos and prompt
/// columns are optional. Out-of-range or non-numeric mos is a hard error.
inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     Real mos_min = 1.0, Real mos_max = 5.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest: " + path.string());
  auto header = detail::split_csv_line(detail::strip_cr(line), 0);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"video_id", "uri"})
    if (!col.count(required))
      throw IoError("manifest missing required column '" + std::string(required) + "'");

  DatasetManifest manifest;
  std::set<std::string> seen;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line, row);
    auto field = [&](const std::string& name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= fields.size()) return std::nullopt;
      return fields[it->second];
    };
    ManifestRecord rec;
    rec.video_id = *field("video_id");
    rec.uri = *field("uri");
    if (!seen.insert(rec.video_id).second)
      throw IoError("duplicate video_id '" + rec.video_id + "' at row " + std::to_string(row));
    if (auto m = field("mos"); m && !m->empty()) {
      std::size_t pos = 0;
      Real v;
      try {
        v = std::stod(*m, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != m->size() || !std::isfinite(v))
        throw IoError("non-numeric mos '" + *m + "' at row " + std::to_string(row));
      if (v < mos_min || v > mos_max)
        throw IoError("mos " + *m + " out of range at row " + std::to_string(row));
      rec.mos = v;
    }
    if (auto p = field("prompt"); p) rec.prompt = *p;
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Frame sequences

/// Decoded video: T frames of H x W x C 8-bit samples, row-major, interleaved.
struct FrameSequence {
  std::string video_id;
  int frames_count = 0, height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> data;
  Real fps = 25.0;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  const std::uint8_t* frame(int t) const { return data.data() + frame_size() * t; }
  std::uint8_t* frame(int t) { return data.data() + frame_size() * t; }
  std::uint8_t at(int t, int y, int x, int c) const {
    return data[frame_size() * t + (static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int t, int y, int x, int c) {
    return data[frame_size() * t + (static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  void validate() const {
    if (frames_count < 1) throw ValidationError("FrameSequence: need at least one frame");
    if (height < 32 || width < 32) throw ValidationError("FrameSequence: frames smaller than 32x32");
    if (channels != 1 && channels != 3) throw ValidationError("FrameSequence: channels must be 1 or 3");
    if (data.size() != frame_size() * frames_count)
      throw ValidationError("FrameSequence: buffer size mismatch");
  }
};

namespace detail {

inline int pnm_read_token(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("malformed PNM header");
  return value;
}

}  // namespace detail

/// Read one binary PGM (P5) or PPM (P6) image into (H, W, C, bytes).
inline void read_pnm(const std::filesystem::path& path, int& h, int& w, int& c,
                     std::vector<std::uint8_t>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open frame: " + path.string());
  char m0 = static_cast<char>(in.get()), m1 = static_cast<char>(in.get());
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw IoError("unsupported frame format (want P5/P6 PNM): " + path.string());
  c = (m1 == '6') ? 3 : 1;
  w = detail::pnm_read_token(in);
  h = detail::pnm_read_token(in);
  int maxval = detail::pnm_read_token(in);
  if (maxval != 255) throw IoError("only maxval 255 supported: " + path.string());
  out.resize(static_cast<std::size_t>(h) * w * c);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (static_cast<std::size_t>(in.gcount()) != out.size())
    throw IoError("truncated frame data: " + path.string());
}

inline void write_pnm(const std::filesystem::path& path, int h, int w, int c,
                      const std::uint8_t* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame: " + path.string());
  out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(h) * w * c);
  if (!out) throw IoError("short write: " + path.string());
}

/// Lossless frame-directory decoder: a directory of numbered .ppm/.pgm frames
/// (any stem carrying a decimal index), optionally with an fps.txt file.
/// Indices must be contiguous from the smallest one present.
inline FrameSequence decode_frame_dir(const std::filesystem::path& dir,
                                      const std::string& video_id) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a frame directory: " + dir.string());
  std::map<long, fs::path> by_index;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    if (ext != ".ppm" && ext != ".pgm") continue;
    std::string stem = entry.path().stem().string();
    auto first = stem.find_first_of("0123456789");
    if (first == std::string::npos)
      throw IoError("frame file without index: " + entry.path().string());
    long idx = std::stol(stem.substr(first));
    if (!by_index.emplace(idx, entry.path()).second)
      throw IoError("duplicate frame index " + std::to_string(idx) + " in " + dir.string());
  }
  if (by_index.empty()) throw IoError("zero frames decoded from " + dir.string());
  long base = by_index.begin()->first;
  long expect = base;
  for (const auto& [idx, _] : by_index) {
    if (idx != expect)
      throw IoError("missing frame index " + std::to_string(expect) + " in " + dir.string());
    ++expect;
  }

  FrameSequence seq;
  seq.video_id = video_id;
  for (const auto& [idx, path] : by_index) {
    int h, w, c;
    std::vector<std::uint8_t> pixels;
    read_pnm(path, h, w, c, pixels);
    if (seq.frames_count == 0) {
      seq.height = h;
      seq.width = w;
      seq.channels = c;
    } else if (h != seq.height || w != seq.width || c != seq.channels) {
      throw IoError("frame geometry changes at index " + std::to_string(idx));
    }
    seq.data.insert(seq.data.end(), pixels.begin(), pixels.end());
    ++seq.frames_count;
  }
  if (auto fps_file = dir / "fps.txt"; fs::exists(fps_file)) {
    std::ifstream in(fps_file);
    in >> seq.fps;
  }
  seq.validate();
  return seq;
}

inline void encode_frame_dir(const FrameSequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int t = 0; t < seq.frames_count; ++t) {
    std::ostringstream name;
    name << "frame_" << std::setw(6) << std::setfill('0') << t
         << (seq.channels == 3 ? ".ppm" : ".pgm");
    write_pnm(dir / name.str(), seq.height, seq.width, seq.channels, seq.frame(t));
  }
  std::ofstream fps(dir / "fps.txt");
  fps << seq.fps << "\n";
}

/// Decoder dispatch. Only the frame-directory decoder ships; a container
/// decoder can be registered under another scheme later.
inline FrameSequence decode_video(const std::string& uri, const std::string& video_id) {
  return decode_frame_dir(uri, video_id);
}

// ---------------------------------------------------------------------------
// Predictions

struct ScoreRecord {
  std::string video_id;
  Real score = 0.0;
  std::optional<Real> mos;
};

inline void write_predictions(const std::vector<ScoreRecord>& records,
                              const std::filesystem::path& path) {
  if (records.empty()) throw ValidationError("write_predictions: empty record list");
  auto sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) { return a.video_id < b.video_id; });
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  out << "video_id,score\n";
  out << std::setprecision(10);
  for (const auto& r : sorted)
    out << detail::csv_quote(r.video_id) << "," << r.score << "\n";
  if (!out) throw IoError("short write: " + path.string());
}

inline std::vector<ScoreRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions: " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != "video_id,score")
    throw IoError("bad predictions header in " + path.string());
  std::vector<ScoreRecord> records;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line, row);
    if (fields.size() != 2) throw IoError("bad predictions row " + std::to_string(row));
    records.push_back({fields[0], std::stod(fields[1]), std::nullopt});
  }
  return records;
}

// ---------------------------------------------------------------------------
// Feature cache

/// On-disk format: magic, version, video_id, modality, shape, then the values
/// as little-endian float64 in row-major order.
struct FeatureCache {
  std::string video_id;
  Modality modality = Modality::semantic;
  std::vector<std::int64_t> shape;
  std::vector<Real> values;
  std::string producer;

  void validate() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    if (n != static_cast<std::int64_t>(values.size()))
      throw ValidationError("feature cache " + video_id + ": shape/value count mismatch");
  }

  /// Row-major matrix view; caches are rank-2 (tokens x features).
  Mat as_matrix() const {
    if (shape.size() != 2)
      throw ValidationError("feature cache " + video_id + ": expected rank-2 shape");
    Mat m(shape[0], shape[1]);
    for (std::int64_t r = 0; r < shape[0]; ++r)
      for (std::int64_t c = 0; c < shape[1]; ++c) m(r, c) = values[r * shape[1] + c];
    return m;
  }
};

namespace detail {

constexpr char kFeatureMagic[8] = {'A', 'I', 'G', 'V', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_i64(std::ostream& out, std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

inline std::int64_t read_i64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IoError("truncated header");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  auto n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated string");
  return s;
}

inline void write_doubles(std::ostream& out, const Real* data, std::size_t count) {
  static_assert(sizeof(Real) == 8);
  // Little-endian hosts only; asserted at build configuration time.
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline void read_doubles(std::istream& in, Real* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  if (!in) throw IoError("truncated value block");
}

}  // namespace detail

inline void save_feature_cache(const FeatureCache& cache, const std::filesystem::path& path) {
  cache.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature cache: " + path.string());
  out.write(detail::kFeatureMagic, 8);
  detail::write_u32(out, detail::kFeatureVersion);
  detail::write_string(out, cache.video_id);
  detail::write_string(out, modality_name(cache.modality));
  detail::write_string(out, cache.producer);
  detail::write_u32(out, static_cast<std::uint32_t>(cache.shape.size()));
  for (auto d : cache.shape) detail::write_i64(out, d);
  detail::write_i64(out, static_cast<std::int64_t>(cache.values.size()));
  detail::write_doubles(out, cache.values.data(), cache.values.size());
  if (!out) throw IoError("short write: " + path.string());
}

inline FeatureCache load_feature_cache(const std::filesystem::path& path,
                                       std::optional<Modality> expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kFeatureMagic, 8) != 0)
    throw IoError("corrupt feature cache header: " + path.string());
  if (detail::read_u32(in) != detail::kFeatureVersion)
    throw IoError("unsupported feature cache version: " + path.string());
  FeatureCache cache;
  cache.video_id = detail::read_string(in);
  cache.modality = parse_modality(detail::read_string(in));
  cache.producer = detail::read_string(in);
  auto rank = detail::read_u32(in);
  cache.shape.resize(rank);
  for (auto& d : cache.shape) d = detail::read_i64(in);
  auto count = detail::read_i64(in);
  std::int64_t expect = 1;
  for (auto d : cache.shape) expect *= d;
  if (count != expect)
    throw IoError("feature cache " + path.string() + ": declared count disagrees with shape");
  cache.values.resize(static_cast<std::size_t>(count));
  detail::read_doubles(in, cache.values.data(), cache.values.size());
  if (expected && cache.modality != *expected)
    throw IoError("feature cache " + path.string() + ": modality is " +
                  modality_name(cache.modality) + ", expected " + modality_name(*expected));
  return cache;
}

}  // namespace aigveval
