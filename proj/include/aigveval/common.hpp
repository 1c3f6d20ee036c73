#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace aigveval {

using Real = double;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Raised on malformed or unreadable inputs (files, manifests, caches).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on contract violations (shape mismatches, bad ranges, missing data).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Modality { semantic, technical, motion };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::semantic: return "semantic";
    case Modality::technical: return "technical";
    case Modality::motion: return "motion";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "semantic") return Modality::semantic;
  if (s == "technical") return Modality::technical;
  if (s == "motion") return Modality::motion;
  throw ValidationError("unknown modality: " + s);
}

// All randomness in the library goes through mt19937_64 with the explicit
// mappings below, so outputs reproduce across standard libraries.
using Rng = std::mt19937_64;

/// Uniform in [0,1) using the top 53 bits of the generator output.
inline Real uniform01(Rng& rng) {
  return static_cast<Real>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Modulo mapping, n is tiny relative to 2^64.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  return rng() % n;
}

/// Uniform in [-scale, scale].
inline Real uniform_sym(Rng& rng, Real scale) {
  return (2.0 * uniform01(rng) - 1.0) * scale;
}

inline Mat random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, Real scale) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform_sym(rng, scale);
  return m;
}

/// FNV-1a, used for seeding per-token embedding rows.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace aigveval
