#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cryoforge {

/** splitmix64 step; used to derive independent substream seeds. */
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/**
 * Deterministic substream derivation: every consumer of randomness names its
 * purpose and indices, so evaluation order (and thread scheduling) cannot
 * change which numbers a given consumer sees.
 */
inline uint64_t substream_seed(uint64_t top_seed, std::string_view purpose, uint64_t a = 0,
                               uint64_t b = 0) {
  uint64_t s = top_seed ^ fnv1a64(purpose);
  splitmix64(s);
  s ^= 0x632be59bd9b4e019ULL ^ (a * 0xff51afd7ed558ccdULL);
  splitmix64(s);
  s ^= b * 0xc4ceb9fe1a85ec53ULL;
  uint64_t out = splitmix64(s);
  return out;
}

inline std::mt19937_64 make_rng(uint64_t top_seed, std::string_view purpose, uint64_t a = 0,
                                uint64_t b = 0) {
  return std::mt19937_64(substream_seed(top_seed, purpose, a, b));
}

/** Uniform in [0,1). */
inline double uniform01(std::mt19937_64& g) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(g);
}

/**
 * Standard normal via Box-Muller (not std::normal_distribution, whose output
 * sequence is implementation-defined; this keeps frozen test values portable).
 */
class NormalSampler {
 public:
  double operator()(std::mt19937_64& g) {
    if (have_) {
      have_ = false;
      return cached_;
    }
    double u1 = 0, u2 = 0;
    do {
      u1 = uniform01(g);
    } while (u1 <= 0);
    u2 = uniform01(g);
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_ = true;
    return r * std::cos(a);
  }

 private:
  bool have_ = false;
  double cached_ = 0;
};

}  // namespace cryoforge
