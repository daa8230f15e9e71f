#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace difftad {

// Counter-based deterministic RNG. Every random stream in the project is
// derived from one run seed plus a path of stream tags, so independent
// consumers never share or race on generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kPhi)) {}

  static std::uint64_t combine(std::uint64_t seed, std::uint64_t tag) {
    return mix(seed + kPhi + mix(tag));
  }

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    for (std::uint64_t p : path) s = combine(s, p);
    return Rng(s);
  }

  static std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t next_u64() {
    state_ += kPhi;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range [lo, hi].
  int uniform_int(int lo, int hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(wide >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the spare value is cached so draws come
  // in a fixed, reproducible order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr std::uint64_t kPhi = 0x9e3779b97f4a7c15ull;

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags for Rng::derive paths, kept in one place so no two call sites
// collide by accident.
namespace stream {
inline constexpr std::uint64_t kDataset = 1;
inline constexpr std::uint64_t kSignature = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kBatch = 4;
inline constexpr std::uint64_t kTimestep = 5;
inline constexpr std::uint64_t kNoise = 6;
inline constexpr std::uint64_t kPad = 7;
inline constexpr std::uint64_t kSelfCond = 8;
inline constexpr std::uint64_t kSample = 9;
inline constexpr std::uint64_t kMask = 10;
}  // namespace stream

}  // namespace difftad
