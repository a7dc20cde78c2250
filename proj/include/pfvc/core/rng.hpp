#pragma once

#include <cmath>
#include <cstdint>

namespace pfvc {

// Counter-based splitmix64 stream. Deterministic across platforms; child
// streams are derived with split() so parallel call sites never share state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; always consumes two draws so the stream position is fixed.
  double normal() {
    double u1 = (static_cast<double>(u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Rng split(uint64_t key) const {
    uint64_t h = state_ ^ 0x6a09e667f3bcc909ULL;
    h = (h ^ key) * 0x100000001b3ULL;
    h ^= h >> 29;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 32;
    return Rng(h);
  }

 private:
  uint64_t state_;
};

// FNV-1a, used to derive per-name parameter init streams and config hashes.
inline uint64_t fnv1a(const char* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pfvc
