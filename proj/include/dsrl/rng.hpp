#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace dsrl {

// SplitMix64: tiny, fast, and (unlike the std distributions) bit-stable
// across standard library versions. Everything random in this project goes
// through it so that fixed seeds give byte-identical artifacts.
struct SplitMix64 {
  uint64_t state = 0;

  explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

// Derive a child seed from a parent seed and a stream tag.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  SplitMix64 sm(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
  sm.next();
  return sm.next() ^ b;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : sm_(seed) {}

  uint64_t next_u64() { return sm_.next(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(sm_.next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range, rejection sampled
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t u;
    do {
      u = sm_.next();
    } while (u >= limit);
    return lo + static_cast<int>(u % span);
  }

  // Box-Muller with a cached spare.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(0, i);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  SplitMix64 sm_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsrl
