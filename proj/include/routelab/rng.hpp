#pragma once

#include <cstdint>
#include <limits>

namespace routelab {

/// Deterministic splittable PRNG (splitmix64 core).
///
/// Every randomized operation in the library takes one of these explicitly;
/// nothing reads global state. Streams for parallel work are derived by
/// counter with split(), so a run is reproducible from its master seed alone
/// regardless of scheduling.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], inclusive. Requires lo <= hi.
  int next_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t limit =
        std::numeric_limits<uint64_t>::max() -
        std::numeric_limits<uint64_t>::max() % span;
    uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
  }

  bool next_bool(double p) { return next_double() < p; }

  /// Independent stream derived from the original seed and a counter.
  /// Does not consume or depend on this stream's position.
  Rng split(uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream + 0x632BE59BD9B4E019ull)));
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_;
  uint64_t state_;
};

/// FNV-1a 64-bit hash; used for config hashes and the vocabulary hash in
/// checkpoint headers.
inline uint64_t fnv1a64(const void* data, size_t n,
                        uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace routelab
