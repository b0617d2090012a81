#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace epd {

// Seeded generator with hand-rolled transforms. std::random distributions are
// implementation-defined, so every transform here is spelled out explicitly to
// keep outputs reproducible byte-for-byte under one seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  float uniform_float(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // Inclusive range, rejection-free modulo on 64 bits (bias negligible and,
  // more importantly, deterministic).
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Marsaglia polar method; caches the spare deviate.
  double normal();

  float normal_float() { return static_cast<float>(normal()); }

  // Shuffles indices [0, n) with Fisher-Yates.
  std::vector<int64_t> permutation(int64_t n);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream derivation for per-item generators (e.g. one per image): mixes the
// master seed with a stream index through splitmix64 so streams are
// decorrelated and independent of generation order.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

}  // namespace epd
