#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mmcap {

// Deterministic random stream. All randomness in the project goes through
// this class; the raw mt19937_64 output is mapped to doubles by hand so the
// produced sequences do not depend on the standard library's distribution
// implementations.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range, rejection sampled to avoid modulo bias
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
  }

  // Box-Muller; the sine branch is discarded to keep the stream stateless.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmcap
