#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace grace {

// mt19937_64 with hand-written transforms. The std distributions are
// implementation-defined, so seeded streams would differ between standard
// libraries; these do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  // Uniform integer in [0, n), unbiased (rejection on the top partial block).
  std::uint64_t index(std::uint64_t n);

  // Uniform integer in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + index(hi - lo + 1); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace grace
