#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nvloc {

/// Stateless counter-based normal deviates: every (seed, stream, index) key maps to
/// one fixed N(0, 1) value, so results do not depend on evaluation order.
class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed) : seed_(seed) {}

  [[nodiscard]] double operator()(std::uint64_t stream, std::uint64_t index) const {
    const std::uint64_t k = mix(seed_ ^ mix(stream * 0x9E3779B97F4A7C15ull + mix(index + 0x632BE59BD9B4E019ull)));
    const double u1 = to_unit(mix(k));
    const double u2 = to_unit(mix(k ^ 0xD1B54A32D192ED03ull));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  // (0, 1], never zero so log() stays finite
  static double to_unit(std::uint64_t z) { return (static_cast<double>(z >> 11) + 1.0) * 0x1.0p-53; }

  std::uint64_t seed_;
};

}  // namespace nvloc
