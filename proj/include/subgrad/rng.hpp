#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "subgrad/core.hpp"

namespace subgrad {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash4(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d) {
  std::uint64_t h = mix64(a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  h = mix64(h ^ d);
  return h;
}

}  // namespace detail

/// Counter-based generator: draw j of sample index k in stream (seed, id) is
/// a pure function of (seed, id, k, j). Cloning a stream at any index is a
/// constructor call, and thread layout cannot change the sequence.
class SampleRng {
 public:
  SampleRng(RngSpec spec, std::uint64_t sample_index)
      : spec_(spec), index_(sample_index) {}

  std::uint64_t next_u64() {
    return detail::hash4(spec_.seed, spec_.stream_id, index_, draw_++);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal, Box-Muller. Draws two uniforms per pair; the spare is
  /// cached within this sample's substream only.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t index() const { return index_; }

 private:
  RngSpec spec_;
  std::uint64_t index_;
  std::uint64_t draw_ = 0;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace subgrad
