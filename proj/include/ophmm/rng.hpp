#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

#include "ophmm/common.hpp"

namespace ophmm {

// Deterministic random stream. The engine is std::mt19937_64; every
// distribution below is implemented by hand on top of raw 64-bit draws so a
// given (seed, draw sequence) produces the same values on any platform with
// the same binary, independent of how work is split across threads.
//
// Independent streams are derived from a master seed and a key path
// (e.g. {particle index, time step, purpose}) via a splitmix64 hash chain,
// so concurrent consumers never share state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v);
  static RngStream derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  double normal();
  double gamma(double shape, double rate);
  double chi_squared(double dof) { return gamma(0.5 * dof, 0.5); }
  double beta(double a, double b);
  long poisson(double mean);

  // Index in [0, weights.size()) drawn proportional to non-negative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace ophmm
