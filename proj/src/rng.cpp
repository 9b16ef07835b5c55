#include "ophmm/rng.hpp"

#include <cmath>

namespace ophmm {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::mix(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

RngStream RngStream::derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t v : path) h = mix(h, v);
  return RngStream(h);
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw numerical_error("uniform_int: empty range");
  // Rejection to avoid modulo bias.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double RngStream::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_normal_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  have_spare_ = true;
  return u * f;
}

double RngStream::gamma(double shape, double rate) {
  if (shape <= 0.0 || rate <= 0.0) throw numerical_error("gamma: nonpositive parameter");
  // Marsaglia-Tsang squeeze; shapes below one are boosted via U^{1/shape}.
  double boost = 1.0;
  double a = shape;
  if (a < 1.0) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    boost = std::pow(u, 1.0 / a);
    a += 1.0;
  }
  double d = a - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v / rate;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return boost * d * v / rate;
  }
}

double RngStream::beta(double a, double b) {
  double x = gamma(a, 1.0);
  double y = gamma(b, 1.0);
  double s = x + y;
  if (s <= 0.0) return 0.5;
  return x / s;
}

long RngStream::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) throw numerical_error("poisson: bad mean");
  if (mean == 0.0) return 0;
  // Knuth's product-of-uniforms is exact but O(mean); large means are split
  // using Poisson(m) = Poisson(m/2) + Poisson(m/2), which stays exact.
  if (mean > 60.0) return poisson(0.5 * mean) + poisson(0.5 * mean);
  double limit = std::exp(-mean);
  double prod = uniform();
  long n = 0;
  while (prod > limit) {
    prod *= uniform();
    ++n;
  }
  return n;
}

std::size_t RngStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw numerical_error("categorical: bad weight");
    total += w;
  }
  if (total <= 0.0) throw numerical_error("categorical: all weights zero");
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Round-off can push u past the running sum; return the last positive bin.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

}  // namespace ophmm
