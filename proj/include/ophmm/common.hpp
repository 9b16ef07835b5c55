#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ophmm {

constexpr double NEG_INF = -std::numeric_limits<double>::infinity();

// Thrown on malformed configuration (CLI exit code 2).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on malformed or inconsistent data (CLI exit code 3).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a numerical invariant breaks down (CLI exit code 4).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

// Dense row-major matrix of doubles; the only shapes in play are small
// (kappa, augmented-chain, or grid sized), so no external linear algebra
// library is pulled in.
class Mat {
 public:
  Mat() : rows_(0), cols_(0) {}
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

 private:
  std::size_t rows_, cols_;
  Vec data_;
};

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Symmetric 2x2 matrix, stored as (xx, xy, yy).
struct Sym2 {
  double xx = 1.0, xy = 0.0, yy = 1.0;

  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }

  // Quadratic form v' * inv(S) * v.
  double inv_quad(Vec2 v) const {
    double d = det();
    if (d <= 0.0) throw numerical_error("singular covariance in quadratic form");
    return (yy * v.x * v.x - 2.0 * xy * v.x * v.y + xx * v.y * v.y) / d;
  }

  Sym2 inverse() const {
    double d = det();
    if (d <= 0.0) throw numerical_error("singular 2x2 matrix");
    return {yy / d, -xy / d, xx / d};
  }

  Sym2 scaled(double s) const { return {s * xx, s * xy, s * yy}; }

  bool positive_definite() const { return xx > 0.0 && det() > 0.0; }

  // Lower Cholesky factor L with S = L L'. Entries (l11, l21, l22).
  void cholesky(double& l11, double& l21, double& l22) const {
    if (!positive_definite()) throw numerical_error("2x2 Cholesky of non-PD matrix");
    l11 = std::sqrt(xx);
    l21 = xy / l11;
    l22 = std::sqrt(yy - l21 * l21);
  }

  // Eigenvalues (ascending) of the symmetric matrix.
  void eigenvalues(double& lo, double& hi) const {
    double mean = 0.5 * (xx + yy);
    double r = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    lo = mean - r;
    hi = mean + r;
  }
};

inline double logsumexp(std::span<const double> v) {
  double m = NEG_INF;
  for (double x : v) m = std::max(m, x);
  if (m == NEG_INF) return NEG_INF;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_add(double a, double b) {
  if (a == NEG_INF) return b;
  if (b == NEG_INF) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Throws numerical_error when the system is singular to working precision.
Vec solve_linear(Mat a, Vec b);

// sum_i p_i log2(p_i / q_i) with 0 log 0 = 0; +inf where p_i > 0, q_i = 0.
double kl_divergence_bits(std::span<const double> p, std::span<const double> q);

// Runs fn(i) for i in [0, n). `threads <= 1` runs inline; otherwise [0, n)
// is split into contiguous chunks, one worker per chunk. fn must only touch
// state owned by index i, so the result cannot depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace ophmm
