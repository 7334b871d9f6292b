#pragma once

// Dense vector/matrix arithmetic on 64-bit floats, a counter-based seeded
// RNG, and the central-difference gradient oracle used by the rest of the
// library. All operations are pure functions over value types; shapes are
// checked on every binary operation and outputs are kept finite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ollab/errors.hpp"

namespace ollab {

using Vec = std::vector<double>;

inline constexpr double kZeroNormEps = 1e-12;
inline constexpr double kPi = 3.14159265358979323846;

inline void ensure_finite(const Vec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(std::string(what) + ": non-finite value");
}

// ---------------------------------------------------------------------------
// Mat: row-major dense matrix.
// ---------------------------------------------------------------------------

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  std::size_t size() const { return data.size(); }
};

inline void ensure_finite(const Mat& m, const char* what) {
  for (double x : m.data)
    if (!std::isfinite(x)) throw Error(std::string(what) + ": non-finite value");
}

inline void ensure_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
  if (m.cols != x.size()) throw ShapeError("matvec: cols != x.size");
  Vec y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = &m.data[r * m.cols];
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

// y = M^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
  if (m.rows != x.size()) throw ShapeError("matvec_t: rows != x.size");
  Vec y(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = &m.data[r * m.cols];
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * x[r];
  }
  return y;
}

// acc += a b^T
inline void add_outer(Mat& acc, const Vec& a, const Vec& b) {
  if (acc.rows != a.size() || acc.cols != b.size()) throw ShapeError("add_outer: shape mismatch");
  for (std::size_t r = 0; r < acc.rows; ++r)
    for (std::size_t c = 0; c < acc.cols; ++c) acc(r, c) += a[r] * b[c];
}

// ---------------------------------------------------------------------------
// Vector helpers.
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("add: size mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("sub: size mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec scale(const Vec& v, double a) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * a;
  return out;
}

// y += a * x
inline void axpy(Vec& y, double a, const Vec& x) {
  if (y.size() != x.size()) throw ShapeError("axpy: size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// Scales v to unit Euclidean norm. Direction is preserved; vectors with norm
// at or below kZeroNormEps are rejected.
inline Vec l2_normalize(const Vec& v) {
  double n = norm(v);
  if (!(n > kZeroNormEps)) throw ZeroVectorError("l2_normalize: norm <= 1e-12");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  ensure_finite(out, "l2_normalize");
  return out;
}

// Max-subtracted softmax: non-negative outputs summing to 1.
inline Vec softmax(const Vec& z) {
  if (z.empty()) throw EmptyInputError("softmax: empty input");
  ensure_finite(z, "softmax");
  double m = *std::max_element(z.begin(), z.end());
  Vec out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

// log(sum_i exp(z_i)), max-subtracted. Exact for a single element.
inline double log_sum_exp(const Vec& z) {
  if (z.empty()) throw EmptyInputError("log_sum_exp: empty input");
  double m = *std::max_element(z.begin(), z.end());
  if (z.size() == 1) return m;
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - m);
  return m + std::log(sum);
}

// Central-difference gradient estimate, one coordinate at a time. This is the
// oracle every analytic gradient in the library is checked against.
template <typename F>
Vec finite_diff_grad(F&& f, const Vec& x, double h = 1e-5) {
  if (!(h > 0.0)) throw InvalidConfigError("finite_diff_grad: h must be > 0");
  Vec g(x.size(), 0.0);
  Vec p = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    p[i] = xi + h;
    double fp = f(p);
    p[i] = xi - h;
    double fm = f(p);
    p[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Rng: counter-based generator (splitmix64). The state advances by a fixed
// increment per draw and each output is a bijective mix of the state, so an
// identical seed yields an identical draw sequence on every platform.
// fork() derives an independent stream without touching the parent.
// ---------------------------------------------------------------------------

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; u1 is kept strictly positive.
  double next_gaussian() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Unbiased uniform in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw InvalidConfigError("Rng::next_below: n must be > 0");
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Independent child stream; the parent state is not advanced.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix64(state_ ^ mix64(stream + 0x9e3779b97f4a7c15ull)));
  }

  Vec gaussian_vec(std::size_t n, double stddev = 1.0) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = next_gaussian() * stddev;
    return v;
  }

 private:
  std::uint64_t state_;
};

// Deterministic sub-seed derivation for naming independent random streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag + 0x9e3779b97f4a7c15ull));
}

// Fisher-Yates with the library Rng; std::shuffle is implementation-defined,
// this one reproduces across standard libraries.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ollab
