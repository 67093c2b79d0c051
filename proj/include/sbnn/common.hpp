#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <random>

namespace sbnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Thrown for malformed inputs (dimension mismatch, invalid bounds, bad config).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure cannot produce a usable result.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

/// log(sum(exp(v))) without overflow. Returns -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Vector& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

/// log N(x | mean, cov) through a Cholesky factor of cov.
inline double log_mvn_pdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& chol) {
  const Vector z = chol.matrixL().solve(x - mean);
  const auto d = static_cast<double>(x.size());
  const double logdet = 2.0 * chol.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (d * kLog2Pi + logdet + z.squaredNorm());
}

// ---------------------------------------------------------------------------
// Seeded random streams. Every consumer derives its own generator from
// (seed, component, stage, index) so results do not depend on thread scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::string_view component, std::uint64_t stage = 0,
                       std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(component));
  h = splitmix64(h ^ stage);
  h = splitmix64(h ^ (index * 0x9e3779b97f4a7c15ULL));
  return Rng(h);
}

inline Vector standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, one per
/// worker; fn must only touch state owned by index i.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

inline unsigned default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1u : hc;
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

/// Symmetrizes in place and returns the relative asymmetry that was removed.
inline double symmetrize(Matrix& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  m = 0.5 * (m + m.transpose()).eval();
  return scale > 0 ? asym / scale : 0.0;
}

}  // namespace sbnn
