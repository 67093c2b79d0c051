#pragma once

// Parameter priors: the hybrid partition into ARD-governed and known-prior
// parameters, ARD precisions in log coordinates, and their Gamma hyperprior.

#include <cstddef>
#include <variant>
#include <vector>

#include "sbnn/common.hpp"

namespace sbnn {

struct FlatBox {
  double lo = -30.0;
  double hi = 30.0;
};

struct GaussianPrior {
  double mean = 0.0;
  double var = 1.0;
};

using KnownPrior = std::variant<FlatBox, GaussianPrior>;

inline double log_density(const KnownPrior& p, double v) {
  if (const auto* box = std::get_if<FlatBox>(&p)) {
    // Flat within the box; the normalizing constant is dropped.
    return (v >= box->lo && v <= box->hi) ? 0.0 : kNegInf;
  }
  const auto& g = std::get<GaussianPrior>(p);
  return log_normal_pdf(v, g.mean, g.var);
}

/// Normalized log density (flat boxes include -log(width)).
inline double normalized_log_density(const KnownPrior& p, double v) {
  if (const auto* box = std::get_if<FlatBox>(&p)) {
    return (v >= box->lo && v <= box->hi) ? -std::log(box->hi - box->lo) : kNegInf;
  }
  return log_density(p, v);
}

inline double draw(const KnownPrior& p, Rng& rng) {
  if (const auto* box = std::get_if<FlatBox>(&p)) {
    std::uniform_real_distribution<double> u(box->lo, box->hi);
    return u(rng);
  }
  const auto& g = std::get<GaussianPrior>(p);
  std::normal_distribution<double> nd(g.mean, std::sqrt(g.var));
  return nd(rng);
}

/// Hybrid prior partition. `ard_set` holds flat indices governed by
/// N(0, 1/alpha_i); `known_set[k]` has prior `known_prior[k]`.
/// `ard_sampling_box` is the proper stand-in used whenever ARD parameters
/// must be sampled without a precision (the non-informative prior).
struct PriorSpec {
  std::size_t num_params = 0;
  std::vector<std::size_t> ard_set;
  std::vector<std::size_t> known_set;
  std::vector<KnownPrior> known_prior;
  FlatBox ard_sampling_box{};

  static PriorSpec all_ard(std::size_t n, FlatBox box = {}) {
    PriorSpec p;
    p.num_params = n;
    p.ard_sampling_box = box;
    for (std::size_t i = 0; i < n; ++i) p.ard_set.push_back(i);
    return p;
  }

  static PriorSpec all_known(std::size_t n, KnownPrior prior) {
    PriorSpec p;
    p.num_params = n;
    for (std::size_t i = 0; i < n; ++i) {
      p.known_set.push_back(i);
      p.known_prior.push_back(prior);
    }
    return p;
  }

  std::size_t num_ard() const { return ard_set.size(); }

  void validate() const {
    require(known_set.size() == known_prior.size(), "known prior list must align with known_set");
    std::vector<int> seen(num_params, 0);
    for (auto i : ard_set) {
      require(i < num_params, "ard index out of range");
      ++seen[i];
    }
    for (auto i : known_set) {
      require(i < num_params, "known index out of range");
      ++seen[i];
    }
    for (int c : seen) require(c == 1, "ard_set and known_set must partition the parameters");
    require(ard_sampling_box.hi > ard_sampling_box.lo, "ARD sampling box must have positive width");
  }

  /// Proper per-parameter prior used for sampling likelihood x known prior.
  std::vector<KnownPrior> sampling_prior() const {
    std::vector<KnownPrior> out(num_params, KnownPrior{ard_sampling_box});
    for (std::size_t k = 0; k < known_set.size(); ++k) out[known_set[k]] = known_prior[k];
    return out;
  }
};

/// ARD log-precisions aligned with PriorSpec::ard_set, with box bounds.
struct AlphaVector {
  Vector log_alpha;
  Vector lower;
  Vector upper;

  AlphaVector() = default;
  explicit AlphaVector(Vector la, double lo = -12.0, double hi = 12.0)
      : log_alpha(std::move(la)),
        lower(Vector::Constant(log_alpha.size(), lo)),
        upper(Vector::Constant(log_alpha.size(), hi)) {}

  static AlphaVector constant(Eigen::Index n, double value, double lo = -12.0, double hi = 12.0) {
    return AlphaVector(Vector::Constant(n, value), lo, hi);
  }

  Eigen::Index size() const { return log_alpha.size(); }
  Vector alpha() const { return log_alpha.array().exp(); }

  void validate() const {
    require(lower.size() == log_alpha.size() && upper.size() == log_alpha.size(), "alpha bounds length mismatch");
    for (Eigen::Index i = 0; i < log_alpha.size(); ++i) {
      require(std::isfinite(log_alpha[i]), "log alpha must be finite");
      require(log_alpha[i] >= lower[i] && log_alpha[i] <= upper[i], "log alpha outside its bounds");
    }
  }

  void clamp() { log_alpha = log_alpha.cwiseMax(lower).cwiseMin(upper); }
};

/// Gamma(alpha | shape, rate) hyperprior expressed on log alpha. The Jeffreys
/// limit (shape = rate = 0) is flat in log alpha.
struct Hyperprior {
  enum class Mode { jeffreys, gamma };
  Mode mode = Mode::jeffreys;
  Vector shape;
  Vector rate;

  static Hyperprior jeffreys(Eigen::Index n) {
    return {Mode::jeffreys, Vector::Zero(n), Vector::Zero(n)};
  }
  static Hyperprior gamma(Eigen::Index n, double shape, double rate) {
    return {Mode::gamma, Vector::Constant(n, shape), Vector::Constant(n, rate)};
  }

  void validate(Eigen::Index n) const {
    require(shape.size() == n && rate.size() == n, "hyperprior length mismatch");
    require((shape.array() >= 0).all() && (rate.array() >= 0).all(), "hyperprior shape and rate must be non-negative");
    const bool zero = (shape.array() == 0).all() && (rate.array() == 0).all();
    require((mode == Mode::jeffreys) == zero, "jeffreys mode requires shape = rate = 0");
  }

  /// sum_i shape_i*log(alpha_i) - rate_i*alpha_i; additive constants dropped.
  double log_density(const Vector& log_alpha) const {
    if (mode == Mode::jeffreys) return 0.0;
    return (shape.array() * log_alpha.array() - rate.array() * log_alpha.array().exp()).sum();
  }

  Vector gradient(const Vector& log_alpha) const {
    if (mode == Mode::jeffreys) return Vector::Zero(log_alpha.size());
    return (shape.array() - rate.array() * log_alpha.array().exp()).matrix();
  }

  Vector hessian_diagonal(const Vector& log_alpha) const {
    if (mode == Mode::jeffreys) return Vector::Zero(log_alpha.size());
    return (-rate.array() * log_alpha.array().exp()).matrix();
  }

  /// Normalized log density of component i on the log-alpha axis (requires
  /// shape, rate > 0).
  double normalized_log_density(Eigen::Index i, double log_alpha) const {
    const double s = shape[i];
    const double r = rate[i];
    return s * std::log(r) - std::lgamma(s) + s * log_alpha - r * std::exp(log_alpha);
  }
};

/// Sum of ARD Gaussian log-densities over ard_set plus known-prior terms.
inline double log_prior(const Eigen::Ref<const Vector>& params, const PriorSpec& prior, const AlphaVector& alpha) {
  require(static_cast<std::size_t>(params.size()) == prior.num_params, "parameter length does not match prior");
  require(static_cast<std::size_t>(alpha.size()) == prior.num_ard(), "alpha length does not match ard_set");
  double lp = 0.0;
  for (std::size_t k = 0; k < prior.ard_set.size(); ++k) {
    const double a = std::exp(alpha.log_alpha[static_cast<Eigen::Index>(k)]);
    const double v = params[static_cast<Eigen::Index>(prior.ard_set[k])];
    lp += -0.5 * (kLog2Pi - std::log(a) + a * v * v);
  }
  for (std::size_t k = 0; k < prior.known_set.size(); ++k)
    lp += log_density(prior.known_prior[k], params[static_cast<Eigen::Index>(prior.known_set[k])]);
  return lp;
}

}  // namespace sbnn
