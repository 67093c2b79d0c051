#pragma once

// Hierarchical baseline: joint TMCMC over network parameters and their ARD
// log-precisions, with a Gamma hyperprior on each precision.

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "sbnn/io.hpp"
#include "sbnn/network.hpp"
#include "sbnn/prior.hpp"
#include "sbnn/tmcmc.hpp"

namespace sbnn {

/// Gamma(alpha | shape, rate) on every ARD precision, sampled in log alpha
/// within [log_alpha_lo, log_alpha_hi]. A zero-width box pins log alpha.
struct HierConfig {
  double gamma_shape = 1.0 + std::exp(-10.0);
  double gamma_rate = std::exp(-10.0);
  double log_alpha_lo = -10.0;
  double log_alpha_hi = 10.0;
  TmcmcConfig tmcmc{50000, 1.0, 0.2, 200, 1, 0, 1};

  void validate() const {
    require(gamma_shape > 0.0 && gamma_rate > 0.0, "hierarchical sampling needs a proper Gamma hyperprior");
    require(log_alpha_lo <= log_alpha_hi, "log alpha box is inverted");
    tmcmc.validate();
  }

  bool pinned() const { return log_alpha_lo == log_alpha_hi; }
};

/// Any model exposing a log likelihood over a flat parameter vector.
using LogLikelihoodFn = std::function<double(const Vector&)>;

/// Joint log density of (phi, log alpha) up to the likelihood normalizer:
/// log p(D|phi) + log N(phi_ard | 0, A^-1) + known priors + log Gamma density
/// transformed to log alpha (Jacobian included). -inf outside the log alpha box.
inline double joint_log_prior(const Vector& phi, const Vector& log_alpha, const PriorSpec& partition,
                              const HierConfig& hc) {
  double lp = 0.0;
  for (std::size_t k = 0; k < partition.ard_set.size(); ++k) {
    const double t = log_alpha[static_cast<Eigen::Index>(k)];
    if (t < hc.log_alpha_lo || t > hc.log_alpha_hi) return kNegInf;
    lp += log_normal_pdf(phi[static_cast<Eigen::Index>(partition.ard_set[k])], 0.0, std::exp(-t));
  }
  for (std::size_t k = 0; k < partition.known_set.size(); ++k)
    lp += log_density(partition.known_prior[k], phi[static_cast<Eigen::Index>(partition.known_set[k])]);
  if (!hc.pinned()) {
    const double s = hc.gamma_shape;
    const double r = hc.gamma_rate;
    const double norm = s * std::log(r) - std::lgamma(s);
    for (Eigen::Index k = 0; k < log_alpha.size(); ++k) lp += norm + s * log_alpha[k] - r * std::exp(log_alpha[k]);
  }
  return lp;
}

inline double joint_log_posterior(const Vector& phi, const AlphaVector& log_alpha, const Dataset& data,
                                  const NetworkSpec& spec, const HierConfig& hc, const PriorSpec& partition) {
  require(static_cast<std::size_t>(phi.size()) == partition.num_params, "parameter length does not match prior");
  require(static_cast<std::size_t>(log_alpha.size()) == partition.num_ard(), "alpha length does not match ard_set");
  const double lp = joint_log_prior(phi, log_alpha.log_alpha, partition, hc);
  if (!std::isfinite(lp)) return kNegInf;
  return lp + log_likelihood(data, spec, phi);
}

struct HierResult {
  TmcmcResult tmcmc;
  RowMatrix phi_samples;
  RowMatrix log_alpha_samples;  // n x N_alpha; constant columns when pinned
};

/// Draws log alpha from the hyperprior restricted to the box by rejection.
inline double draw_log_alpha(const HierConfig& hc, Rng& rng) {
  if (hc.pinned()) return hc.log_alpha_lo;
  std::gamma_distribution<double> gd(hc.gamma_shape, 1.0 / hc.gamma_rate);
  for (int tries = 0; tries < 100000; ++tries) {
    const double a = gd(rng);
    if (!(a > 0.0)) continue;
    const double t = std::log(a);
    if (t >= hc.log_alpha_lo && t <= hc.log_alpha_hi) return t;
  }
  throw NumericalError("hyperprior places almost no mass inside the log alpha box");
}

/// Joint sampling over an arbitrary likelihood. The sampled state is phi
/// followed by the free log alpha coordinates (none when pinned).
inline HierResult run_hierarchical(const LogLikelihoodFn& loglike, const PriorSpec& partition, const HierConfig& hc) {
  hc.validate();
  partition.validate();
  const auto np = static_cast<Eigen::Index>(partition.num_params);
  const auto na = static_cast<Eigen::Index>(partition.num_ard());
  const bool pinned = hc.pinned();

  auto split_alpha = [&](const Vector& state) -> Vector {
    if (pinned) return Vector::Constant(na, hc.log_alpha_lo);
    return state.tail(na);
  };

  PriorSampler sampler = [&](Rng& rng) {
    Vector state(pinned ? np : np + na);
    Vector t(na);
    for (Eigen::Index k = 0; k < na; ++k) t[k] = draw_log_alpha(hc, rng);
    for (std::size_t k = 0; k < partition.ard_set.size(); ++k)
      state[static_cast<Eigen::Index>(partition.ard_set[k])] =
          draw(KnownPrior{GaussianPrior{0.0, std::exp(-t[static_cast<Eigen::Index>(k)])}}, rng);
    for (std::size_t k = 0; k < partition.known_set.size(); ++k)
      state[static_cast<Eigen::Index>(partition.known_set[k])] = draw(partition.known_prior[k], rng);
    if (!pinned) state.tail(na) = t;
    return state;
  };
  LogDensityFn log_prior = [&](const Vector& state) {
    return joint_log_prior(state.head(np), split_alpha(state), partition, hc);
  };
  LogDensityFn log_like = [&](const Vector& state) { return loglike(state.head(np)); };

  HierResult res;
  res.tmcmc = tmcmc_sample(sampler, log_prior, log_like, hc.tmcmc);
  res.phi_samples = res.tmcmc.samples.leftCols(np);
  if (pinned) res.log_alpha_samples = RowMatrix::Constant(res.tmcmc.samples.rows(), na, hc.log_alpha_lo);
  else res.log_alpha_samples = res.tmcmc.samples.rightCols(na);
  return res;
}

inline HierResult run_hierarchical(const Dataset& data, const NetworkSpec& spec, const PriorSpec& partition,
                                   const HierConfig& hc) {
  data.validate();
  require(partition.num_params == spec.num_params(), "prior partition does not match network");
  return run_hierarchical([&](const Vector& phi) { return log_likelihood(data, spec, phi); }, partition, hc);
}

/// Linear-interpolated empirical quantile of a sorted range.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Per-column {mean, sd, q025, q25, q50, q75, q975} keyed by column name.
inline json column_summary(const RowMatrix& samples, const std::vector<std::string>& names) {
  json out = json::object();
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    std::vector<double> col(static_cast<std::size_t>(samples.rows()));
    for (Eigen::Index r = 0; r < samples.rows(); ++r) col[static_cast<std::size_t>(r)] = samples(r, c);
    std::sort(col.begin(), col.end());
    const double mean = samples.col(c).mean();
    const double sd = samples.rows() > 1
                          ? std::sqrt((samples.col(c).array() - mean).square().sum() / static_cast<double>(samples.rows() - 1))
                          : 0.0;
    out[names.at(static_cast<std::size_t>(c))] = {{"mean", mean},
                                                  {"sd", sd},
                                                  {"q025", sorted_quantile(col, 0.025)},
                                                  {"q25", sorted_quantile(col, 0.25)},
                                                  {"q50", sorted_quantile(col, 0.5)},
                                                  {"q75", sorted_quantile(col, 0.75)},
                                                  {"q975", sorted_quantile(col, 0.975)}};
  }
  return out;
}

}  // namespace sbnn
