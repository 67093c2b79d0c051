#pragma once

// Transitional MCMC: tempers the likelihood from beta = 0 (prior) to 1
// (posterior) through intermediate densities prior * likelihood^beta,
// accumulating the evidence as the product of mean stage weights.

#include <algorithm>
#include <functional>
#include <ostream>
#include <vector>

#include "sbnn/common.hpp"
#include "sbnn/io.hpp"

namespace sbnn {

struct TmcmcConfig {
  std::size_t n_samples = 1000;
  double target_cov = 1.0;
  double proposal_scale = 0.2;
  int max_stages = 200;
  int mh_steps = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // When set, the proposal scale is retuned after every stage toward
  // `target_acceptance`, starting from proposal_scale.
  bool adaptive_scale = false;
  double target_acceptance = 0.25;

  void validate() const {
    require(n_samples >= 2, "TMCMC needs at least two samples");
    require(target_cov > 0.0, "target coefficient of variation must be positive");
    require(proposal_scale > 0.0 && proposal_scale <= 1.0, "proposal scale must lie in (0, 1]");
    require(max_stages >= 1, "max_stages must be positive");
    require(mh_steps >= 0, "mh_steps must be non-negative");
    require(target_acceptance > 0.0 && target_acceptance < 1.0, "target acceptance must lie in (0, 1)");
  }
};

struct TmcmcStage {
  double beta = 0.0;             // tempering exponent reached by this stage
  double log_mean_weight = 0.0;  // log of the mean incremental weight
  double acceptance_rate = 0.0;
  double proposal_scale = 0.0;
};

struct TmcmcResult {
  RowMatrix samples;       // n_samples x dim at the last beta reached
  Vector log_likelihood;   // per-sample log likelihood
  Vector log_prior;        // per-sample log prior
  double log_evidence = 0.0;
  std::vector<TmcmcStage> stages;
  bool reached_final = true;

  double final_beta() const { return stages.empty() ? 0.0 : stages.back().beta; }
};

using PriorSampler = std::function<Vector(Rng&)>;
using LogDensityFn = std::function<double(const Vector&)>;

/// Coefficient of variation (sample standard deviation over mean) of the
/// weights exp(dbeta * (loglike - max loglike)).
inline double weight_cov(const Vector& loglikes, double dbeta) {
  const double lmax = loglikes.maxCoeff();
  const Vector w = ((loglikes.array() - lmax) * dbeta).exp().matrix();
  const double mean = w.mean();
  if (mean <= 0.0) return std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(w.size());
  if (n < 2) return 0.0;
  const double var = (w.array() - mean).square().sum() / (n - 1.0);
  return std::sqrt(var) / mean;
}

/// Largest beta' in (beta, 1] whose weight CoV does not exceed target_cov.
inline double select_next_beta(const Vector& loglikes, double beta, double target_cov) {
  require(beta >= 0.0 && beta < 1.0, "beta must lie in [0, 1)");
  require(loglikes.size() > 0, "no log-likelihood values");
  if (!std::isfinite(loglikes.maxCoeff())) throw NumericalError("all log-likelihoods are -inf");
  if (weight_cov(loglikes, 1.0 - beta) <= target_cov) return 1.0;
  double lo = 0.0;
  double hi = 1.0 - beta;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (weight_cov(loglikes, mid) <= target_cov) lo = mid;
    else hi = mid;
  }
  // A vanishing step would stall the schedule.
  if (lo <= 0.0) lo = hi;
  return std::min(1.0, beta + lo);
}

namespace detail {

struct Evaluated {
  double log_prior;
  double log_like;
};

using JointEvaluator = std::function<Evaluated(const Vector&)>;

struct MoveOutcome {
  RowMatrix samples;
  Vector log_prior;
  Vector log_like;
  double acceptance_rate = 0.0;
};

/// Weighted covariance of the rows, regularized until it admits a Cholesky factor.
inline Eigen::LLT<Matrix> proposal_factor(const RowMatrix& samples, const Vector& weights, double scale) {
  const Vector mean = samples.transpose() * weights;
  const RowMatrix centered = samples.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * weights.asDiagonal() * centered;
  symmetrize(cov);
  const auto dim = static_cast<double>(cov.rows());
  double trace = cov.trace();
  if (!(trace > 0.0)) trace = dim;
  Eigen::LLT<Matrix> llt(cov);
  double jitter = 1e-10 * trace / dim;
  while (llt.info() != Eigen::Success) {
    cov.diagonal().array() += jitter;
    llt.compute(cov);
    jitter *= 10.0;
    if (jitter > 1e6 * trace) throw NumericalError("weighted sample covariance cannot be regularized");
  }
  return Eigen::LLT<Matrix>(cov * (scale * scale));
}

/// Multinomial resampling by `weights` (normalized), then `mh_steps` random-walk
/// Metropolis moves per chain targeting log_prior + beta * log_like.
inline MoveOutcome resample_move(const RowMatrix& samples, const Vector& log_prior, const Vector& log_like,
                                 const Vector& weights, double beta, const JointEvaluator& eval,
                                 const TmcmcConfig& cfg, std::uint64_t stage, double scale) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  require(weights.size() == n, "weight count does not match sample count");
  require((weights.array() >= 0.0).all(), "weights must be non-negative");
  const double total = weights.sum();
  if (!(total > 0.0)) throw NumericalError("all resampling weights are zero");
  const Vector w = weights / total;

  std::vector<Eigen::Index> pick(static_cast<std::size_t>(n));
  {
    Rng rng = make_stream(cfg.seed, "tmcmc-resample", stage);
    std::discrete_distribution<Eigen::Index> cat(w.data(), w.data() + n);
    for (auto& p : pick) p = cat(rng);
  }

  MoveOutcome out;
  out.samples.resize(n, dim);
  out.log_prior.resize(n);
  out.log_like.resize(n);
  std::vector<int> accepted(static_cast<std::size_t>(n), 0);

  Eigen::LLT<Matrix> chol;
  if (cfg.mh_steps > 0) chol = proposal_factor(samples, w, scale);
  const Matrix lower = cfg.mh_steps > 0 ? Matrix(chol.matrixL()) : Matrix();

  parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t c) {
    const auto src = pick[c];
    Vector cur = samples.row(src).transpose();
    double lp = log_prior[src];
    double ll = log_like[src];
    Rng rng = make_stream(cfg.seed, "tmcmc-chain", stage, c);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int s = 0; s < cfg.mh_steps; ++s) {
      const Vector prop = cur + lower * standard_normal(rng, dim);
      const double u = unif(rng);
      const Evaluated e = eval(prop);
      if (!std::isfinite(e.log_prior)) continue;
      const double log_ratio = (e.log_prior + beta * e.log_like) - (lp + beta * ll);
      if (std::log(u) < log_ratio) {
        cur = prop;
        lp = e.log_prior;
        ll = e.log_like;
        ++accepted[c];
      }
    }
    out.samples.row(static_cast<Eigen::Index>(c)) = cur.transpose();
    out.log_prior[static_cast<Eigen::Index>(c)] = lp;
    out.log_like[static_cast<Eigen::Index>(c)] = ll;
  });

  if (cfg.mh_steps > 0) {
    double acc = 0.0;
    for (int a : accepted) acc += a;
    out.acceptance_rate = acc / (static_cast<double>(n) * cfg.mh_steps);
  } else {
    out.acceptance_rate = 1.0;
  }
  return out;
}

}  // namespace detail

struct MetropolisOutcome {
  RowMatrix samples;
  double acceptance_rate = 0.0;
};

/// One resample-move step against an arbitrary log target.
inline MetropolisOutcome metropolis_stage(const RowMatrix& samples, const Vector& weights,
                                          const LogDensityFn& log_target, const TmcmcConfig& cfg,
                                          std::uint64_t stage = 0) {
  Vector lp(samples.rows());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) lp[i] = log_target(samples.row(i).transpose());
  const Vector ll = Vector::Zero(samples.rows());
  auto eval = [&](const Vector& x) { return detail::Evaluated{log_target(x), 0.0}; };
  auto moved = detail::resample_move(samples, lp, ll, weights, 1.0, eval, cfg, stage, cfg.proposal_scale);
  return {std::move(moved.samples), moved.acceptance_rate};
}

/// Samples prior * likelihood. `log_prior` must be finite wherever
/// `prior_sampler` can land.
inline TmcmcResult tmcmc_sample(const PriorSampler& prior_sampler, const LogDensityFn& log_prior,
                                const LogDensityFn& log_likelihood, const TmcmcConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n_samples);

  std::vector<Vector> initial(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Rng rng = make_stream(cfg.seed, "tmcmc-prior", 0, i);
    initial[i] = prior_sampler(rng);
  }
  const Eigen::Index dim = initial.front().size();
  TmcmcResult res;
  res.samples.resize(n, dim);
  res.log_prior.resize(n);
  res.log_likelihood.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) res.samples.row(i) = initial[static_cast<std::size_t>(i)].transpose();

  auto eval = [&](const Vector& x) -> detail::Evaluated {
    const double lp = log_prior(x);
    if (!std::isfinite(lp)) return {kNegInf, kNegInf};
    return {lp, log_likelihood(x)};
  };
  parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t i) {
    const auto e = eval(initial[i]);
    res.log_prior[static_cast<Eigen::Index>(i)] = e.log_prior;
    res.log_likelihood[static_cast<Eigen::Index>(i)] = e.log_like;
  });

  double beta = 0.0;
  double scale = cfg.proposal_scale;
  for (std::uint64_t stage = 1; beta < 1.0; ++stage) {
    if (stage > static_cast<std::uint64_t>(cfg.max_stages)) {
      res.reached_final = false;
      break;
    }
    const double next = select_next_beta(res.log_likelihood, beta, cfg.target_cov);
    const double dbeta = next - beta;
    const double lmax = res.log_likelihood.maxCoeff();
    const Vector w = ((res.log_likelihood.array() - lmax) * dbeta).exp().matrix();
    const double log_mean_w = std::log(w.mean()) + dbeta * lmax;
    res.log_evidence += log_mean_w;

    auto moved = detail::resample_move(res.samples, res.log_prior, res.log_likelihood, w, next, eval, cfg, stage, scale);
    res.samples = std::move(moved.samples);
    res.log_prior = std::move(moved.log_prior);
    res.log_likelihood = std::move(moved.log_like);
    res.stages.push_back({next, log_mean_w, moved.acceptance_rate, scale});
    if (cfg.adaptive_scale && cfg.mh_steps > 0)
      scale = std::clamp(scale * std::exp(2.0 * (moved.acceptance_rate - cfg.target_acceptance)), 1e-3, 1.0);
    beta = next;
  }
  if (!std::isfinite(res.log_evidence)) throw NumericalError("TMCMC evidence estimate is not finite");
  return res;
}

/// One JSON object per line: {stage, beta, acc_rate, log_mean_weight}.
inline void write_stage_trace(std::ostream& out, const TmcmcResult& r) {
  for (std::size_t j = 0; j < r.stages.size(); ++j) {
    json line{{"stage", j + 1},
              {"beta", r.stages[j].beta},
              {"acc_rate", r.stages[j].acceptance_rate},
              {"log_mean_weight", r.stages[j].log_mean_weight}};
    out << line.dump() << '\n';
  }
}

}  // namespace sbnn
