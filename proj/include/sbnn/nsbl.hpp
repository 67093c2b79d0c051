#pragma once

// Semi-analytic sparse learning on top of a Gaussian-mixture approximation of
// likelihood x known prior. Each kernel multiplied by the ARD prior
// N(phi_ard | 0, diag(alpha)^-1) stays Gaussian, so the evidence, its
// derivatives in log alpha, the relevance indicators and the posterior mixture
// all have closed forms.
//
// Per kernel, with S the ARD indices, A = diag(alpha_S) and
//   M = I + A^1/2 Sigma_SS A^1/2,  R = M^-1,  v = A^1/2 mu_S,  u = R v,
// the kernel evidence N(0 | mu_S, Sigma_SS + A^-1) is
//   log z = -d/2 log 2pi - 1/2 log|M| + 1/2 sum log alpha - 1/2 v'u,
// with  d log z / d log alpha_i = (R_ii - u_i^2) / 2  and
//   d2 log z / d log alpha_i d log alpha_j = -delta_ij g_i + R_ij^2 / 2 - u_i u_j R_ij.
// A^-1 is never formed, so precisions at the upper bound stay well conditioned.

#include <optional>
#include <string>
#include <vector>

#include "sbnn/common.hpp"
#include "sbnn/gmm.hpp"
#include "sbnn/io.hpp"
#include "sbnn/prior.hpp"

namespace sbnn {

struct KernelConditional {
  Vector m;       // posterior mean
  Matrix P;       // posterior covariance
  double log_z;   // log of the kernel's evidence contribution, before its mixing weight
};

namespace detail {

struct KernelBlocks {
  Vector mu_s;
  Matrix sigma_ss;
  Matrix sigma_s_all;  // rows S, all columns
};

struct KernelTerms {
  double log_z = 0.0;
  Matrix llt_l;  // Cholesky factor of M
  Matrix r;      // M^-1
  Vector u;
  Vector g;
};

inline KernelBlocks kernel_blocks(const GaussianKernel& k, const std::vector<std::size_t>& ard) {
  const auto d = static_cast<Eigen::Index>(ard.size());
  KernelBlocks b;
  b.mu_s.resize(d);
  b.sigma_ss.resize(d, d);
  b.sigma_s_all.resize(d, k.sigma.cols());
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<Eigen::Index>(ard[static_cast<std::size_t>(i)]);
    b.mu_s[i] = k.mu[si];
    b.sigma_s_all.row(i) = k.sigma.row(si);
    for (Eigen::Index j = 0; j < d; ++j) b.sigma_ss(i, j) = k.sigma(si, static_cast<Eigen::Index>(ard[static_cast<std::size_t>(j)]));
  }
  return b;
}

inline KernelTerms kernel_terms(const KernelBlocks& b, const Vector& log_alpha, bool with_derivatives) {
  const Eigen::Index d = b.mu_s.size();
  KernelTerms t;
  if (d == 0) return t;
  const Vector sqrt_a = (0.5 * log_alpha.array()).exp().matrix();
  Matrix m = sqrt_a.asDiagonal() * b.sigma_ss * sqrt_a.asDiagonal();
  m.diagonal().array() += 1.0;
  symmetrize(m);
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("kernel evidence matrix is not positive definite");
  const Vector v = sqrt_a.cwiseProduct(b.mu_s);
  t.u = llt.solve(v);
  const double logdet_m = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  t.log_z = -0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * logdet_m + 0.5 * log_alpha.sum() - 0.5 * v.dot(t.u);
  if (with_derivatives) {
    t.r = llt.solve(Matrix::Identity(d, d));
    symmetrize(t.r);
    t.g = 0.5 * (t.r.diagonal() - t.u.cwiseAbs2());
  }
  t.llt_l = llt.matrixL();
  return t;
}

inline void check_alpha(const Gmm& g, const AlphaVector& alpha, const PriorSpec& partition) {
  require(static_cast<std::size_t>(g.dim()) == partition.num_params, "mixture dimension does not match the prior partition");
  require(static_cast<std::size_t>(alpha.size()) == partition.num_ard(), "alpha length does not match ard_set");
  for (auto i : partition.ard_set) require(i < partition.num_params, "ard index out of range");
}

}  // namespace detail

/// Product of one mixture kernel with the ARD prior: posterior moments and
/// the evidence contribution with phi_{-alpha} marginalized exactly.
inline KernelConditional kernel_conditional(const GaussianKernel& k, const AlphaVector& alpha,
                                            const PriorSpec& partition) {
  require(static_cast<std::size_t>(k.mu.size()) == partition.num_params, "kernel dimension does not match the prior partition");
  require(static_cast<std::size_t>(alpha.size()) == partition.num_ard(), "alpha length does not match ard_set");
  const auto blocks = detail::kernel_blocks(k, partition.ard_set);
  const auto terms = detail::kernel_terms(blocks, alpha.log_alpha, false);
  KernelConditional c;
  c.log_z = terms.log_z;
  if (partition.num_ard() == 0) {
    c.m = k.mu;
    c.P = k.sigma;
    return c;
  }
  // Woodbury: P = Sigma - G' M^-1 G and m = mu - G' M^-1 v with G = A^1/2 Sigma_S,:
  const Vector sqrt_a = (0.5 * alpha.log_alpha.array()).exp().matrix();
  const Matrix gmat = sqrt_a.asDiagonal() * blocks.sigma_s_all;
  const auto lower = terms.llt_l.triangularView<Eigen::Lower>();
  const Matrix w = lower.solve(gmat);  // L^-1 G
  c.P = k.sigma - w.transpose() * w;
  symmetrize(c.P);
  const Vector v = sqrt_a.cwiseProduct(blocks.mu_s);
  c.m = k.mu - w.transpose() * lower.solve(v);
  return c;
}

/// Evaluates log evidence, objective and derivatives for one mixture and
/// partition; the per-kernel ARD sub-blocks are extracted once.
class EvidenceModel {
 public:
  EvidenceModel(const Gmm& g, const PriorSpec& partition) : gmm_(&g), partition_(&partition) {
    require(static_cast<std::size_t>(g.dim()) == partition.num_params, "mixture dimension does not match the prior partition");
    for (const auto& k : g.kernels()) blocks_.push_back(detail::kernel_blocks(k, partition.ard_set));
    log_a_.resize(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) log_a_[static_cast<Eigen::Index>(k)] = g.kernel(k).a > 0 ? std::log(g.kernel(k).a) : kNegInf;
  }

  Eigen::Index num_ard() const { return static_cast<Eigen::Index>(partition_->num_ard()); }
  const Gmm& gmm() const { return *gmm_; }
  const PriorSpec& partition() const { return *partition_; }

  double log_evidence(const Vector& log_alpha) const {
    check(log_alpha);
    Vector terms(log_a_.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      terms[static_cast<Eigen::Index>(k)] = log_a_[static_cast<Eigen::Index>(k)] + detail::kernel_terms(blocks_[k], log_alpha, false).log_z;
    return log_sum_exp(terms);
  }

  struct Derivatives {
    double value = 0.0;
    Vector gradient;
    Matrix hessian;
  };

  /// Log evidence with exact gradient and Hessian in log alpha.
  Derivatives log_evidence_derivatives(const Vector& log_alpha) const {
    check(log_alpha);
    const Eigen::Index d = num_ard();
    const auto nk = static_cast<Eigen::Index>(blocks_.size());
    std::vector<detail::KernelTerms> terms;
    terms.reserve(blocks_.size());
    Vector logw(nk);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      terms.push_back(detail::kernel_terms(blocks_[k], log_alpha, true));
      logw[static_cast<Eigen::Index>(k)] = log_a_[static_cast<Eigen::Index>(k)] + terms.back().log_z;
    }
    Derivatives out;
    out.value = log_sum_exp(logw);
    out.gradient = Vector::Zero(d);
    out.hessian = Matrix::Zero(d, d);
    if (d == 0) return out;
    for (Eigen::Index k = 0; k < nk; ++k) {
      const double wk = std::exp(logw[k] - out.value);
      if (wk == 0.0) continue;
      const auto& t = terms[static_cast<std::size_t>(k)];
      Matrix hk = 0.5 * t.r.cwiseAbs2() - (t.u * t.u.transpose()).cwiseProduct(t.r);
      hk.diagonal() -= t.g;
      out.gradient += wk * t.g;
      out.hessian += wk * (hk + t.g * t.g.transpose());
    }
    out.hessian -= out.gradient * out.gradient.transpose();
    symmetrize(out.hessian);
    return out;
  }

  double objective(const Vector& log_alpha, const Hyperprior& hp) const {
    return log_evidence(log_alpha) + hp.log_density(log_alpha);
  }

  Derivatives objective_derivatives(const Vector& log_alpha, const Hyperprior& hp) const {
    auto d = log_evidence_derivatives(log_alpha);
    d.value += hp.log_density(log_alpha);
    d.gradient += hp.gradient(log_alpha);
    d.hessian.diagonal() += hp.hessian_diagonal(log_alpha);
    return d;
  }

 private:
  void check(const Vector& log_alpha) const {
    require(log_alpha.size() == num_ard(), "alpha length does not match ard_set");
    require(log_alpha.allFinite(), "log alpha must be finite");
  }

  const Gmm* gmm_;
  const PriorSpec* partition_;
  std::vector<detail::KernelBlocks> blocks_;
  Vector log_a_;
};

inline double log_evidence(const Gmm& g, const AlphaVector& alpha, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  return EvidenceModel(g, partition).log_evidence(alpha.log_alpha);
}

/// log evidence + sum_i [s_i log alpha_i - r_i alpha_i]
inline double objective(const Gmm& g, const AlphaVector& alpha, const Hyperprior& hp, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  hp.validate(alpha.size());
  return EvidenceModel(g, partition).objective(alpha.log_alpha, hp);
}

inline Vector objective_grad(const Gmm& g, const AlphaVector& alpha, const Hyperprior& hp, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  hp.validate(alpha.size());
  return EvidenceModel(g, partition).objective_derivatives(alpha.log_alpha, hp).gradient;
}

inline Matrix objective_hess(const Gmm& g, const AlphaVector& alpha, const Hyperprior& hp, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  hp.validate(alpha.size());
  return EvidenceModel(g, partition).objective_derivatives(alpha.log_alpha, hp).hessian;
}

// ---------------------------------------------------------------------------
// Relevance and posterior

struct Relevance {
  Matrix per_kernel;  // K x N_alpha, gamma_i^(k) = 1 - alpha_i P_ii^(k) clamped to [0, 1]
  Vector rms;         // sqrt(mean_k gamma_i^(k)^2)
};

/// Uses alpha_i P_ii = 1 - (M^-1)_ii, so gamma_i = (M^-1)_ii; this avoids the
/// cancellation in 1 - alpha_i P_ii when alpha_i is large.
inline Relevance relevance_indicators(const Gmm& g, const AlphaVector& alpha, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  const auto d = static_cast<Eigen::Index>(partition.num_ard());
  const auto nk = static_cast<Eigen::Index>(g.size());
  Relevance rel;
  rel.per_kernel.resize(nk, d);
  for (Eigen::Index k = 0; k < nk; ++k) {
    const auto blocks = detail::kernel_blocks(g.kernel(static_cast<std::size_t>(k)), partition.ard_set);
    const auto terms = detail::kernel_terms(blocks, alpha.log_alpha, true);
    for (Eigen::Index i = 0; i < d; ++i) rel.per_kernel(k, i) = std::clamp(terms.r(i, i), 0.0, 1.0);
  }
  rel.rms = (rel.per_kernel.array().square().colwise().sum() / static_cast<double>(nk)).sqrt().matrix().transpose();
  return rel;
}

/// Mixture of the per-kernel posteriors N(m_k, P_k) with weights a_k z_k, normalized.
inline Gmm posterior_gmm(const Gmm& g, const AlphaVector& alpha, const PriorSpec& partition) {
  detail::check_alpha(g, alpha, partition);
  std::vector<KernelConditional> conds;
  Vector logw(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) {
    conds.push_back(kernel_conditional(g.kernel(k), alpha, partition));
    logw[static_cast<Eigen::Index>(k)] = (g.kernel(k).a > 0 ? std::log(g.kernel(k).a) : kNegInf) + conds.back().log_z;
  }
  const double lse = log_sum_exp(logw);
  std::vector<GaussianKernel> ks;
  for (std::size_t k = 0; k < g.size(); ++k)
    ks.push_back({std::exp(logw[static_cast<Eigen::Index>(k)] - lse), std::move(conds[k].m), std::move(conds[k].P)});
  return Gmm(std::move(ks));
}

inline RowMatrix sample_posterior(const Gmm& post, std::size_t n, std::uint64_t seed) { return sample_gmm(post, n, seed); }

// ---------------------------------------------------------------------------
// Classification of relevance indicators

enum class RelevanceClass { relevant, irrelevant, inconclusive };

inline std::string to_string(RelevanceClass c) {
  switch (c) {
    case RelevanceClass::relevant: return "relevant";
    case RelevanceClass::irrelevant: return "irrelevant";
    case RelevanceClass::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ClassificationThresholds {
  double irrelevant_below = 0.1;
  double relevant_above = 0.9;
};

inline RelevanceClass classify(double gamma_rms, const ClassificationThresholds& th = {}) {
  if (gamma_rms < th.irrelevant_below) return RelevanceClass::irrelevant;
  if (gamma_rms > th.relevant_above) return RelevanceClass::relevant;
  return RelevanceClass::inconclusive;
}

// ---------------------------------------------------------------------------
// Trust-region Newton optimization of the objective over log alpha

struct TrustRegionConfig {
  double gradient_tolerance = 1e-6;
  double min_radius = 1e-10;
  int max_iterations = 100;
  double initial_radius = 1.0;
  double max_radius = 10.0;
  double accept_ratio = 1e-4;
};

struct OptimizationRun {
  Vector start;
  Vector log_alpha;
  double objective = kNegInf;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // starting value, then one entry per accepted step
  std::vector<Vector> log_alpha_trace;
};

namespace detail {

inline Vector dogleg_step(const Vector& grad_min, const Matrix& b, double radius) {
  const double gnorm = grad_min.norm();
  if (gnorm == 0.0) return Vector::Zero(grad_min.size());
  const double curv = grad_min.dot(b * grad_min);
  const Vector to_boundary = -(radius / gnorm) * grad_min;
  Eigen::LLT<Matrix> llt(b);
  const bool pd = llt.info() == Eigen::Success;
  if (pd) {
    const Vector newton = -llt.solve(grad_min);
    if (newton.norm() <= radius) return newton;
  }
  if (curv <= 0.0) return to_boundary;
  const Vector cauchy = -(gnorm * gnorm / curv) * grad_min;
  if (cauchy.norm() >= radius) return to_boundary;
  if (!pd) return cauchy;
  const Vector newton = -llt.solve(grad_min);
  const Vector diff = newton - cauchy;
  // ||cauchy + tau diff|| = radius, tau in [0, 1]
  const double qa = diff.squaredNorm();
  const double qb = 2.0 * cauchy.dot(diff);
  const double qc = cauchy.squaredNorm() - radius * radius;
  const double tau = (-qb + std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc))) / (2.0 * qa);
  return cauchy + std::clamp(tau, 0.0, 1.0) * diff;
}

}  // namespace detail

/// Maximizes the objective from one start, keeping log alpha inside its box.
/// Coordinates pinned at a bound with the gradient pointing outward are held
/// fixed for the step.
inline OptimizationRun maximize_from(const EvidenceModel& model, const Hyperprior& hp, const AlphaVector& start,
                                     const TrustRegionConfig& cfg) {
  const Eigen::Index d = start.size();
  OptimizationRun run;
  run.start = start.log_alpha;
  Vector t = start.log_alpha.cwiseMax(start.lower).cwiseMin(start.upper);
  auto cur = model.objective_derivatives(t, hp);
  run.objective_trace.push_back(cur.value);
  run.log_alpha_trace.push_back(t);
  double radius = cfg.initial_radius;

  auto free_mask = [&](const Vector& x, const Vector& g) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < d; ++i) {
      const bool at_lo = x[i] <= start.lower[i] && g[i] < 0.0;
      const bool at_hi = x[i] >= start.upper[i] && g[i] > 0.0;
      if (!at_lo && !at_hi) idx.push_back(i);
    }
    return idx;
  };

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const auto free = free_mask(t, cur.gradient);
    double pg = 0.0;
    for (auto i : free) pg = std::max(pg, std::abs(cur.gradient[i]));
    run.projected_gradient_norm = pg;
    if (pg < cfg.gradient_tolerance) {
      run.converged = true;
      break;
    }
    if (radius < cfg.min_radius) break;
    run.iterations = iter + 1;

    const auto nf = static_cast<Eigen::Index>(free.size());
    Vector gf(nf);
    Matrix bf(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf[a] = -cur.gradient[free[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < nf; ++b) bf(a, b) = -cur.hessian(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    const Vector pf = detail::dogleg_step(gf, bf, radius);
    Vector trial = t;
    for (Eigen::Index a = 0; a < nf; ++a) trial[free[static_cast<std::size_t>(a)]] += pf[a];
    trial = trial.cwiseMax(start.lower).cwiseMin(start.upper);
    const Vector s = trial - t;
    const double predicted = cur.gradient.dot(s) + 0.5 * s.dot(cur.hessian * s);
    if (!(predicted > 0.0) || s.norm() == 0.0) {
      radius *= 0.25;
      continue;
    }
    const auto next = model.objective_derivatives(trial, hp);
    const double actual = next.value - cur.value;
    const double rho = actual / predicted;
    if (rho < 0.25) radius *= 0.25;
    else if (rho > 0.75) radius = std::min(2.0 * radius, cfg.max_radius);
    if (rho > cfg.accept_ratio && actual >= 0.0 && std::isfinite(next.value)) {
      t = trial;
      cur = next;
      run.objective_trace.push_back(cur.value);
      run.log_alpha_trace.push_back(t);
    }
  }
  if (!run.converged) {
    const auto free = free_mask(t, cur.gradient);
    double pg = 0.0;
    for (auto i : free) pg = std::max(pg, std::abs(cur.gradient[i]));
    run.projected_gradient_norm = pg;
    run.converged = pg < cfg.gradient_tolerance;
  }
  run.log_alpha = t;
  run.objective = cur.value;
  return run;
}

struct NsblOptions {
  TrustRegionConfig trust_region{};
  ClassificationThresholds thresholds{};
  int n_starts = 16;
  double start_lo = -6.0;
  double start_hi = 6.0;
  double log_alpha_lo = -12.0;
  double log_alpha_hi = 12.0;
  double distinct_gap = 1e-3;
  std::uint64_t seed = 0;
};

struct NsblResult {
  AlphaVector log_alpha_map;
  Relevance relevance;
  std::vector<RelevanceClass> classification;
  Gmm posterior;
  double objective = kNegInf;
  double log_evidence = kNegInf;
  bool converged = false;
  std::vector<double> objective_trace;
  std::vector<Vector> log_alpha_trace;
  std::vector<Vector> gamma_trace;  // gamma_rms at each accepted iterate
  std::vector<OptimizationRun> runs;
  std::vector<std::size_t> distinct_optima;  // indices into runs, best first
};

/// Random starts, uniform on [start_lo, start_hi]^N_alpha.
inline std::vector<AlphaVector> default_starts(Eigen::Index n_alpha, const NsblOptions& opt) {
  std::vector<AlphaVector> starts;
  Rng rng = make_stream(opt.seed, "nsbl-starts");
  std::uniform_real_distribution<double> u(opt.start_lo, opt.start_hi);
  for (int s = 0; s < opt.n_starts; ++s) {
    Vector v(n_alpha);
    for (Eigen::Index i = 0; i < n_alpha; ++i) v[i] = u(rng);
    starts.emplace_back(v, opt.log_alpha_lo, opt.log_alpha_hi);
  }
  return starts;
}

/// Multi-start trust-region maximization; the best optimum defines the result.
inline NsblResult optimize_alpha(const Gmm& g, const Hyperprior& hp, const PriorSpec& partition,
                                 const std::vector<AlphaVector>& starts, const NsblOptions& opt = {}) {
  require(!starts.empty(), "at least one start point is required");
  partition.validate();
  const auto d = static_cast<Eigen::Index>(partition.num_ard());
  hp.validate(d);
  EvidenceModel model(g, partition);
  NsblResult res;
  for (const auto& s : starts) {
    require(s.size() == d, "start length does not match ard_set");
    res.runs.push_back(maximize_from(model, hp, s, opt.trust_region));
  }
  std::vector<std::size_t> order(res.runs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return res.runs[a].objective > res.runs[b].objective; });
  for (auto i : order) {
    bool distinct = true;
    for (auto j : res.distinct_optima)
      if (std::abs(res.runs[i].objective - res.runs[j].objective) <= opt.distinct_gap) distinct = false;
    if (distinct) res.distinct_optima.push_back(i);
  }
  const auto& best = res.runs[order.front()];
  res.log_alpha_map = AlphaVector(best.log_alpha, opt.log_alpha_lo, opt.log_alpha_hi);
  res.log_alpha_map.lower = starts[order.front()].lower;
  res.log_alpha_map.upper = starts[order.front()].upper;
  res.objective = best.objective;
  res.log_evidence = model.log_evidence(best.log_alpha);
  res.converged = best.converged;
  res.objective_trace = best.objective_trace;
  res.log_alpha_trace = best.log_alpha_trace;
  for (const auto& la : best.log_alpha_trace)
    res.gamma_trace.push_back(relevance_indicators(g, AlphaVector(la, -1e300, 1e300), partition).rms);
  res.relevance = relevance_indicators(g, res.log_alpha_map, partition);
  for (Eigen::Index i = 0; i < d; ++i) res.classification.push_back(classify(res.relevance.rms[i], opt.thresholds));
  res.posterior = posterior_gmm(g, res.log_alpha_map, partition);
  return res;
}

inline NsblResult optimize_alpha(const Gmm& g, const Hyperprior& hp, const PriorSpec& partition,
                                 const NsblOptions& opt = {}) {
  return optimize_alpha(g, hp, partition, default_starts(static_cast<Eigen::Index>(partition.num_ard()), opt), opt);
}

// ---------------------------------------------------------------------------
// Reporting

/// {log_alpha_map, gamma_rms, classification} keyed by parameter name, plus
/// traces and the list of distinct optima.
inline json to_json(const NsblResult& r, const PriorSpec& partition, const std::vector<std::string>& names,
                    const std::string& posterior_ref = {}) {
  json la = json::object(), gr = json::object(), cl = json::object(), gk = json::object();
  for (std::size_t i = 0; i < partition.ard_set.size(); ++i) {
    const auto& name = names.at(partition.ard_set[i]);
    const auto ii = static_cast<Eigen::Index>(i);
    la[name] = r.log_alpha_map.log_alpha[ii];
    gr[name] = r.relevance.rms[ii];
    cl[name] = to_string(r.classification[i]);
    gk[name] = to_json(Vector(r.relevance.per_kernel.col(ii)));
  }
  json traces = json::array();
  for (std::size_t it = 0; it < r.objective_trace.size(); ++it)
    traces.push_back({{"iteration", it},
                      {"objective", r.objective_trace[it]},
                      {"log_alpha", to_json(r.log_alpha_trace[it])},
                      {"gamma_rms", to_json(r.gamma_trace[it])}});
  json optima = json::array();
  for (auto i : r.distinct_optima)
    optima.push_back({{"objective", r.runs[i].objective},
                      {"log_alpha", to_json(r.runs[i].log_alpha)},
                      {"converged", r.runs[i].converged}});
  std::vector<std::string> ard_names;
  for (auto i : partition.ard_set) ard_names.push_back(names.at(i));
  json out;
  out["ard_parameters"] = ard_names;
  out["log_alpha_map"] = la;
  out["gamma_rms"] = gr;
  out["gamma_per_kernel"] = gk;
  out["classification"] = cl;
  out["objective"] = r.objective;
  out["log_evidence"] = r.log_evidence;
  out["converged"] = r.converged;
  out["objective_trace"] = r.objective_trace;
  out["iterations"] = traces;
  out["distinct_optima"] = optima;
  out["posterior_gmm"] = posterior_ref.empty() ? json(nullptr) : json(posterior_ref);
  return out;
}

}  // namespace sbnn
