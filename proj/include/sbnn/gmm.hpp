#pragma once

// Gaussian mixtures: density evaluation, ancestral sampling, JSON
// persistence, and EM fitting with k-means++ starts and BIC selection of K.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "sbnn/common.hpp"
#include "sbnn/io.hpp"

namespace sbnn {

struct GaussianKernel {
  double a = 1.0;
  Vector mu;
  Matrix sigma;
};

/// Immutable mixture. Weights are renormalized on construction and each
/// covariance must admit a Cholesky factor.
class Gmm {
 public:
  Gmm() = default;

  explicit Gmm(std::vector<GaussianKernel> kernels) : kernels_(std::move(kernels)) {
    require(!kernels_.empty(), "a mixture needs at least one kernel");
    dim_ = kernels_.front().mu.size();
    double total = 0.0;
    for (auto& k : kernels_) {
      require(k.mu.size() == dim_ && k.sigma.rows() == dim_ && k.sigma.cols() == dim_,
              "all mixture kernels must share one dimension");
      require(k.a >= 0.0 && std::isfinite(k.a), "mixture coefficients must be non-negative");
      symmetrize(k.sigma);
      total += k.a;
    }
    require(total > 0.0, "mixture coefficients sum to zero");
    for (auto& k : kernels_) {
      k.a /= total;
      Eigen::LLT<Matrix> llt(k.sigma);
      if (llt.info() != Eigen::Success) throw NumericalError("mixture covariance is not positive definite");
      chol_.push_back(std::move(llt));
    }
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return kernels_.size(); }
  const GaussianKernel& kernel(std::size_t k) const { return kernels_[k]; }
  const std::vector<GaussianKernel>& kernels() const { return kernels_; }
  const Eigen::LLT<Matrix>& cholesky(std::size_t k) const { return chol_[k]; }

  Vector weights() const {
    Vector w(static_cast<Eigen::Index>(kernels_.size()));
    for (std::size_t k = 0; k < kernels_.size(); ++k) w[static_cast<Eigen::Index>(k)] = kernels_[k].a;
    return w;
  }

 private:
  std::vector<GaussianKernel> kernels_;
  std::vector<Eigen::LLT<Matrix>> chol_;
  Eigen::Index dim_ = 0;
};

/// log sum_k a_k N(phi | mu_k, Sigma_k)
inline double gmm_logpdf(const Gmm& g, const Vector& phi) {
  require(phi.size() == g.dim(), "point dimension does not match mixture");
  std::vector<double> terms;
  terms.reserve(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double a = g.kernel(k).a;
    if (a <= 0.0) continue;
    terms.push_back(std::log(a) + log_mvn_pdf(phi, g.kernel(k).mu, g.cholesky(k)));
  }
  return log_sum_exp(terms);
}

/// Ancestral sampling: kernel index ~ Categorical(a), then a Gaussian draw.
inline RowMatrix sample_gmm(const Gmm& g, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample count must be positive");
  RowMatrix out(static_cast<Eigen::Index>(n), g.dim());
  const Vector w = g.weights();
  Rng rng = make_stream(seed, "gmm-sample");
  std::discrete_distribution<std::size_t> cat(w.data(), w.data() + w.size());
  std::vector<Matrix> lowers;
  for (std::size_t k = 0; k < g.size(); ++k) lowers.emplace_back(g.cholesky(k).matrixL());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = cat(rng);
    out.row(static_cast<Eigen::Index>(i)) = (g.kernel(k).mu + lowers[k] * standard_normal(rng, g.dim())).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON: {dim, kernels: [{a, mu, sigma (row-major)}]}

inline json to_json(const Gmm& g) {
  json ks = json::array();
  for (const auto& k : g.kernels()) ks.push_back({{"a", k.a}, {"mu", to_json(k.mu)}, {"sigma", to_json(k.sigma)}});
  return {{"dim", g.dim()}, {"kernels", ks}};
}

inline Gmm gmm_from_json(const json& j) {
  try {
    const auto dim = j.at("dim").get<Eigen::Index>();
    std::vector<GaussianKernel> ks;
    for (const auto& jk : j.at("kernels")) {
      GaussianKernel k;
      k.a = jk.at("a").get<double>();
      k.mu = vector_from_json(jk.at("mu"));
      k.sigma = matrix_from_json(jk.at("sigma"), dim, dim);
      require(k.mu.size() == dim, "kernel mean length does not match dim");
      ks.push_back(std::move(k));
    }
    return Gmm(std::move(ks));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed mixture JSON: ") + e.what());
  }
}

inline void save_gmm(const Gmm& g, const std::filesystem::path& path) { write_json(path, to_json(g)); }
inline Gmm load_gmm(const std::filesystem::path& path) { return gmm_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// EM fitting

struct GmmFitOptions {
  std::vector<int> k_candidates{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  int n_restarts = 3;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double rel_tolerance = 1e-8;
  double covariance_floor = 1e-8;  // eigenvalue clamp relative to trace/dim
  int kmeans_iterations = 10;
  unsigned threads = 1;
};

struct GmmCandidate {
  int k = 0;
  std::optional<double> bic;  // empty when every restart degenerated
  double log_likelihood = kNegInf;
  int iterations = 0;
};

struct GmmFitReport {
  Gmm gmm;
  int selected_k = 0;
  double bic = 0.0;
  std::vector<GmmCandidate> candidates;
};

namespace detail {

inline std::size_t gmm_free_parameters(int k, Eigen::Index d) {
  const auto kk = static_cast<std::size_t>(k);
  const auto dd = static_cast<std::size_t>(d);
  return (kk - 1) + kk * dd + kk * dd * (dd + 1) / 2;
}

inline void clamp_covariance(Matrix& cov, double floor_rel) {
  symmetrize(cov);
  const double dim = static_cast<double>(cov.rows());
  const double floor = std::max(floor_rel * cov.trace() / dim, 1e-300);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.eigenvalues().minCoeff() >= floor) return;
  const Vector ev = es.eigenvalues().cwiseMax(floor);
  cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(cov);
}

// Row-wise log N(x | mu, Sigma); returns false when Sigma is not positive definite.
inline bool log_density_rows(const RowMatrix& x, const Vector& mu, const Matrix& sigma, Eigen::Ref<Vector> out) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) return false;
  const Matrix diff_t = (x.rowwise() - mu.transpose()).transpose();
  const Matrix z = llt.matrixL().solve(diff_t);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double c = -0.5 * (static_cast<double>(x.cols()) * kLog2Pi + logdet);
  out = (c - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
  return true;
}

inline std::vector<Vector> kmeans_pp_centers(const RowMatrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Vector> centers;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.emplace_back(x.row(first(rng)).transpose());
  Vector d2 = (x.rowwise() - centers.back().transpose()).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> cat(d2.data(), d2.data() + n);
      pick = cat(rng);
    } else {
      pick = first(rng);
    }
    centers.emplace_back(x.row(pick).transpose());
    d2 = d2.cwiseMin((x.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
  }
  return centers;
}

struct EmRun {
  std::vector<GaussianKernel> kernels;
  double log_likelihood = kNegInf;
  int iterations = 0;
  bool ok = false;
};

inline EmRun run_em(const RowMatrix& x, int k, const GmmFitOptions& opt, Rng rng) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  EmRun run;

  // k-means++ seeding refined by a few Lloyd iterations.
  auto centers = kmeans_pp_centers(x, k, rng);
  std::vector<Eigen::Index> label(static_cast<std::size_t>(n), 0);
  for (int it = 0; it <= opt.kmeans_iterations; ++it) {
    Matrix dist(n, k);
    for (int c = 0; c < k; ++c) dist.col(c) = (x.rowwise() - centers[static_cast<std::size_t>(c)].transpose()).rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) dist.row(i).minCoeff(&label[static_cast<std::size_t>(i)]);
    if (it == opt.kmeans_iterations) break;
    std::vector<Vector> sums(static_cast<std::size_t>(k), Vector::Zero(d));
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] += x.row(i).transpose();
      counts[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centers[static_cast<std::size_t>(c)] = sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
  }

  Matrix resp = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, label[static_cast<std::size_t>(i)]) = 1.0;

  const Matrix global_cov = [&] {
    const RowMatrix centered = x.rowwise() - x.colwise().mean();
    return Matrix(centered.transpose() * centered / static_cast<double>(n));
  }();

  std::vector<GaussianKernel> ks(static_cast<std::size_t>(k));
  Matrix logp(n, k);
  double prev = kNegInf;
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    // M-step
    for (int c = 0; c < k; ++c) {
      const auto r = resp.col(c);
      const double nk = r.sum();
      if (nk < 1e-10 * static_cast<double>(n) || nk < 1e-300) return run;  // collapsed kernel
      auto& kern = ks[static_cast<std::size_t>(c)];
      kern.a = nk / static_cast<double>(n);
      kern.mu = x.transpose() * r / nk;
      const RowMatrix centered = x.rowwise() - kern.mu.transpose();
      const RowMatrix weighted = centered.array().colwise() * r.array();
      kern.sigma = weighted.transpose() * centered / nk;
      if (!kern.sigma.allFinite()) return run;
      // A single-point cluster from seeding has zero scatter; fall back to the global spread.
      if (iter == 1 && !(kern.sigma.trace() > 0.0)) kern.sigma = global_cov;
      clamp_covariance(kern.sigma, opt.covariance_floor);
    }
    // E-step
    for (int c = 0; c < k; ++c) {
      const auto& kern = ks[static_cast<std::size_t>(c)];
      if (!log_density_rows(x, kern.mu, kern.sigma, logp.col(c))) return run;
      logp.col(c).array() += std::log(kern.a);
    }
    const Vector row_max = logp.rowwise().maxCoeff();
    const Vector lse = row_max.array() + (logp.colwise() - row_max).array().exp().rowwise().sum().log();
    const double ll = lse.sum();
    if (!std::isfinite(ll)) return run;
    resp = (logp.colwise() - lse).array().exp();
    run.iterations = iter;
    run.log_likelihood = ll;
    if (std::isfinite(prev) && std::abs(ll - prev) <= opt.rel_tolerance * std::abs(ll)) break;
    prev = ll;
  }
  run.kernels = std::move(ks);
  run.ok = true;
  return run;
}

}  // namespace detail

/// Fits a mixture to equally weighted samples (rows) for each candidate K,
/// keeping the best of `n_restarts` EM runs, and returns the BIC minimizer.
inline GmmFitReport fit_gmm_report(const RowMatrix& samples, const GmmFitOptions& opt) {
  require(!opt.k_candidates.empty(), "no kernel-count candidates given");
  require(opt.n_restarts >= 1, "n_restarts must be positive");
  require(samples.rows() >= 10 * samples.cols(), "mixture fitting needs at least 10*dim samples");
  for (int k : opt.k_candidates) require(k >= 1 && k <= samples.rows(), "kernel-count candidate out of range");

  struct Job {
    int k;
    int restart;
  };
  std::vector<Job> jobs;
  for (int k : opt.k_candidates)
    for (int r = 0; r < opt.n_restarts; ++r) jobs.push_back({k, r});
  std::vector<detail::EmRun> runs(jobs.size());
  parallel_for(jobs.size(), opt.threads, [&](std::size_t j) {
    runs[j] = detail::run_em(samples, jobs[j].k, opt,
                             make_stream(opt.seed, "gmm-em", static_cast<std::uint64_t>(jobs[j].k),
                                         static_cast<std::uint64_t>(jobs[j].restart)));
  });

  GmmFitReport rep;
  const double log_n = std::log(static_cast<double>(samples.rows()));
  std::optional<std::size_t> best_run;
  for (int k : opt.k_candidates) {
    GmmCandidate cand;
    cand.k = k;
    std::optional<std::size_t> best_k;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].k != k || !runs[j].ok) continue;
      if (!best_k || runs[j].log_likelihood > runs[*best_k].log_likelihood) best_k = j;
    }
    if (best_k) {
      cand.log_likelihood = runs[*best_k].log_likelihood;
      cand.iterations = runs[*best_k].iterations;
      cand.bic = -2.0 * cand.log_likelihood +
                 static_cast<double>(detail::gmm_free_parameters(k, samples.cols())) * log_n;
      if (!best_run || *cand.bic < rep.bic) {
        best_run = best_k;
        rep.bic = *cand.bic;
        rep.selected_k = k;
      }
    }
    rep.candidates.push_back(cand);
  }
  if (!best_run) throw NumericalError("every mixture fit degenerated");
  rep.gmm = Gmm(runs[*best_run].kernels);
  return rep;
}

inline Gmm fit_gmm(const RowMatrix& samples, const std::vector<int>& k_candidates, int n_restarts,
                   std::uint64_t seed) {
  GmmFitOptions opt;
  opt.k_candidates = k_candidates;
  opt.n_restarts = n_restarts;
  opt.seed = seed;
  return fit_gmm_report(samples, opt).gmm;
}

}  // namespace sbnn
