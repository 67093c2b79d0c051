#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sbnn/nsbl.hpp"

using namespace sbnn;

namespace {

Gmm scalar_gmm(double mu, double var) { return Gmm({{1.0, Vector::Constant(1, mu), Matrix::Constant(1, 1, var)}}); }

AlphaVector la1(double t) { return AlphaVector::constant(1, t); }

const PriorSpec kOneArd = PriorSpec::all_ard(1);

}  // namespace

TEST(KernelConditional, UnitPrecisionCentered) {
  const auto c = kernel_conditional(scalar_gmm(0, 1).kernel(0), la1(0.0), kOneArd);
  EXPECT_NEAR(c.P(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(c.m[0], 0.0, 1e-15);
  EXPECT_NEAR(std::exp(c.log_z), 1.0 / std::sqrt(4 * M_PI), 1e-15);
  EXPECT_NEAR(std::exp(c.log_z), 0.28209, 1e-5);
}

TEST(KernelConditional, ConjugateUpdate) {
  const auto c = kernel_conditional(scalar_gmm(3, 1).kernel(0), la1(0.0), kOneArd);
  EXPECT_NEAR(c.m[0], 1.5, 1e-14);
  EXPECT_NEAR(c.P(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(c.log_z, log_normal_pdf(0.0, 3.0, 2.0), 1e-14);
}

TEST(KernelConditional, VanishingPrecisionLeavesKernel) {
  std::mt19937_64 rng(2);
  const Matrix s = oracle::random_spd(3, rng);
  const GaussianKernel k{1.0, (Vector(3) << 1, -2, 0.5).finished(), s};
  const auto c = kernel_conditional(k, AlphaVector::constant(3, -20.0, -30, 30), PriorSpec::all_ard(3));
  EXPECT_LT((c.P - s).cwiseAbs().maxCoeff() / s.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((c.m - k.mu).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(KernelConditional, MatchesDirectProductFormulas) {
  // P = (Sigma^-1 + A~)^-1, m = P Sigma^-1 mu with A~ zero off the ARD set.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_instance(rng, 4, 1);
    const auto& k = in.gmm.kernel(0);
    Matrix at = Matrix::Zero(k.mu.size(), k.mu.size());
    for (std::size_t i = 0; i < in.partition.ard_set.size(); ++i) {
      const auto s = static_cast<Eigen::Index>(in.partition.ard_set[i]);
      at(s, s) = std::exp(in.alpha.log_alpha[static_cast<Eigen::Index>(i)]);
    }
    const Matrix si = k.sigma.inverse();
    const Matrix p = (si + at).inverse();
    const Vector m = p * si * k.mu;
    const auto c = kernel_conditional(k, in.alpha, in.partition);
    EXPECT_LT((c.P - p).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, p.cwiseAbs().maxCoeff()));
    EXPECT_LT((c.m - m).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff()));
    EXPECT_EQ(Eigen::LLT<Matrix>(c.P).info(), Eigen::Success);
  }
}

TEST(KernelConditional, RejectsMismatchedAlpha) {
  EXPECT_THROW(kernel_conditional(scalar_gmm(0, 1).kernel(0), AlphaVector::constant(2, 0.0), kOneArd), InvalidArgument);
}

TEST(LogEvidence, SingleKernelEqualsItsContribution) {
  const Gmm g = scalar_gmm(1.2, 0.7);
  EXPECT_EQ(log_evidence(g, la1(0.4), kOneArd), kernel_conditional(g.kernel(0), la1(0.4), kOneArd).log_z);
  EXPECT_NEAR(log_evidence(scalar_gmm(0, 1), la1(0.0), kOneArd), -1.26551, 1e-5);
}

TEST(LogEvidence, MatchesQuadratureOnTwoDimensionalMixtures) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GaussianKernel> ks;
    std::uniform_real_distribution<double> u(-2, 2), ul(-6, 6);
    for (int k = 0; k < 2; ++k) ks.push_back({0.5, (Vector(2) << u(rng), u(rng)).finished(), oracle::random_spd(2, rng)});
    const Gmm g(ks);
    const PriorSpec p = PriorSpec::all_ard(2);
    const AlphaVector a((Vector(2) << ul(rng), ul(rng)).finished());
    const double q = oracle::evidence_quadrature(g, p, a);
    EXPECT_LT(std::abs(std::exp(log_evidence(g, a, p)) - q) / q, 1e-6);
  }
}

TEST(LogEvidence, MatchesQuadratureOnRandomSmallInstances) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 15; ++trial) {
    const auto in = oracle::random_instance(rng);
    const double q = oracle::evidence_quadrature(in.gmm, in.partition, in.alpha);
    EXPECT_LT(std::abs(std::exp(log_evidence(in.gmm, in.alpha, in.partition)) - q) / q, 1e-6) << "instance " << trial;
  }
}

TEST(LogEvidence, StableAtPrecisionBounds) {
  const Gmm g = scalar_gmm(0.3, 2.0);
  for (double t : {-12.0, 12.0, 30.0}) EXPECT_TRUE(std::isfinite(log_evidence(g, AlphaVector::constant(1, t, -40, 40), kOneArd)));
  // Large precision: N(0 | mu, Sigma + 1/alpha) -> N(0 | mu, Sigma).
  EXPECT_NEAR(log_evidence(g, AlphaVector::constant(1, 30, -40, 40), kOneArd), log_normal_pdf(0, 0.3, 2.0), 1e-10);
}

TEST(Objective, JeffreysEqualsLogEvidence) {
  const Gmm g = scalar_gmm(2, 1);
  for (double t : {-3.0, 0.0, 4.0})
    EXPECT_EQ(objective(g, la1(t), Hyperprior::jeffreys(1), kOneArd), log_evidence(g, la1(t), kOneArd));
}

TEST(Objective, GammaUnitAtOrigin) {
  const Gmm g = scalar_gmm(2, 1);
  EXPECT_NEAR(objective(g, la1(0.0), Hyperprior::gamma(1, 1, 1), kOneArd), log_evidence(g, la1(0.0), kOneArd) - 1.0, 1e-14);
}

TEST(Objective, NearlyFlatGammaTerm) {
  // shape e^-10, rate 1 + e^-10: the term is about -alpha, flat for small alpha.
  const double e10 = std::exp(-10.0);
  const auto hp = Hyperprior::gamma(1, e10, 1.0 + e10);
  for (double t = -12; t <= 3; t += 0.25) {
    const Vector v = Vector::Constant(1, t);
    EXPECT_NEAR(hp.log_density(v), -std::exp(t), 1e-3 * (1 + std::exp(t)));
    if (t <= -5) {
      EXPECT_LT(std::abs(hp.log_density(v)), 0.01);
    }
  }
}

TEST(Hyperprior, ModeFlagMatchesParameters) {
  EXPECT_NO_THROW(Hyperprior::jeffreys(3).validate(3));
  Hyperprior bad = Hyperprior::gamma(2, 0.0, 0.0);
  EXPECT_THROW(bad.validate(2), InvalidArgument);
  bad = Hyperprior::jeffreys(2);
  bad.shape[0] = 1.0;
  EXPECT_THROW(bad.validate(2), InvalidArgument);
  EXPECT_THROW(Hyperprior::gamma(2, -1, 1).validate(2), InvalidArgument);
}

TEST(AlphaVector, BoundsAndFiniteness) {
  AlphaVector a = AlphaVector::constant(2, 0.0);
  EXPECT_NO_THROW(a.validate());
  a.log_alpha[1] = 13.0;
  EXPECT_THROW(a.validate(), InvalidArgument);
  a.clamp();
  EXPECT_EQ(a.log_alpha[1], 12.0);
  a.log_alpha[0] = std::nan("");
  EXPECT_THROW(a.validate(), InvalidArgument);
}

TEST(Derivatives, MatchCentralDifferencesOnRandomInstances) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto in = oracle::random_instance(rng, 4, 3);
    const auto hp = trial % 2 ? Hyperprior::jeffreys(in.alpha.size()) : Hyperprior::gamma(in.alpha.size(), 0.7, 0.2);
    auto f = [&](const Vector& t) { return objective(in.gmm, AlphaVector(t, -50, 50), hp, in.partition); };
    auto grad = [&](const Vector& t) { return objective_grad(in.gmm, AlphaVector(t, -50, 50), hp, in.partition); };
    const Vector g = objective_grad(in.gmm, in.alpha, hp, in.partition);
    const Matrix h = objective_hess(in.gmm, in.alpha, hp, in.partition);
    EXPECT_LT(oracle::max_rel_err(g, oracle::fd_gradient(f, in.alpha.log_alpha, 1e-5)), 1e-5) << trial;
    EXPECT_LT(oracle::max_rel_err(h, oracle::fd_jacobian(grad, in.alpha.log_alpha, 1e-5)), 1e-5) << trial;
    EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Derivatives, ScalarClosedForm) {
  // d/dt log N(0 | mu, Sigma + e^-t) = e^-t / (2v) * (1 - mu^2 / v), v = Sigma + e^-t.
  const double mu = 1.7, sig = 0.6;
  const Gmm g = scalar_gmm(mu, sig);
  for (double t : {-4.0, -1.0, 0.0, 2.5}) {
    const double v = sig + std::exp(-t);
    const double want = std::exp(-t) / (2 * v) * (1 - mu * mu / v);
    EXPECT_NEAR(objective_grad(g, la1(t), Hyperprior::jeffreys(1), kOneArd)[0], want, 1e-13);
  }
}

TEST(OptimizeAlpha, CenteredKernelPinsAtUpperBound) {
  // N(0 | 0, 1 + 1/alpha) grows with alpha, so the optimum is the largest precision.
  const auto r = optimize_alpha(scalar_gmm(0, 1), Hyperprior::jeffreys(1), kOneArd);
  EXPECT_EQ(r.log_alpha_map.log_alpha[0], 12.0);
  // Grid-scan oracle: evidence increases monotonically with alpha.
  double prev = kNegInf;
  for (double t = -12; t <= 12; t += 0.5) {
    const double v = log_evidence(scalar_gmm(0, 1), la1(t), kOneArd);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(OptimizeAlpha, SblClosedFormInteriorMaximum) {
  const Gmm g = scalar_gmm(5, 1);
  const auto r = optimize_alpha(g, Hyperprior::jeffreys(1), kOneArd);
  EXPECT_NEAR(r.log_alpha_map.log_alpha[0], -std::log(24.0), 1e-4);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(std::abs(objective_grad(g, r.log_alpha_map, Hyperprior::jeffreys(1), kOneArd)[0]), 1e-6);
  double best_t = 0, best = kNegInf;
  for (double t = -12; t <= 12; t += 1e-3) {
    const double v = log_evidence(g, la1(t), kOneArd);
    if (v > best) best = v, best_t = t;
  }
  EXPECT_NEAR(r.log_alpha_map.log_alpha[0], best_t, 1e-3);
}

TEST(OptimizeAlpha, ObjectiveTraceIsMonotone) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = oracle::random_instance(rng, 4, 3);
    const auto r = optimize_alpha(in.gmm, Hyperprior::jeffreys(in.alpha.size()), in.partition);
    for (const auto& run : r.runs)
      for (std::size_t i = 1; i < run.objective_trace.size(); ++i)
        EXPECT_GE(run.objective_trace[i], run.objective_trace[i - 1]);
    for (auto i : r.distinct_optima) EXPECT_LE(r.runs[i].objective, r.objective);
    EXPECT_TRUE((r.relevance.rms.array() >= 0).all() && (r.relevance.rms.array() <= 1).all());
    EXPECT_TRUE((r.log_alpha_map.log_alpha.array() >= -12).all() && (r.log_alpha_map.log_alpha.array() <= 12).all());
  }
}

TEST(OptimizeAlpha, ArgmaxIgnoresAdditiveConstants) {
  // The Gamma term drops its normalizer; the grid maximum of the normalized
  // objective lands on the same log alpha.
  const Gmm g = scalar_gmm(3, 0.5);
  const auto hp = Hyperprior::gamma(1, 2.0, 0.5);
  const auto r = optimize_alpha(g, hp, kOneArd);
  double best_t = 0, best = kNegInf;
  for (double t = -12; t <= 12; t += 1e-3) {
    const double v = log_evidence(g, la1(t), kOneArd) + hp.normalized_log_density(0, t);
    if (v > best) best = v, best_t = t;
  }
  EXPECT_NEAR(r.log_alpha_map.log_alpha[0], best_t, 1e-3);
}

TEST(OptimizeAlpha, ReportsDistinctOptima) {
  // Two separated kernels with different spreads give a bimodal objective.
  const Gmm g({{0.5, Vector::Constant(1, 6.0), Matrix::Constant(1, 1, 0.01)},
               {0.5, Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 0.01)}});
  const auto r = optimize_alpha(g, Hyperprior::jeffreys(1), kOneArd);
  EXPECT_GE(r.distinct_optima.size(), 1u);
  EXPECT_EQ(r.objective, r.runs[r.distinct_optima.front()].objective);
  EXPECT_THROW(optimize_alpha(g, Hyperprior::jeffreys(1), kOneArd, std::vector<AlphaVector>{}), InvalidArgument);
}

TEST(Relevance, LimitsAndClamping) {
  const Gmm g = scalar_gmm(1, 2);
  EXPECT_NEAR(relevance_indicators(g, AlphaVector::constant(1, -30, -40, 40), kOneArd).rms[0], 1.0, 1e-12);
  EXPECT_LT(relevance_indicators(g, AlphaVector::constant(1, 30, -40, 40), kOneArd).rms[0], 1e-12);
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_instance(rng);
    const auto rel = relevance_indicators(in.gmm, in.alpha, in.partition);
    EXPECT_TRUE((rel.per_kernel.array() >= 0).all() && (rel.per_kernel.array() <= 1).all());
    const Vector rms = (rel.per_kernel.array().square().colwise().mean()).sqrt().transpose();
    EXPECT_LT((rms - rel.rms).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Relevance, InvariantUnderKernelRescaling) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = oracle::random_instance(rng);
    const double c = 3.7;
    std::vector<GaussianKernel> scaled;
    for (auto k : in.gmm.kernels()) {
      k.sigma *= c;
      scaled.push_back(k);
    }
    const AlphaVector a2((in.alpha.log_alpha.array() - std::log(c)).matrix(), -50, 50);
    const auto r1 = relevance_indicators(in.gmm, in.alpha, in.partition);
    const auto r2 = relevance_indicators(Gmm(scaled), a2, in.partition);
    EXPECT_LT((r1.per_kernel - r2.per_kernel).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Classification, Thresholds) {
  EXPECT_EQ(classify(0.061), RelevanceClass::irrelevant);
  EXPECT_EQ(classify(0.747), RelevanceClass::inconclusive);
  EXPECT_EQ(classify(0.882), RelevanceClass::inconclusive);
  EXPECT_EQ(classify(0.96), RelevanceClass::relevant);
}

TEST(PosteriorGmm, VanishingPrecisionReturnsInput) {
  std::mt19937_64 rng(18);
  const auto in = oracle::random_instance(rng, 3, 3);
  const auto post = posterior_gmm(in.gmm, AlphaVector::constant(in.alpha.size(), -25, -30, 30), in.partition);
  for (std::size_t k = 0; k < in.gmm.size(); ++k) {
    EXPECT_NEAR(post.kernel(k).a, in.gmm.kernel(k).a, 1e-6 * in.gmm.kernel(k).a + 1e-12);
    EXPECT_LT((post.kernel(k).mu - in.gmm.kernel(k).mu).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((post.kernel(k).sigma - in.gmm.kernel(k).sigma).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(PosteriorGmm, ConjugateUpdate) {
  const auto post = posterior_gmm(scalar_gmm(3, 1), la1(0.0), kOneArd);
  ASSERT_EQ(post.size(), 1u);
  EXPECT_NEAR(post.kernel(0).mu[0], 1.5, 1e-14);
  EXPECT_NEAR(post.kernel(0).sigma(0, 0), 0.5, 1e-15);
}

TEST(PosteriorGmm, NormalizedDensity) {
  const Gmm g({{0.4, Vector::Constant(1, -1.0), Matrix::Constant(1, 1, 0.5)},
               {0.6, Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 1.5)}});
  const auto post = posterior_gmm(g, la1(0.5), kOneArd);
  EXPECT_NEAR(post.weights().sum(), 1.0, 1e-12);
  const double total = oracle::integrate_1d(
      [&](double x) { return std::exp(gmm_logpdf(post, Vector::Constant(1, x))); }, -20, 20, {-1, 0, 2});
  EXPECT_NEAR(total, 1.0, 1e-6);
  for (std::size_t k = 0; k < post.size(); ++k) EXPECT_EQ(post.cholesky(k).info(), Eigen::Success);
}

TEST(SamplePosterior, MomentsDegenerateWeightsAndDeterminism) {
  const Gmm g({{1.0, Vector::Zero(2), Matrix::Identity(2, 2)}});
  const RowMatrix s = sample_posterior(g, 4000, 2);
  EXPECT_LT(Vector(s.colwise().mean()).cwiseAbs().maxCoeff(), 3 / std::sqrt(4000.0));
  EXPECT_EQ(s, sample_posterior(g, 4000, 2));
  const Gmm two({{1.0, Vector::Constant(1, -100), Matrix::Identity(1, 1)}, {0.0, Vector::Constant(1, 100), Matrix::Identity(1, 1)}});
  EXPECT_TRUE((sample_posterior(two, 500, 1).array() < 0).all());
}

TEST(NsblJson, SchemaKeyedByName) {
  const auto r = optimize_alpha(scalar_gmm(5, 1), Hyperprior::jeffreys(1), kOneArd);
  const auto j = to_json(r, kOneArd, {"W2_11"}, "posterior_gmm.json");
  for (const char* key : {"log_alpha_map", "gamma_rms", "classification", "objective_trace", "posterior_gmm"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_NEAR(j["log_alpha_map"]["W2_11"].get<double>(), -std::log(24.0), 1e-4);
  EXPECT_EQ(j["classification"]["W2_11"], "relevant");
}
