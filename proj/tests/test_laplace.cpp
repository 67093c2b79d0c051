#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sbnn/boxcar.hpp"
#include "sbnn/laplace.hpp"

using namespace sbnn;

namespace {

struct GaussianTarget {
  Vector mu;
  Matrix prec;

  LogTarget target(bool with_hessian) const {
    LogTarget f;
    f.value = [this](const Vector& x) { return -0.5 * (x - mu).dot(prec * (x - mu)); };
    f.gradient = [this](const Vector& x) { return Vector(-prec * (x - mu)); };
    if (with_hessian) f.hessian = [this](const Vector&) { return Matrix(-prec); };
    return f;
  }
};

GaussianTarget random_gaussian(std::uint64_t seed, Eigen::Index d) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3, 3);
  Vector mu(d);
  for (auto& v : mu) v = u(rng);
  return {mu, oracle::random_spd(d, rng).inverse()};
}

LogTarget network_target(const Dataset& data, const NetworkSpec& spec) {
  LogTarget f;
  f.value = [&data, &spec](const Vector& p) { return log_likelihood(data, spec, p); };
  f.gradient = [&data, &spec](const Vector& p) { return log_likelihood_gradient(data, spec, p); };
  return f;
}

const NetworkSpec k121{{1, 2, 1}, Activation::tanh};

}  // namespace

TEST(FindMap, GaussianModeFromBfgsAndNewton) {
  for (bool newton : {false, true}) {
    const auto g = random_gaussian(1, 4);
    LaplaceConfig cfg;
    cfg.newton = newton;
    const auto r = find_map(g.target(newton), Vector::Zero(4), cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.phi - g.mu).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(FindMap, NewtonSolvesQuadraticInOneStep) {
  const auto g = random_gaussian(2, 5);
  LaplaceConfig cfg;
  cfg.newton = true;
  const auto r = find_map(g.target(true), Vector::Constant(5, 10.0), cfg);
  EXPECT_LE(r.iterations, 1);
  EXPECT_LT((r.phi - g.mu).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FindMap, BoxBoundsHoldActiveCoordinates) {
  // Diagonal precision: the constrained mode is the clipped mean.
  GaussianTarget g{(Vector(3) << 5.0, -4.0, 0.5).finished(), Vector(Vector::Constant(3, 2.0)).asDiagonal()};
  LogTarget f = g.target(false);
  f.lower = Vector::Constant(3, -1.0);
  f.upper = Vector::Constant(3, 1.0);
  const auto r = find_map(f, Vector::Zero(3));
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.phi - (Vector(3) << 1.0, -1.0, 0.5).finished()).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(r.at_bound, (std::vector<bool>{true, true, false}));

  // Correlated 2-D: x0 pinned at 1, x1 at its conditional mode given x0 = 1.
  Matrix prec(2, 2);
  prec << 2.0, 0.6, 0.6, 1.0;
  GaussianTarget c{(Vector(2) << 4.0, 0.0).finished(), prec};
  LogTarget fc = c.target(false);
  fc.upper = (Vector(2) << 1.0, kInf).finished();
  const auto rc = find_map(fc, Vector::Zero(2));
  EXPECT_TRUE(rc.converged);
  EXPECT_NEAR(rc.phi[0], 1.0, 1e-12);
  EXPECT_NEAR(rc.phi[1], -0.6 * (1.0 - 4.0) / 1.0, 1e-6);
}

TEST(FindMap, RejectsBadTargets) {
  LogTarget f;
  f.value = [](const Vector&) { return 0.0; };
  EXPECT_THROW(find_map(f, Vector::Zero(1)), InvalidArgument);
  f.value = [](const Vector&) { return kNegInf; };
  f.gradient = [](const Vector& x) { return Vector(-x); };
  EXPECT_THROW(find_map(f, Vector::Zero(1)), NumericalError);
}

TEST(FiniteDifferenceHessian, MatchesAnalyticHessian) {
  // f = sum x_i^3 / 3 + x0 x1 x2, gradient and Hessian in closed form.
  auto grad = [](const Vector& x) {
    return Vector((Vector(3) << x[0] * x[0] + x[1] * x[2], x[1] * x[1] + x[0] * x[2], x[2] * x[2] + x[0] * x[1]).finished());
  };
  const Vector x = (Vector(3) << 0.7, -1.2, 2.5).finished();
  Matrix want(3, 3);
  want << 2 * x[0], x[2], x[1], x[2], 2 * x[1], x[0], x[1], x[0], 2 * x[2];
  EXPECT_LT((finite_difference_hessian(grad, x) - want).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(LaplaceFit, ExactForGaussianTargets) {
  for (bool analytic : {false, true}) {
    const auto g = random_gaussian(3, 3);
    const auto fit = laplace_fit(g.target(analytic), Vector::Zero(3));
    ASSERT_TRUE(fit.converged);
    const Matrix cov = g.prec.inverse();
    EXPECT_LT((fit.phi_map - g.mu).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT((fit.sigma - cov).cwiseAbs().maxCoeff(), 1e-6 * cov.cwiseAbs().maxCoeff());
    EXPECT_FALSE(fit.regularized);
    EXPECT_EQ(std::count(fit.placeholder.begin(), fit.placeholder.end(), true), 0);
    EXPECT_EQ(fit.sigma, fit.sigma.transpose());
  }
}

TEST(LaplaceFit, FlatDirectionGetsUnitPlaceholder) {
  // Coordinate 1 never enters the target.
  LogTarget f;
  f.value = [](const Vector& x) { return -0.5 * (x[0] - 1) * (x[0] - 1) / 0.25 - 0.5 * x[2] * x[2] / 4.0; };
  f.gradient = [](const Vector& x) { return Vector((Vector(3) << -(x[0] - 1) / 0.25, 0.0, -x[2] / 4.0).finished()); };
  const auto fit = laplace_fit(f, Vector::Constant(3, 0.3));
  ASSERT_TRUE(fit.converged);
  EXPECT_EQ(fit.placeholder, (std::vector<bool>{false, true, false}));
  EXPECT_NEAR(fit.sigma(1, 1), 1.0, 1e-12);
  EXPECT_EQ(fit.sigma(0, 1), 0.0);
  EXPECT_NEAR(fit.sigma(0, 0), 0.25, 1e-6);
  EXPECT_NEAR(fit.sigma(2, 2), 4.0, 1e-5);
}

TEST(LaplaceFit, IndefiniteCurvatureIsRegularized) {
  LogTarget f;
  f.value = [](const Vector& x) { return -x.squaredNorm(); };
  f.gradient = [](const Vector& x) { return Vector(-2 * x); };
  f.hessian = [](const Vector&) { return Matrix((Matrix(2, 2) << -2, 0, 0, 1).finished()); };
  const auto fit = laplace_fit(f, Vector::Ones(2));
  EXPECT_TRUE(fit.regularized);
  EXPECT_EQ(Eigen::LLT<Matrix>(fit.sigma).info(), Eigen::Success);
}

TEST(LaplaceFit, BoxcarModeFive) {
  const Dataset data = generate_boxcar_dataset(BoxcarSettings{.seed = 1});
  const ParamVector start = boxcar_mode(k121, 5);
  const auto fit = laplace_fit(network_target(data, k121), start.values);
  ASSERT_TRUE(fit.converged);
  const ParamVector map(k121, fit.phi_map);
  // Stays in the basin of its starting symmetric copy.
  EXPECT_LT(map["W2_11"], 0.0);
  EXPECT_GT(map["W2_12"], 0.0);
  EXPECT_GT(map["W1_11"] * map["W1_21"], 0.0);
  EXPECT_LT(fit.hessian_asymmetry, 1e-4);
  EXPECT_EQ(Eigen::LLT<Matrix>(fit.sigma).info(), Eigen::Success);
  double sse = 0;
  for (Eigen::Index i = 0; i < data.x.size(); ++i) sse += std::pow(forward(k121, fit.phi_map, data.x[i]) - data.y[i], 2);
  EXPECT_LT(sse / static_cast<double>(data.x.size()), 2 * data.noise_var);
  EXPECT_NO_THROW(laplace_kernel(fit));
}

TEST(LaplaceKernel, RequiresConvergence) {
  LaplaceFit fit;
  fit.phi_map = Vector::Zero(1);
  fit.sigma = Matrix::Identity(1, 1);
  EXPECT_THROW(laplace_kernel(fit), NumericalError);
  fit.converged = true;
  EXPECT_EQ(laplace_kernel(fit).size(), 1u);
}

TEST(LaplaceNsbl, GaussianLikelihoodGivesExactSblEvidence) {
  // With a Gaussian log likelihood the Laplace kernel is exact, so the
  // evidence equals N(0 | mu, S + A^-1) in closed form.
  const auto g = random_gaussian(5, 3);
  const auto fit = laplace_fit(g.target(false), Vector::Zero(3));
  const Gmm kern = laplace_kernel(fit);
  const PriorSpec p = PriorSpec::all_ard(3);
  const AlphaVector a((Vector(3) << -1.0, 0.5, 2.0).finished());
  const Matrix cov = g.prec.inverse() + Matrix(a.alpha().cwiseInverse().asDiagonal());
  const double want = log_mvn_pdf(Vector::Zero(3), g.mu, Eigen::LLT<Matrix>(cov));
  EXPECT_NEAR(log_evidence(kern, a, p), want, 1e-6);
}

TEST(LaplaceNsbl, PosteriorVarianceNeverExceedsLaplaceVariance) {
  const Dataset data = generate_boxcar_dataset(BoxcarSettings{.seed = 2});
  const auto fit = laplace_fit(network_target(data, k121), boxcar_mode(k121, 1).values);
  ASSERT_TRUE(fit.converged);
  const Gmm kern = laplace_kernel(fit);
  const PriorSpec p = PriorSpec::all_ard(7);
  const auto r = optimize_alpha(kern, Hyperprior::jeffreys(7), p);
  const auto& post = r.posterior.kernel(0);
  for (Eigen::Index i = 0; i < 7; ++i) EXPECT_LE(post.sigma(i, i), fit.sigma(i, i) * (1 + 1e-12));
  const auto rows = laplace_table(fit, ParamLayout(k121).names(), &r, &p);
  const auto j = to_json(rows);
  ASSERT_EQ(j.size(), 7u);
  for (const char* key : {"name", "phi_map", "Sigma_ii", "placeholder_variance", "log_alpha_map", "gamma_rms", "m_i", "P_ii"})
    EXPECT_TRUE(j[0].contains(key)) << key;
  EXPECT_TRUE(to_json(laplace_table(fit, ParamLayout(k121).names()))[0]["m_i"].is_null());
}
