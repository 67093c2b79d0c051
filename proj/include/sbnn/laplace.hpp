#pragma once

// Laplace approximation of likelihood x known prior at a chosen mode. The
// resulting single Gaussian kernel fed to the sparse-learning machinery is
// the classical evidence-framework (RVM) setting.

#include <functional>
#include <string>
#include <vector>

#include "sbnn/common.hpp"
#include "sbnn/gmm.hpp"
#include "sbnn/io.hpp"
#include "sbnn/nsbl.hpp"

namespace sbnn {

struct LogTarget {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;  // optional; finite differences of `gradient` otherwise
  Vector lower;  // optional box; empty means unbounded
  Vector upper;
};

struct LaplaceConfig {
  int max_iterations = 5000;
  double gradient_tolerance = 1e-6;
  bool newton = false;                 // Newton steps instead of BFGS
  double fd_relative_step = 1e-4;
  double nonidentifiable_tolerance = 1e-8;  // |H_ii| below this x max|H_jj| gets unit variance
};

struct MapResult {
  Vector phi;
  double value = kNegInf;
  double gradient_norm = 0.0;  // infinity norm of the projected gradient
  int iterations = 0;
  bool converged = false;
  std::vector<bool> at_bound;  // held at a box bound
};

/// Central differences of the gradient, symmetrized. Returns d2 f.
inline Matrix finite_difference_hessian(const std::function<Vector(const Vector&)>& gradient, const Vector& x,
                                        double rel_step = 1e-4) {
  const Eigen::Index n = x.size();
  Matrix h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = rel_step * std::max(1.0, std::abs(x[i]));
    Vector xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    h.col(i) = (gradient(xp) - gradient(xm)) / (2.0 * step);
  }
  symmetrize(h);
  return h;
}

namespace detail {

inline Vector project(const LogTarget& f, const Vector& x) {
  Vector p = x;
  if (f.lower.size() == x.size()) p = p.cwiseMax(f.lower);
  if (f.upper.size() == x.size()) p = p.cwiseMin(f.upper);
  return p;
}

// Coordinates held at a bound by a gradient pointing out of the box.
inline std::vector<bool> active_bounds(const LogTarget& f, const Vector& x, const Vector& g) {
  std::vector<bool> act(static_cast<std::size_t>(x.size()), false);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool at_lo = f.lower.size() == x.size() && x[i] <= f.lower[i] && g[i] < 0.0;
    const bool at_hi = f.upper.size() == x.size() && x[i] >= f.upper[i] && g[i] > 0.0;
    act[static_cast<std::size_t>(i)] = at_lo || at_hi;
  }
  return act;
}

inline Vector masked(Vector v, const std::vector<bool>& act) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (act[static_cast<std::size_t>(i)]) v[i] = 0.0;
  return v;
}

// Backtracking line search for ascent along `dir`, projected onto the box;
// returns the accepted step length or 0.
inline double armijo(const LogTarget& f, const Vector& x, double fx, const Vector& g, const Vector& dir,
                     double& f_new, Vector& x_new) {
  if (!(g.dot(dir) > 0.0)) return 0.0;
  double step = 1.0;
  for (int k = 0; k < 60; ++k) {
    x_new = project(f, x + step * dir);
    f_new = f.value(x_new);
    if (std::isfinite(f_new) && f_new >= fx + 1e-4 * g.dot(x_new - x) && x_new != x) return step;
    step *= 0.5;
  }
  return 0.0;
}

}  // namespace detail

/// Local maximizer of a twice-differentiable log density by BFGS (or Newton)
/// ascent with backtracking, finished with Newton polishing when BFGS stalls.
/// With a box on the target, coordinates pinned at a bound are held fixed and
/// convergence is judged on the projected gradient.
inline MapResult find_map(const LogTarget& f, const Vector& start, const LaplaceConfig& cfg = {}) {
  require(static_cast<bool>(f.value) && static_cast<bool>(f.gradient), "log target needs value and gradient");
  const Eigen::Index n = start.size();
  require(f.lower.size() == 0 || f.lower.size() == n, "lower bound length mismatch");
  require(f.upper.size() == 0 || f.upper.size() == n, "upper bound length mismatch");
  MapResult res;
  Vector x = start;
  double fx = f.value(x);
  if (!std::isfinite(fx)) throw NumericalError("log target is not finite at the start point");
  Vector g = f.gradient(x);
  auto hessian_at = [&](const Vector& p) {
    return f.hessian ? f.hessian(p) : finite_difference_hessian(f.gradient, p, cfg.fd_relative_step);
  };

  auto newton_direction = [&](const Vector& p, const Vector& grad, const std::vector<bool>& act) -> Vector {
    Matrix neg_h = -hessian_at(p);
    for (Eigen::Index i = 0; i < n; ++i)
      if (act[static_cast<std::size_t>(i)]) {
        neg_h.row(i).setZero();
        neg_h.col(i).setZero();
        neg_h(i, i) = 1.0;
      }
    Eigen::LLT<Matrix> llt(neg_h);
    if (llt.info() == Eigen::Success) return llt.solve(grad);
    return grad;
  };

  Matrix inv_h = Matrix::Identity(n, n);  // approximates (-d2 f)^-1
  int it = 0;
  bool polishing = cfg.newton;
  int stalls = 0;
  std::vector<bool> act = detail::active_bounds(f, x, g);
  Vector pg = detail::masked(g, act);
  for (; it < cfg.max_iterations; ++it) {
    if (pg.cwiseAbs().maxCoeff() < cfg.gradient_tolerance) break;
    Vector dir = detail::masked(polishing ? newton_direction(x, pg, act) : Vector(inv_h * pg), act);
    if (!(pg.dot(dir) > 0.0)) {
      inv_h.setIdentity();
      dir = pg;
    }
    double f_new = fx;
    Vector x_new;
    const double step = detail::armijo(f, x, fx, pg, dir, f_new, x_new);
    if (step == 0.0) {
      if (polishing && ++stalls > 3) break;
      polishing = true;
      inv_h.setIdentity();
      continue;
    }
    const Vector g_new = f.gradient(x_new);
    const Vector s = x_new - x;
    const Vector y = g - g_new;  // gradient decrease along an ascent step
    const double sy = s.dot(y);
    if (!polishing && sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(n, n);
      inv_h = (eye - rho * s * y.transpose()) * inv_h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const bool tiny = std::abs(f_new - fx) <= 1e-15 * std::max(1.0, std::abs(fx));
    x = x_new;
    fx = f_new;
    g = g_new;
    const auto act_new = detail::active_bounds(f, x, g);
    if (act_new != act) inv_h.setIdentity();
    act = act_new;
    pg = detail::masked(g, act);
    if (tiny && !polishing) polishing = true;
  }
  res.phi = x;
  res.value = fx;
  res.gradient_norm = pg.cwiseAbs().maxCoeff();
  res.iterations = it;
  res.at_bound = act;
  res.converged = res.gradient_norm < cfg.gradient_tolerance;
  return res;
}

struct LaplaceFit {
  Vector phi_map;
  Matrix hessian;   // -d2 log target at phi_map, after placeholder substitution
  Matrix sigma;     // covariance
  Vector mode_seed;
  bool converged = false;
  bool regularized = false;           // eigenvalues had to be clamped to make sigma SPD
  std::vector<bool> placeholder;      // parameter got the unit-variance placeholder
  std::vector<bool> at_bound;         // mode sits on a box bound in this coordinate
  double gradient_norm = 0.0;
  double hessian_asymmetry = 0.0;     // relative asymmetry removed by symmetrization
};

/// Gaussian approximation at the mode reached from `start`. Parameters with
/// vanishing curvature are decoupled and given unit variance; they are flagged
/// in `placeholder`.
inline LaplaceFit laplace_fit(const LogTarget& f, const Vector& start, const LaplaceConfig& cfg = {}) {
  const auto map = find_map(f, start, cfg);
  LaplaceFit fit;
  fit.mode_seed = start;
  fit.phi_map = map.phi;
  fit.converged = map.converged;
  fit.gradient_norm = map.gradient_norm;
  fit.at_bound = map.at_bound;
  const Eigen::Index n = start.size();

  Matrix h = f.hessian ? Matrix(f.hessian(map.phi)) : finite_difference_hessian(f.gradient, map.phi, cfg.fd_relative_step);
  h = -h;
  fit.hessian_asymmetry = symmetrize(h);
  const double scale = h.diagonal().cwiseAbs().maxCoeff();
  fit.placeholder.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(h(i, i)) <= cfg.nonidentifiable_tolerance * scale) {
      fit.placeholder[static_cast<std::size_t>(i)] = true;
      h.row(i).setZero();
      h.col(i).setZero();
      h(i, i) = 1.0;
    }
  }
  fit.hessian = h;

  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  Vector ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double floor = 1e-10 * (top > 0 ? top : 1.0);
  if (ev.minCoeff() < floor) {
    fit.regularized = true;
    ev = ev.cwiseAbs().cwiseMax(floor);
  }
  fit.sigma = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  symmetrize(fit.sigma);
  return fit;
}

/// Single-kernel mixture {a = 1, mu = phi_map, Sigma = sigma}.
inline Gmm laplace_kernel(const LaplaceFit& fit) {
  if (!fit.converged) throw NumericalError("Laplace fit did not converge to a mode");
  return Gmm({GaussianKernel{1.0, fit.phi_map, fit.sigma}});
}

struct LaplaceRow {
  std::string name;
  double phi_map = 0.0;
  double sigma_ii = 0.0;
  bool placeholder = false;
  std::optional<double> log_alpha_map;
  std::optional<double> gamma_rms;
  std::optional<double> m_i;
  std::optional<double> p_ii;
};

/// Per-parameter table before and (optionally) after sparse learning.
inline std::vector<LaplaceRow> laplace_table(const LaplaceFit& fit, const std::vector<std::string>& names,
                                             const NsblResult* sparse = nullptr, const PriorSpec* partition = nullptr) {
  std::vector<LaplaceRow> rows;
  for (Eigen::Index i = 0; i < fit.phi_map.size(); ++i) {
    LaplaceRow r;
    r.name = names.at(static_cast<std::size_t>(i));
    r.phi_map = fit.phi_map[i];
    r.sigma_ii = fit.sigma(i, i);
    r.placeholder = fit.placeholder[static_cast<std::size_t>(i)];
    if (sparse) {
      const auto& post = sparse->posterior.kernel(0);
      r.m_i = post.mu[i];
      r.p_ii = post.sigma(i, i);
    }
    rows.push_back(r);
  }
  if (sparse && partition) {
    for (std::size_t k = 0; k < partition->ard_set.size(); ++k) {
      auto& r = rows[partition->ard_set[k]];
      r.log_alpha_map = sparse->log_alpha_map.log_alpha[static_cast<Eigen::Index>(k)];
      r.gamma_rms = sparse->relevance.rms[static_cast<Eigen::Index>(k)];
    }
  }
  return rows;
}

inline json to_json(const std::vector<LaplaceRow>& rows) {
  json out = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& r : rows)
    out.push_back({{"name", r.name},
                   {"phi_map", r.phi_map},
                   {"Sigma_ii", r.sigma_ii},
                   {"placeholder_variance", r.placeholder},
                   {"log_alpha_map", opt(r.log_alpha_map)},
                   {"gamma_rms", opt(r.gamma_rms)},
                   {"m_i", opt(r.m_i)},
                   {"P_ii", opt(r.p_ii)}});
  return out;
}

}  // namespace sbnn
