#pragma once

// Push-forward predictive fans over an evaluation grid.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <vector>

#include "sbnn/io.hpp"
#include "sbnn/network.hpp"

namespace sbnn {

struct QuantileBand {
  double level = 0.95;
  Vector lo;
  Vector hi;
};

struct PredictiveFan {
  Vector x_grid;
  RowMatrix samples;  // n_draws x grid points
  Vector mean;
  std::vector<QuantileBand> bands;
  bool include_noise = false;

  const QuantileBand& band(double level) const {
    for (const auto& b : bands)
      if (std::abs(b.level - level) < 1e-12) return b;
    throw InvalidArgument("fan has no band at the requested level");
  }
};

/// Type-7 quantile (linear interpolation between order statistics).
inline double quantile_sorted(const double* sorted, std::size_t n, double p) {
  const double h = (static_cast<double>(n) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Vector linspace_grid(double lo = -5.0, double hi = 5.0, Eigen::Index n = 201) {
  return Vector::LinSpaced(n, lo, hi);
}

/// Evaluates every parameter row over the grid. Noise draws come from one
/// stream per row so the result is independent of the thread count.
inline PredictiveFan push_forward(const NetworkSpec& spec, const Eigen::Ref<const RowMatrix>& param_samples,
                                  const Vector& x_grid, bool include_noise = false, double noise_var = 0.5,
                                  std::uint64_t seed = 0, std::vector<double> levels = {0.5, 0.95},
                                  int threads = 1) {
  require(param_samples.rows() > 0, "push-forward needs at least one parameter sample");
  require(param_samples.cols() == static_cast<Eigen::Index>(spec.num_params()),
          "parameter samples do not match the network");
  require(x_grid.size() > 0, "empty evaluation grid");
  require(!include_noise || noise_var > 0.0, "noise variance must be positive");
  const Eigen::Index n = param_samples.rows();
  const Eigen::Index m = x_grid.size();
  PredictiveFan fan;
  fan.x_grid = x_grid;
  fan.include_noise = include_noise;
  fan.samples.resize(n, m);
  const double sd = std::sqrt(noise_var);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t j) {
    const auto r = static_cast<Eigen::Index>(j);
    const Vector phi = param_samples.row(r).transpose();
    Vector y = forward_batch(spec, phi, x_grid);
    if (include_noise) {
      Rng rng = make_stream(seed, "predict-noise", 0, j);
      y += sd * standard_normal(rng, m);
    }
    fan.samples.row(r) = y.transpose();
  });

  fan.mean = fan.samples.colwise().mean().transpose();
  std::sort(levels.begin(), levels.end());
  for (double lv : levels) {
    require(lv > 0.0 && lv < 1.0, "band level must lie in (0, 1)");
    fan.bands.push_back({lv, Vector(m), Vector(m)});
  }
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < m; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) col[static_cast<std::size_t>(r)] = fan.samples(r, c);
    std::sort(col.begin(), col.end());
    for (auto& b : fan.bands) {
      const double tail = 0.5 * (1.0 - b.level);
      b.lo[c] = quantile_sorted(col.data(), col.size(), tail);
      b.hi[c] = quantile_sorted(col.data(), col.size(), 1.0 - tail);
    }
  }
  return fan;
}

struct ExtrapolationMetrics {
  double rmse_in = 0.0;
  double rmse_out = 0.0;
  double band_width_out = 0.0;  // mean width of the 95% band outside the training range
};

/// RMSE of the fan mean against `truth` inside and outside [train_lo, train_hi].
/// With `outer_margin` > 0, out-of-range points must also satisfy
/// |x| >= outer_margin (e.g. 3.5 to skip the edge of the training range).
inline ExtrapolationMetrics extrapolation_metrics(const PredictiveFan& fan, const std::function<double(double)>& truth,
                                                  double train_lo, double train_hi, double outer_margin = 0.0) {
  const auto& b95 = fan.band(0.95);
  double sin = 0, sout = 0, wout = 0;
  int nin = 0, nout = 0;
  for (Eigen::Index c = 0; c < fan.x_grid.size(); ++c) {
    const double x = fan.x_grid[c];
    const double e = fan.mean[c] - truth(x);
    if (x >= train_lo && x <= train_hi) {
      sin += e * e;
      ++nin;
    } else if (std::abs(x) >= outer_margin) {
      sout += e * e;
      wout += b95.hi[c] - b95.lo[c];
      ++nout;
    }
  }
  require(nout > 0, "grid does not extend beyond the training range");
  ExtrapolationMetrics m;
  m.rmse_in = nin ? std::sqrt(sin / nin) : 0.0;
  m.rmse_out = std::sqrt(sout / nout);
  m.band_width_out = wout / nout;
  return m;
}

inline std::string band_column(const char* side, double tail) {
  // 0.025 -> "q025", 0.25 -> "q25", 0.975 -> "q975"
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", tail);
  std::string digits(buf);
  digits = digits.substr(digits.find('.') + 1);
  while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
  return std::string(side) + digits;
}

/// Summary CSV: x, mean, then lo/hi columns per band (q025, q975, q25, q75).
inline void save_fan(const PredictiveFan& fan, const std::filesystem::path& summary_csv,
                     const std::filesystem::path& samples_csv) {
  std::vector<std::string> cols{"x", "mean"};
  std::vector<const Vector*> data{&fan.x_grid, &fan.mean};
  std::vector<const QuantileBand*> order;
  for (auto it = fan.bands.rbegin(); it != fan.bands.rend(); ++it) order.push_back(&*it);
  for (const auto* b : order) {
    const double tail = 0.5 * (1.0 - b->level);
    cols.push_back(band_column("q", tail));
    cols.push_back(band_column("q", 1.0 - tail));
    data.push_back(&b->lo);
    data.push_back(&b->hi);
  }
  RowMatrix table(fan.x_grid.size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < data.size(); ++c) table.col(static_cast<Eigen::Index>(c)) = *data[c];
  write_csv(summary_csv, cols, table);

  std::vector<std::string> grid_cols;
  for (Eigen::Index c = 0; c < fan.x_grid.size(); ++c) grid_cols.push_back("x=" + format_double(fan.x_grid[c]));
  write_csv(samples_csv, grid_cols, fan.samples);
}

}  // namespace sbnn
