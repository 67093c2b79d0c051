#pragma once

// Hidden-unit symmetries of single-hidden-layer networks and pivot-based
// relabeling of posterior samples.
//
// Permuting hidden units leaves the network function unchanged; with tanh,
// so does negating a unit's incoming weights, bias and outgoing weights.
// Relabeling maps every sample to the symmetric copy closest to a pivot
// sample, which removes label switching before a mixture fit.

#include <algorithm>
#include <numeric>
#include <vector>

#include "sbnn/network.hpp"

namespace sbnn {

struct HiddenUnitBlocks {
  int units = 0;
  // Flat indices belonging to each unit: incoming weights, bias, outgoing weights.
  std::vector<std::vector<std::size_t>> in_and_bias;
  std::vector<std::vector<std::size_t>> out;
  bool sign_flips = false;
};

inline HiddenUnitBlocks hidden_unit_blocks(const NetworkSpec& spec) {
  spec.validate();
  require(spec.num_layers() == 2, "hidden-unit relabeling supports exactly one hidden layer");
  const int in = spec.layer_sizes[0];
  const int h = spec.layer_sizes[1];
  const int out = spec.layer_sizes[2];
  HiddenUnitBlocks b;
  b.units = h;
  b.sign_flips = spec.activation == Activation::tanh;
  const std::size_t bias1 = static_cast<std::size_t>(h * in);
  const std::size_t w2 = bias1 + static_cast<std::size_t>(h);
  for (int j = 0; j < h; ++j) {
    std::vector<std::size_t> a, o;
    for (int i = 0; i < in; ++i) a.push_back(static_cast<std::size_t>(j * in + i));
    a.push_back(bias1 + static_cast<std::size_t>(j));
    for (int k = 0; k < out; ++k) o.push_back(w2 + static_cast<std::size_t>(k * h + j));
    b.in_and_bias.push_back(a);
    b.out.push_back(o);
  }
  return b;
}

/// Applies "unit perm[j] of the input becomes unit j" with optional negation.
inline Vector apply_unit_map(const HiddenUnitBlocks& b, const Vector& phi, const std::vector<int>& perm,
                             const std::vector<int>& sign) {
  Vector outv = phi;
  for (int j = 0; j < b.units; ++j) {
    const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
    const double s = sign[static_cast<std::size_t>(j)];
    const auto dst = static_cast<std::size_t>(j);
    for (std::size_t t = 0; t < b.in_and_bias[dst].size(); ++t)
      outv[static_cast<Eigen::Index>(b.in_and_bias[dst][t])] = s * phi[static_cast<Eigen::Index>(b.in_and_bias[src][t])];
    for (std::size_t t = 0; t < b.out[dst].size(); ++t)
      outv[static_cast<Eigen::Index>(b.out[dst][t])] = s * phi[static_cast<Eigen::Index>(b.out[src][t])];
  }
  return outv;
}

namespace detail {

// Squared distance between unit `src` of phi (times sign) and unit `dst` of the pivot.
inline double unit_cost(const HiddenUnitBlocks& b, const Vector& phi, const Vector& pivot, int src, int dst,
                        double sign) {
  double c = 0.0;
  const auto s = static_cast<std::size_t>(src);
  const auto d = static_cast<std::size_t>(dst);
  for (std::size_t t = 0; t < b.in_and_bias[d].size(); ++t) {
    const double e = sign * phi[static_cast<Eigen::Index>(b.in_and_bias[s][t])] -
                     pivot[static_cast<Eigen::Index>(b.in_and_bias[d][t])];
    c += e * e;
  }
  for (std::size_t t = 0; t < b.out[d].size(); ++t) {
    const double e = sign * phi[static_cast<Eigen::Index>(b.out[s][t])] - pivot[static_cast<Eigen::Index>(b.out[d][t])];
    c += e * e;
  }
  return c;
}

}  // namespace detail

/// Symmetric copy of `phi` closest to `pivot` in Euclidean distance. The cost
/// separates over units, so the search is an assignment problem; it is solved
/// exhaustively for up to 8 units and greedily beyond.
inline Vector relabel_to_pivot(const HiddenUnitBlocks& b, const Vector& phi, const Vector& pivot) {
  const int h = b.units;
  std::vector<double> cost(static_cast<std::size_t>(h * h));
  std::vector<int> best_sign(static_cast<std::size_t>(h * h), 1);
  for (int d = 0; d < h; ++d)
    for (int s = 0; s < h; ++s) {
      const double plus = detail::unit_cost(b, phi, pivot, s, d, 1.0);
      const double minus = b.sign_flips ? detail::unit_cost(b, phi, pivot, s, d, -1.0) : plus + 1.0;
      const auto k = static_cast<std::size_t>(d * h + s);
      cost[k] = std::min(plus, minus);
      best_sign[k] = minus < plus ? -1 : 1;
    }
  std::vector<int> perm(static_cast<std::size_t>(h));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  auto total = [&](const std::vector<int>& p) {
    double t = 0;
    for (int d = 0; d < h; ++d) t += cost[static_cast<std::size_t>(d * h + p[static_cast<std::size_t>(d)])];
    return t;
  };
  if (h <= 8) {
    double best_cost = total(perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      const double c = total(perm);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    }
  } else {
    std::vector<bool> used(static_cast<std::size_t>(h), false);
    for (int d = 0; d < h; ++d) {
      int arg = -1;
      for (int s = 0; s < h; ++s)
        if (!used[static_cast<std::size_t>(s)] &&
            (arg < 0 || cost[static_cast<std::size_t>(d * h + s)] < cost[static_cast<std::size_t>(d * h + arg)]))
          arg = s;
      used[static_cast<std::size_t>(arg)] = true;
      best[static_cast<std::size_t>(d)] = arg;
    }
  }
  std::vector<int> sign(static_cast<std::size_t>(h));
  for (int d = 0; d < h; ++d)
    sign[static_cast<std::size_t>(d)] = best_sign[static_cast<std::size_t>(d * h + best[static_cast<std::size_t>(d)])];
  return apply_unit_map(b, phi, best, sign);
}

/// Relabels every row toward the row with the largest `score` (typically the
/// unnormalized log posterior). Returns the pivot row index.
inline std::size_t relabel_samples(const NetworkSpec& spec, RowMatrix& samples, const Vector& score) {
  require(samples.rows() > 0 && score.size() == samples.rows(), "relabeling needs one score per sample");
  const auto b = hidden_unit_blocks(spec);
  Eigen::Index pivot_row = 0;
  score.maxCoeff(&pivot_row);
  const Vector pivot = samples.row(pivot_row).transpose();
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    samples.row(r) = relabel_to_pivot(b, samples.row(r).transpose(), pivot).transpose();
  return static_cast<std::size_t>(pivot_row);
}

}  // namespace sbnn
