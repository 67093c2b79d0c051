#pragma once

// The boxcar regression study: tanh-sum surrogate of a rectangular pulse,
// noisy equally spaced observations, and the sign/permutation symmetric
// parameterizations of the two-neuron network that reproduce it.

#include <array>
#include <filesystem>
#include <optional>

#include "sbnn/io.hpp"
#include "sbnn/network.hpp"

namespace sbnn {

inline constexpr std::string_view kBoxcarTruthId = "boxcar_tanh_sum";

/// 2 tanh(5x + 5) + 2 tanh(-5x + 5)
inline double boxcar_truth(double x) { return 2.0 * std::tanh(5.0 * x + 5.0) + 2.0 * std::tanh(-5.0 * x + 5.0); }

struct BoxcarSettings {
  int n = 50;
  double x_lo = -3.0;
  double x_hi = 3.0;
  double noise_var = 0.5;
  std::uint64_t seed = 0;
};

inline Dataset generate_boxcar_dataset(const BoxcarSettings& s) {
  require(s.n >= 2, "boxcar dataset needs at least two points");
  require(s.x_lo < s.x_hi, "boxcar dataset requires x_lo < x_hi");
  require(s.noise_var > 0.0 && std::isfinite(s.noise_var), "noise variance must be positive");
  Dataset d;
  d.noise_var = s.noise_var;
  d.truth_fn_id = std::string(kBoxcarTruthId);
  d.x = Vector::LinSpaced(s.n, s.x_lo, s.x_hi);
  d.y.resize(s.n);
  Rng rng = make_stream(s.seed, "dataset");
  std::normal_distribution<double> noise(0.0, std::sqrt(s.noise_var));
  for (int i = 0; i < s.n; ++i) d.y[i] = boxcar_truth(d.x[i]) + noise(rng);
  return d;
}

inline Dataset generate_boxcar_dataset(int n, double x_lo, double x_hi, double noise_var, std::uint64_t seed) {
  return generate_boxcar_dataset(BoxcarSettings{n, x_lo, x_hi, noise_var, seed});
}

/// The eight parameterizations of the 1-2-1 tanh network that all equal the
/// boxcar surrogate, as (W2_11, W2_12, W1_11, W1_21, b1_1, b1_2, b2_1).
inline const std::array<std::array<double, 7>, 8>& boxcar_mode_table() {
  static const std::array<std::array<double, 7>, 8> table{{
      {2, 2, 5, -5, 5, 5, 0},
      {2, 2, -5, 5, 5, 5, 0},
      {2, -2, 5, 5, 5, -5, 0},
      {2, -2, -5, -5, 5, -5, 0},
      {-2, 2, 5, 5, -5, 5, 0},
      {-2, 2, -5, -5, -5, 5, 0},
      {-2, -2, 5, -5, -5, -5, 0},
      {-2, -2, -5, 5, -5, -5, 0},
  }};
  return table;
}

/// Combination `index` (1-based) placed in the first two hidden neurons of a
/// 1-H-1 tanh network; any further hidden neurons are zero.
inline ParamVector boxcar_mode(const NetworkSpec& spec, int index) {
  require(spec.layer_sizes.size() == 3 && spec.layer_sizes[1] >= 2, "boxcar modes need a 1-H-1 net with H >= 2");
  require(index >= 1 && index <= 8, "boxcar mode index must be in 1..8");
  const auto& c = boxcar_mode_table()[static_cast<std::size_t>(index - 1)];
  ParamVector p(spec);
  p["W2_11"] = c[0];
  p["W2_12"] = c[1];
  p["W1_11"] = c[2];
  p["W1_21"] = c[3];
  p["b1_1"] = c[4];
  p["b1_2"] = c[5];
  p["b2_1"] = c[6];
  return p;
}

// ---------------------------------------------------------------------------
// Persistence: CSV with header x,y plus a JSON sidecar.

inline void save_dataset(const Dataset& d, const std::filesystem::path& csv_path,
                         const std::optional<BoxcarSettings>& origin = std::nullopt) {
  RowMatrix m(d.x.size(), 2);
  m.col(0) = d.x;
  m.col(1) = d.y;
  write_csv(csv_path, {"x", "y"}, m);
  json side;
  side["n"] = d.x.size();
  side["x_lo"] = d.x.size() ? d.x.minCoeff() : 0.0;
  side["x_hi"] = d.x.size() ? d.x.maxCoeff() : 0.0;
  side["noise_var"] = d.noise_var;
  side["seed"] = origin ? json(origin->seed) : json(nullptr);
  side["truth_fn_id"] = d.truth_fn_id.empty() ? json(nullptr) : json(d.truth_fn_id);
  auto side_path = csv_path;
  side_path.replace_extension(".json");
  write_json(side_path, side);
}

inline Dataset load_dataset(const std::filesystem::path& csv_path) {
  auto m = read_csv(csv_path);
  require(m.columns.size() == 2 && m.columns[0] == "x" && m.columns[1] == "y",
          csv_path.string() + ": dataset CSV must have header x,y");
  Dataset d;
  d.x = m.values.col(0);
  d.y = m.values.col(1);
  auto side_path = csv_path;
  side_path.replace_extension(".json");
  if (std::filesystem::exists(side_path)) {
    const json side = read_json(side_path);
    d.noise_var = side.at("noise_var").get<double>();
    if (side.contains("truth_fn_id") && side["truth_fn_id"].is_string())
      d.truth_fn_id = side["truth_fn_id"].get<std::string>();
  }
  d.validate();
  return d;
}

}  // namespace sbnn
