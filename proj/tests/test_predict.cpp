#include <gtest/gtest.h>

#include <filesystem>

#include "sbnn/boxcar.hpp"
#include "sbnn/predict.hpp"

using namespace sbnn;

namespace {

const NetworkSpec k121{{1, 2, 1}, Activation::tanh};

RowMatrix mode_rows() {
  RowMatrix r(8, 7);
  for (int m = 1; m <= 8; ++m) r.row(m - 1) = boxcar_mode(k121, m).values.transpose();
  return r;
}

}  // namespace

TEST(PushForward, ZeroParametersGiveZeroFan) {
  const auto fan = push_forward(k121, RowMatrix::Zero(10, 7), linspace_grid());
  EXPECT_EQ(fan.samples.cols(), 201);
  EXPECT_TRUE((fan.mean.array() == 0).all());
  for (const auto& b : fan.bands) EXPECT_TRUE((b.lo.array() == 0).all() && (b.hi.array() == 0).all());
}

TEST(PushForward, EveryBoxcarModeReproducesTheTruth) {
  const auto fan = push_forward(k121, mode_rows(), linspace_grid());
  for (Eigen::Index c = 0; c < fan.x_grid.size(); ++c) {
    EXPECT_NEAR(fan.mean[c], boxcar_truth(fan.x_grid[c]), 1e-12);
    EXPECT_NEAR(fan.band(0.95).hi[c] - fan.band(0.95).lo[c], 0.0, 1e-12);
  }
}

TEST(PushForward, NoiseWidensBandsToPredictiveWidth) {
  RowMatrix rows(4000, 7);
  rows.rowwise() = boxcar_mode(k121, 3).values.transpose();
  const Vector grid = linspace_grid(-1, 1, 5);
  const auto fan = push_forward(k121, rows, grid, true, 0.5, 7);
  const double want = 2 * 1.959964 * std::sqrt(0.5);
  for (Eigen::Index c = 0; c < grid.size(); ++c) {
    EXPECT_NEAR(fan.band(0.95).hi[c] - fan.band(0.95).lo[c], want, 0.05 * want);
    EXPECT_NEAR(fan.mean[c], boxcar_truth(grid[c]), 4 * std::sqrt(0.5 / 4000));
  }
  EXPECT_TRUE(fan.include_noise);
  EXPECT_THROW(push_forward(k121, rows, grid, true, 0.0), InvalidArgument);
}

TEST(PushForward, BandsAreNested) {
  Rng rng(5);
  RowMatrix rows(300, 7);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) rows.row(r) = standard_normal(rng, 7).transpose();
  const auto fan = push_forward(k121, rows, linspace_grid(), true, 0.5, 1);
  const auto &b50 = fan.band(0.5), &b95 = fan.band(0.95);
  EXPECT_TRUE((b95.lo.array() <= b50.lo.array()).all());
  EXPECT_TRUE((b50.lo.array() <= b50.hi.array()).all());
  EXPECT_TRUE((b50.hi.array() <= b95.hi.array()).all());
}

TEST(PushForward, RowOrderDoesNotMatter) {
  Rng rng(6);
  RowMatrix rows(50, 7);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) rows.row(r) = standard_normal(rng, 7).transpose();
  const RowMatrix flipped = rows.colwise().reverse();
  const auto a = push_forward(k121, rows, linspace_grid());
  const auto b = push_forward(k121, flipped, linspace_grid());
  EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(a.band(0.95).lo, b.band(0.95).lo);
  EXPECT_EQ(a.band(0.5).hi, b.band(0.5).hi);
}

TEST(PushForward, DeterministicAcrossThreads) {
  RowMatrix rows = mode_rows();
  const auto a = push_forward(k121, rows, linspace_grid(), true, 0.5, 3, {0.5, 0.95}, 1);
  const auto b = push_forward(k121, rows, linspace_grid(), true, 0.5, 3, {0.5, 0.95}, 4);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(PushForward, InputValidation) {
  EXPECT_THROW(push_forward(k121, RowMatrix::Zero(0, 7), linspace_grid()), InvalidArgument);
  EXPECT_THROW(push_forward(k121, RowMatrix::Zero(3, 6), linspace_grid()), InvalidArgument);
  EXPECT_THROW(push_forward(k121, RowMatrix::Zero(3, 7), linspace_grid(), false, 0.5, 0, {1.0}), InvalidArgument);
}

TEST(ExtrapolationMetrics, ExactAndOffsetFans) {
  const auto fan = push_forward(k121, mode_rows(), linspace_grid());
  const auto exact = extrapolation_metrics(fan, boxcar_truth, -3, 3, 3.5);
  EXPECT_LT(exact.rmse_in, 1e-12);
  EXPECT_LT(exact.rmse_out, 1e-12);
  EXPECT_LT(exact.band_width_out, 1e-12);
  const auto off = extrapolation_metrics(fan, [](double x) { return boxcar_truth(x) + 0.5; }, -3, 3);
  EXPECT_NEAR(off.rmse_in, 0.5, 1e-12);
  EXPECT_NEAR(off.rmse_out, 0.5, 1e-12);
}

TEST(ExtrapolationMetrics, OuterMarginSelectsPoints) {
  PredictiveFan fan;
  fan.x_grid = (Vector(5) << -5, -3.2, 0, 3.2, 5).finished();
  fan.mean = (Vector(5) << 1, 100, 0, 100, 1).finished();
  fan.bands.push_back({0.95, fan.mean, fan.mean});
  auto zero = [](double) { return 0.0; };
  EXPECT_NEAR(extrapolation_metrics(fan, zero, -3, 3, 3.5).rmse_out, 1.0, 1e-15);
  EXPECT_GT(extrapolation_metrics(fan, zero, -3, 3, 0.0).rmse_out, 50.0);
  EXPECT_THROW(extrapolation_metrics(fan, zero, -5, 5), InvalidArgument);
}

TEST(SaveFan, ColumnLayout) {
  const auto fan = push_forward(k121, mode_rows(), linspace_grid(-5, 5, 11));
  const auto dir = std::filesystem::temp_directory_path();
  save_fan(fan, dir / "sbnn_fan.csv", dir / "sbnn_fan_samples.csv");
  const auto t = read_csv(dir / "sbnn_fan.csv");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"x", "mean", "q025", "q975", "q25", "q75"}));
  EXPECT_EQ(t.values.rows(), 11);
  const auto s = read_csv(dir / "sbnn_fan_samples.csv");
  EXPECT_EQ(s.values.rows(), 8);
  EXPECT_EQ(s.columns.front(), "x=-5");
  std::filesystem::remove(dir / "sbnn_fan.csv");
  std::filesystem::remove(dir / "sbnn_fan_samples.csv");
}
