#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbnn/pipeline.hpp"

using namespace sbnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sbnn_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config(const std::string& method, const fs::path& dir) {
  json j = json::parse(R"({
    "schema_version": 1,
    "seed": 3,
    "network": {"layer_sizes": [1, 2, 1]},
    "tmcmc": {"n_samples": 300},
    "gmm": {"k_candidates": [1, 2], "n_restarts": 1},
    "nsbl": {"n_starts": 3},
    "hier": {"tmcmc": {"n_samples": 300}},
    "laplace": {"start": {"boxcar_mode": 5}},
    "predict": {"n_draws": 50, "grid": [-5, 5, 21]}
  })");
  j["method"] = method;
  j["output_dir"] = dir.string();
  return run_config_from_json(j);
}

void expect_artifacts_exist(const json& manifest, const fs::path& dir) {
  for (const auto& [key, rel] : manifest.at("artifacts").items())
    EXPECT_TRUE(fs::exists(dir / rel.get<std::string>())) << key;
}

}  // namespace

TEST(Pipeline, EveryMethodCompletes) {
  for (const char* m : {"standard", "nsbl", "hier", "laplace", "laplace-nsbl"}) {
    const auto dir = scratch(std::string("method_") + m);
    const auto out = run_pipeline(small_config(m, dir));
    const json man = read_json(dir / "manifest.json");
    EXPECT_EQ(man["status"], "ok") << m;
    EXPECT_EQ(man["method"], m);
    EXPECT_TRUE(man["artifacts"].contains("fan")) << m;
    EXPECT_TRUE(man["summary"].contains("predict")) << m;
    expect_artifacts_exist(man, dir);
    EXPECT_TRUE(out.fan.has_value());
    fs::remove_all(dir);
  }
}

TEST(Pipeline, NsblArtifactsAreConsistent) {
  const auto dir = scratch("nsbl_consistency");
  const auto out = run_pipeline(small_config("nsbl", dir));
  const json nj = read_json(dir / "nsbl.json");
  EXPECT_EQ(nj["ard_parameters"].size(), 7u);
  EXPECT_EQ(nj["parameter_names"][4], "W2_11");
  const Gmm post = load_gmm(dir / "posterior_gmm.json");
  EXPECT_EQ(post.size(), out.nsbl->posterior.size());
  const Gmm like = load_gmm(dir / "gmm.json");
  const PriorSpec p = PriorSpec::all_ard(7);
  EXPECT_NEAR(log_evidence(like, out.nsbl->log_alpha_map, p), nj["log_evidence"].get<double>(), 1e-9);
  const auto samples = read_csv(dir / "tmcmc_samples.csv");
  EXPECT_EQ(samples.columns.back(), "log_prior");
  EXPECT_EQ(samples.values.rows(), 300);
  EXPECT_NE(slurp(dir / "nsbl_table.txt").find("W2_11"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Pipeline, DeterministicModuloTimings) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  RunConfig ca = small_config("nsbl", a), cb = small_config("nsbl", b);
  cb.threads = 2;
  run_pipeline(ca);
  run_pipeline(cb);
  EXPECT_EQ(manifest_without_timings(read_json(a / "manifest.json")),
            manifest_without_timings(read_json(b / "manifest.json")));
  for (const char* f : {"tmcmc_samples.csv", "gmm.json", "nsbl.json", "fan.csv", "dataset.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ResumeReusesSamplesAndReproducesResults) {
  const auto dir = scratch("resume");
  RunConfig c = small_config("nsbl", dir);
  run_pipeline(c);
  const std::string nsbl_before = slurp(dir / "nsbl.json");
  const std::string samples_before = slurp(dir / "tmcmc_samples.csv");
  c.resume = true;
  run_pipeline(c);
  const json man = read_json(dir / "manifest.json");
  EXPECT_TRUE(man["summary"]["tmcmc"]["resumed"].get<bool>());
  EXPECT_TRUE(man["summary"]["gmm"]["resumed"].get<bool>());
  EXPECT_EQ(slurp(dir / "nsbl.json"), nsbl_before);
  EXPECT_EQ(slurp(dir / "tmcmc_samples.csv"), samples_before);
  // A changed sampling setting invalidates the cached stage.
  c.tmcmc->n_samples = 200;
  run_pipeline(c);
  EXPECT_FALSE(read_json(dir / "manifest.json")["summary"]["tmcmc"]["resumed"].get<bool>());
  fs::remove_all(dir);
}

TEST(Pipeline, FailureIsRecordedInManifest) {
  const auto dir = scratch("failure");
  RunConfig c = small_config("standard", dir);
  c.tmcmc->max_stages = 1;
  try {
    run_pipeline(c);
    FAIL() << "expected a PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage, "tmcmc");
  }
  const json man = read_json(dir / "manifest.json");
  EXPECT_EQ(man["status"], "failed");
  EXPECT_EQ(man["error"]["stage"], "tmcmc");
  EXPECT_TRUE(fs::exists(dir / "tmcmc_samples.csv"));
  fs::remove_all(dir);
}

TEST(Pipeline, ConfigHashIgnoresOutputLocationAndThreads) {
  RunConfig a = small_config("nsbl", "/tmp/x"), b = small_config("nsbl", "/tmp/y");
  b.threads = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 9;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Surface, JeffreysSurfaceEqualsEvidenceAndPeaksAtClosedForm) {
  // Coordinate 0 carries a kernel mean of 5 (interior optimum -log 24);
  // coordinate 1 is centered (optimum at the upper bound).
  const auto dir = scratch("surface");
  fs::create_directories(dir);
  const Gmm g({{1.0, (Vector(2) << 5.0, 0.0).finished(), Matrix::Identity(2, 2)}});
  save_gmm(g, dir / "gmm.json");
  write_json(dir / "nsbl.json", {{"parameter_names", {"a", "b"}},
                                 {"ard_parameters", {"a", "b"}},
                                 {"log_alpha_map", {{"a", 0.0}, {"b", 0.0}}},
                                 {"hyperprior", {{"mode", "jeffreys"}}}});
  const SurfaceGrid grid{-12, 12, 97};
  emit_surface(dir / "gmm.json", dir / "nsbl.json", "a", "b", grid, dir / "surface.csv");
  const auto s = read_csv(dir / "surface.csv");
  EXPECT_EQ(s.columns, surface_columns());
  ASSERT_EQ(s.values.rows(), 97 * 97);
  const PriorSpec p = PriorSpec::all_ard(2);
  Eigen::Index best = 0;
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    const AlphaVector a((Vector(2) << s.values(r, 0), s.values(r, 1)).finished());
    EXPECT_NEAR(s.values(r, 2), log_evidence(g, a, p), 1e-12);
    EXPECT_EQ(s.values(r, 3), 0.0);
    if (s.values(r, 4) > s.values(best, 4)) best = r;
  }
  EXPECT_NEAR(s.values(best, 0), -std::log(24.0), 0.25 + 1e-12);
  EXPECT_EQ(s.values(best, 1), 12.0);

  emit_surface(dir / "gmm.json", dir / "nsbl.json", "a", "b", grid, dir / "surface_gamma.csv",
               Hyperprior::gamma(2, 2.0, 1.0));
  const auto sg = read_csv(dir / "surface_gamma.csv");
  for (Eigen::Index r = 0; r < sg.values.rows(); r += 101)
    EXPECT_NEAR(sg.values(r, 4), sg.values(r, 2) + 2 * (sg.values(r, 0) + sg.values(r, 1)) -
                                     std::exp(sg.values(r, 0)) - std::exp(sg.values(r, 1)),
                1e-9);
  EXPECT_THROW(emit_surface(dir / "gmm.json", dir / "nsbl.json", "a", "zz", grid, dir / "bad.csv"), InvalidArgument);
  fs::remove_all(dir);
}
