// sbnn command line front end.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 pipeline failure.

#include <iostream>

#include "CLI11.hpp"
#include "sbnn/pipeline.hpp"

namespace {

using namespace sbnn;

constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::string> output;
  std::optional<unsigned> threads;
  bool resume = false;

  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (data_seed) {
      if (!c.data.generate) throw ConfigError("--data-seed requires a generated dataset");
      c.data.generate->seed = *data_seed;
    }
    if (output) c.output_dir = *output;
    if (threads) c.threads = *threads;
    if (resume) c.resume = true;
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--data-seed", o.data_seed, "Seed of the generated dataset");
  cmd->add_option("--output", o.output, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
}

SurfaceGrid parse_grid(const std::string& s) {
  SurfaceGrid g;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> g.lo >> c1 >> g.hi >> c2 >> g.n) || c1 != ':' || c2 != ':' || !is.eof())
    throw ConfigError("--grid expects lo:hi:n, got '" + s + "'");
  if (!(g.lo < g.hi) || g.n < 2) throw ConfigError("--grid needs lo < hi and n >= 2");
  return g;
}

std::optional<Hyperprior> parse_hyperprior(const std::string& s, Eigen::Index n) {
  if (s.empty()) return std::nullopt;
  if (s == "jeffreys") return Hyperprior::jeffreys(n);
  double shape = 0, rate = 0;
  if (std::sscanf(s.c_str(), "gamma:%lf:%lf", &shape, &rate) != 2 || shape <= 0 || rate <= 0)
    throw ConfigError("--hyperprior expects 'jeffreys' or 'gamma:<shape>:<rate>' with positive values");
  return Hyperprior::gamma(n, shape, rate);
}

std::pair<std::string, std::string> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == s.size())
    throw ConfigError("--pair expects two parameter names separated by a comma");
  return {s.substr(0, comma), s.substr(comma + 1)};
}

int cmd_gen_data(const std::string& config_path, const Overrides& o, const std::string& out_csv) {
  BoxcarSettings s;
  if (!config_path.empty()) {
    RunConfig c = load_run_config(config_path);
    if (!c.data.generate) throw ConfigError("config does not describe a generated dataset");
    s = *c.data.generate;
  }
  if (o.data_seed) s.seed = *o.data_seed;
  if (o.seed) s.seed = *o.seed;
  const Dataset d = generate_boxcar_dataset(s);
  std::filesystem::path p(out_csv);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  save_dataset(d, p, s);
  std::cout << "wrote " << p.string() << " (" << d.x.size() << " points)\n";
  return 0;
}

int cmd_run(const std::string& config_path, const Overrides& o) {
  RunConfig c = load_run_config(config_path);
  o.apply(c);
  c.validate();
  const auto out = run_pipeline(c);
  std::cout << out.manifest["summary"].dump(2) << "\n"
            << "manifest: " << (std::filesystem::path(c.output_dir) / "manifest.json").string() << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const std::filesystem::path root(run_dir);
  bool any = false;
  if (std::filesystem::exists(root / "laplace.json")) {
    std::cout << laplace_table_text(read_json(root / "laplace.json").at("table")) << "\n";
    any = true;
  }
  if (std::filesystem::exists(root / "nsbl.json")) {
    std::cout << relevance_table(read_json(root / "nsbl.json"));
    any = true;
  }
  if (!any) throw ConfigError(root.string() + " holds neither nsbl.json nor laplace.json");
  return 0;
}

/// Recomputes the predictive fan of a finished run from its persisted samples.
int cmd_predict(const std::string& run_dir, std::size_t n_draws, bool include_noise) {
  const std::filesystem::path root(run_dir);
  RunConfig c = run_config_from_json(read_json(root / "config.json"));
  if (n_draws > 0) c.predict.n_draws = n_draws;
  if (include_noise) c.predict.include_noise = true;
  const Dataset data = load_dataset(root / "dataset.csv");
  const std::size_t np = c.network.num_params();
  RowMatrix draws;
  if (std::filesystem::exists(root / "posterior_gmm.json")) {
    draws = sample_posterior(load_gmm(root / "posterior_gmm.json"), c.predict.n_draws, c.seed);
  } else if (std::filesystem::exists(root / "tmcmc_samples.csv")) {
    draws = pipeline_detail::pick_rows(read_csv(root / "tmcmc_samples.csv").values.leftCols(static_cast<Eigen::Index>(np)),
                                       c.predict.n_draws, c.seed);
  } else if (std::filesystem::exists(root / "hier_samples.csv")) {
    draws = pipeline_detail::pick_rows(read_csv(root / "hier_samples.csv").values.leftCols(static_cast<Eigen::Index>(np)),
                                       c.predict.n_draws, c.seed);
  } else if (std::filesystem::exists(root / "laplace.json")) {
    const json lj = read_json(root / "laplace.json");
    const auto n = static_cast<Eigen::Index>(np);
    const Gmm g({GaussianKernel{1.0, vector_from_json(lj.at("phi_map")), matrix_from_json(lj.at("sigma"), n, n)}});
    draws = sample_gmm(g, c.predict.n_draws, c.seed);
  } else {
    throw ConfigError(root.string() + " holds no posterior samples");
  }
  const Vector grid = linspace_grid(c.predict.grid_lo, c.predict.grid_hi, c.predict.grid_n);
  const auto fan = push_forward(c.network, draws, grid, c.predict.include_noise, data.noise_var, c.seed,
                                c.predict.levels, c.threads);
  save_fan(fan, root / "fan.csv", root / "fan_samples.csv");
  std::cout << "wrote " << (root / "fan.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Bayesian learning for neural network regression"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path, out_csv = "dataset.csv", run_dir;

  auto* gen = app.add_subcommand("gen-data", "Generate a boxcar dataset");
  gen->add_option("--config", config_path, "Run configuration holding data.generate");
  gen->add_option("--seed", ov.seed, "Dataset seed");
  gen->add_option("--output", out_csv, "Output CSV path (a .json sidecar is written next to it)");

  auto* run = app.add_subcommand("run", "Execute a configured pipeline");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(run, ov);
  run->add_flag("--resume", ov.resume, "Reuse intermediate artifacts whose inputs are unchanged");

  std::string gmm_path, nsbl_path, pair, grid = "-12:12:49", hyper;
  auto* surf = app.add_subcommand("surface", "Evaluate the evidence surface over two log alpha coordinates");
  surf->add_option("--gmm", gmm_path, "Likelihood mixture (gmm.json)")->required()->check(CLI::ExistingFile);
  surf->add_option("--nsbl", nsbl_path, "NSBL result (nsbl.json)")->required()->check(CLI::ExistingFile);
  surf->add_option("--pair", pair, "Two ARD parameter names, e.g. W2_11,W2_12")->required();
  surf->add_option("--grid", grid, "lo:hi:n for both axes");
  surf->add_option("--hyperprior", hyper, "Override: 'jeffreys' or 'gamma:<shape>:<rate>'");
  std::string surf_out = "surface.csv";
  surf->add_option("--output", surf_out, "Output CSV path");

  auto* rep = app.add_subcommand("report", "Print relevance and Laplace tables of a finished run");
  rep->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::size_t n_draws = 0;
  bool noise = false;
  auto* pred = app.add_subcommand("predict", "Recompute the predictive fan of a finished run");
  pred->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--draws", n_draws, "Number of posterior draws (default from the run config)");
  pred->add_flag("--include-noise", noise, "Add observation noise to every draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(config_path, ov, out_csv);
    if (*run) return cmd_run(config_path, ov);
    if (*surf) {
      const auto [a, b] = parse_pair(pair);
      const json nj = read_json(nsbl_path);
      const auto n_ard = static_cast<Eigen::Index>(nj.at("ard_parameters").size());
      std::filesystem::path p(surf_out);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      emit_surface(gmm_path, nsbl_path, a, b, parse_grid(grid), p, parse_hyperprior(hyper, n_ard));
      std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
    if (*rep) return cmd_report(run_dir);
    if (*pred) return cmd_predict(run_dir, n_draws, noise);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline failed in " << e.stage << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
