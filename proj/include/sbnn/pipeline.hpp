#pragma once

// Experiment orchestration: executes one configured pipeline end to end,
// persists every intermediate artifact and writes manifest.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "sbnn/config.hpp"
#include "sbnn/predict.hpp"
#include "sbnn/symmetry.hpp"

namespace sbnn {

inline constexpr const char* kToolVersion = "1.0.0";

/// A pipeline stage failed after the configuration was accepted.
struct PipelineError : std::runtime_error {
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string hash_json(const json& j) { return hex64(fnv1a(j.dump())); }

/// Hash of everything that influences results; output location, worker count
/// and the resume flag are excluded.
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("threads");
  j.erase("resume");
  return hash_json(j);
}

struct RunArtifacts {
  std::filesystem::path root;
  json files = json::object();

  std::filesystem::path add(const std::string& key, const std::string& relative) {
    files[key] = relative;
    return root / relative;
  }
};

// ---------------------------------------------------------------------------
// Reports

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

inline std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Table of log alpha MAP, gamma_rms and class per ARD parameter.
inline std::string relevance_table(const json& nsbl) {
  std::ostringstream os;
  os << pad("parameter", 12) << pad("log_alpha_MAP", 16) << pad("gamma_rms", 12) << "class\n";
  for (const auto& name : nsbl.at("ard_parameters")) {
    const auto n = name.get<std::string>();
    os << pad(n, 12) << pad(fixed(nsbl["log_alpha_map"][n].get<double>()), 16)
       << pad(fixed(nsbl["gamma_rms"][n].get<double>()), 12) << nsbl["classification"][n].get<std::string>() << '\n';
  }
  os << "objective " << fixed(nsbl.at("objective").get<double>(), 4) << ", log evidence "
     << fixed(nsbl.at("log_evidence").get<double>(), 4) << '\n';
  return os.str();
}

/// Laplace table before and (when present) after sparse learning.
inline std::string laplace_table_text(const json& rows) {
  auto cell = [](const json& v, int digits = 3) { return v.is_null() ? std::string("-") : fixed(v.get<double>(), digits); };
  std::ostringstream os;
  os << pad("parameter", 12) << pad("phi_MAP", 11) << pad("Sigma_ii", 11) << pad("log_alpha_MAP", 15)
     << pad("gamma_rms", 11) << pad("m_i", 11) << "P_ii\n";
  for (const auto& r : rows) {
    std::string sigma = fixed(r.at("Sigma_ii").get<double>());
    if (r.at("placeholder_variance").get<bool>()) sigma += "*";
    os << pad(r.at("name").get<std::string>(), 12) << pad(fixed(r.at("phi_map").get<double>()), 11) << pad(sigma, 11)
       << pad(cell(r.at("log_alpha_map")), 15) << pad(cell(r.at("gamma_rms")), 11) << pad(cell(r.at("m_i")), 11)
       << cell(r.at("P_ii"), 5) << '\n';
  }
  os << "* unit placeholder variance for a parameter with no curvature at the mode\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Evidence surface over a pair of log alpha coordinates

struct SurfaceGrid {
  double lo = -12.0;
  double hi = 12.0;
  int n = 49;
};

/// Rows of (log_alpha_i, log_alpha_j, log_evidence, log_hyperprior, objective)
/// with every other coordinate held at `fixed`.
inline RowMatrix evidence_surface(const Gmm& g, const PriorSpec& partition, std::size_t ard_i, std::size_t ard_j,
                                  const SurfaceGrid& grid, const AlphaVector& fixed_alpha, const Hyperprior& hp) {
  require(ard_i < partition.num_ard() && ard_j < partition.num_ard() && ard_i != ard_j,
          "surface needs two distinct ARD coordinates");
  require(grid.n >= 2 && grid.lo < grid.hi, "invalid surface grid");
  const EvidenceModel model(g, partition);
  const Vector axis = Vector::LinSpaced(grid.n, grid.lo, grid.hi);
  RowMatrix out(static_cast<Eigen::Index>(grid.n) * grid.n, 5);
  Eigen::Index r = 0;
  for (Eigen::Index a = 0; a < axis.size(); ++a)
    for (Eigen::Index b = 0; b < axis.size(); ++b) {
      Vector t = fixed_alpha.log_alpha;
      t[static_cast<Eigen::Index>(ard_i)] = axis[a];
      t[static_cast<Eigen::Index>(ard_j)] = axis[b];
      const double ev = model.log_evidence(t);
      const double h = hp.log_density(t);
      out.row(r++) << axis[a], axis[b], ev, h, ev + h;
    }
  return out;
}

inline std::vector<std::string> surface_columns() {
  return {"log_alpha_i", "log_alpha_j", "log_evidence", "log_hyperprior", "objective"};
}

/// Surface from persisted artifacts: the likelihood mixture and an NSBL
/// result providing the ARD names, the fixed MAP values and the hyperprior.
inline void emit_surface(const std::filesystem::path& gmm_path, const std::filesystem::path& nsbl_path,
                         const std::string& name_i, const std::string& name_j, const SurfaceGrid& grid,
                         const std::filesystem::path& out_csv, std::optional<Hyperprior> override_hp = std::nullopt) {
  const Gmm g = load_gmm(gmm_path);
  const json nj = read_json(nsbl_path);
  const auto names = nj.at("parameter_names").get<std::vector<std::string>>();
  const auto ard = nj.at("ard_parameters").get<std::vector<std::string>>();
  require(static_cast<Eigen::Index>(names.size()) == g.dim(), "mixture dimension does not match the NSBL result");
  PriorSpec partition;
  partition.num_params = names.size();
  std::map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < names.size(); ++k) pos[names[k]] = k;
  std::vector<bool> is_ard(names.size(), false);
  for (const auto& a : ard) {
    partition.ard_set.push_back(pos.at(a));
    is_ard[pos.at(a)] = true;
  }
  for (std::size_t k = 0; k < names.size(); ++k)
    if (!is_ard[k]) {
      partition.known_set.push_back(k);
      partition.known_prior.push_back(FlatBox{});
    }
  auto find = [&](const std::string& n) {
    auto it = std::find(ard.begin(), ard.end(), n);
    if (it == ard.end()) throw InvalidArgument("'" + n + "' is not an ARD parameter of this run");
    return static_cast<std::size_t>(it - ard.begin());
  };
  const std::size_t i = find(name_i);
  const std::size_t j = find(name_j);
  Vector fixed_t(static_cast<Eigen::Index>(ard.size()));
  for (std::size_t k = 0; k < ard.size(); ++k) fixed_t[static_cast<Eigen::Index>(k)] = nj["log_alpha_map"][ard[k]].get<double>();
  Hyperprior hp = Hyperprior::jeffreys(fixed_t.size());
  if (override_hp) {
    hp = *override_hp;
  } else if (nj.contains("hyperprior") && nj["hyperprior"].at("mode") == "gamma") {
    hp = Hyperprior::gamma(fixed_t.size(), nj["hyperprior"]["shape"].get<double>(), nj["hyperprior"]["rate"].get<double>());
  }
  hp.validate(fixed_t.size());
  const auto surface =
      evidence_surface(g, partition, i, j, grid, AlphaVector(fixed_t, -1e300, 1e300), hp);
  write_csv(out_csv, surface_columns(), surface);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace pipeline_detail {

inline std::vector<std::string> sample_columns(const std::vector<std::string>& names) {
  auto cols = names;
  cols.push_back("log_likelihood");
  cols.push_back("log_prior");
  return cols;
}

inline json stages_json(const TmcmcResult& r) {
  json s = json::array();
  for (const auto& st : r.stages)
    s.push_back({{"beta", st.beta},
                 {"log_mean_weight", st.log_mean_weight},
                 {"acc_rate", st.acceptance_rate},
                 {"proposal_scale", st.proposal_scale}});
  return s;
}

inline void save_tmcmc(const TmcmcResult& r, const std::vector<std::string>& names, const std::string& upstream,
                       RunArtifacts& art, const std::string& prefix) {
  const auto n = r.samples.rows();
  const auto d = r.samples.cols();
  RowMatrix table(n, d + 2);
  table.leftCols(d) = r.samples;
  table.col(d) = r.log_likelihood;
  table.col(d + 1) = r.log_prior;
  write_csv(art.add(prefix + "_samples", prefix + "_samples.csv"), sample_columns(names), table);
  std::ofstream trace(art.add(prefix + "_trace", prefix + "_stages.jsonl"));
  write_stage_trace(trace, r);
  write_json(art.add(prefix + "_state", prefix + "_state.json"),
             {{"upstream_hash", upstream},
              {"log_evidence", r.log_evidence},
              {"reached_final", r.reached_final},
              {"stages", stages_json(r)}});
}

inline std::optional<TmcmcResult> load_tmcmc(const std::filesystem::path& root, const std::string& prefix,
                                             const std::string& upstream, std::size_t dim) {
  const auto csv = root / (prefix + "_samples.csv");
  const auto state = root / (prefix + "_state.json");
  if (!std::filesystem::exists(csv) || !std::filesystem::exists(state)) return std::nullopt;
  const json s = read_json(state);
  if (s.value("upstream_hash", std::string()) != upstream) return std::nullopt;
  const auto m = read_csv(csv);
  if (m.values.cols() != static_cast<Eigen::Index>(dim + 2)) return std::nullopt;
  TmcmcResult r;
  const auto d = static_cast<Eigen::Index>(dim);
  r.samples = m.values.leftCols(d);
  r.log_likelihood = m.values.col(d);
  r.log_prior = m.values.col(d + 1);
  r.log_evidence = s.at("log_evidence").get<double>();
  r.reached_final = s.at("reached_final").get<bool>();
  for (const auto& st : s.at("stages"))
    r.stages.push_back({st.at("beta").get<double>(), st.at("log_mean_weight").get<double>(),
                        st.at("acc_rate").get<double>(), st.at("proposal_scale").get<double>()});
  return r;
}

/// Likelihood x known prior, with ARD parameters under the flat sampling box.
struct SamplingTarget {
  const Dataset* data;
  const NetworkSpec* spec;
  std::vector<KnownPrior> priors;

  double log_prior(const Vector& phi) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < priors.size(); ++i) {
      lp += log_density(priors[i], phi[static_cast<Eigen::Index>(i)]);
      if (!std::isfinite(lp)) return kNegInf;
    }
    return lp;
  }
  Vector log_prior_gradient(const Vector& phi) const {
    Vector g = Vector::Zero(phi.size());
    for (std::size_t i = 0; i < priors.size(); ++i)
      if (const auto* gp = std::get_if<GaussianPrior>(&priors[i]))
        g[static_cast<Eigen::Index>(i)] = -(phi[static_cast<Eigen::Index>(i)] - gp->mean) / gp->var;
    return g;
  }
  Vector draw(Rng& rng) const {
    Vector v(static_cast<Eigen::Index>(priors.size()));
    for (std::size_t i = 0; i < priors.size(); ++i) v[static_cast<Eigen::Index>(i)] = sbnn::draw(priors[i], rng);
    return v;
  }
  double log_likelihood(const Vector& phi) const { return sbnn::log_likelihood(*data, *spec, phi); }
};

inline RowMatrix pick_rows(const RowMatrix& samples, std::size_t n, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(samples.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_stream(seed, "predict-draws");
  std::shuffle(idx.begin(), idx.end(), rng);
  RowMatrix out(static_cast<Eigen::Index>(n), samples.cols());
  for (std::size_t r = 0; r < n; ++r) out.row(static_cast<Eigen::Index>(r)) = samples.row(idx[r % idx.size()]);
  return out;
}

inline json gmm_report_json(const GmmFitReport& rep, const std::string& upstream) {
  json cands = json::array();
  for (const auto& c : rep.candidates)
    cands.push_back({{"k", c.k},
                     {"bic", c.bic ? json(*c.bic) : json(nullptr)},
                     {"log_likelihood", c.bic ? json(c.log_likelihood) : json(nullptr)},
                     {"iterations", c.iterations}});
  return {{"upstream_hash", upstream}, {"selected_k", rep.selected_k}, {"bic", rep.bic}, {"candidates", cands}};
}

inline json hyperprior_json(const RunConfig& c) {
  if (!c.nsbl || c.nsbl->hyperprior == Hyperprior::Mode::jeffreys) return {{"mode", "jeffreys"}};
  return {{"mode", "gamma"}, {"shape", c.nsbl->shape}, {"rate", c.nsbl->rate}};
}

}  // namespace pipeline_detail

/// In-memory products of a run, for callers that drive pipelines directly.
struct RunOutputs {
  json manifest;
  Dataset data;
  std::optional<TmcmcResult> tmcmc;
  std::optional<Gmm> likelihood_gmm;
  std::optional<NsblResult> nsbl;
  std::optional<HierResult> hier;
  std::optional<LaplaceFit> laplace;
  std::optional<PredictiveFan> fan;
  std::optional<ExtrapolationMetrics> metrics;
};

/// Runs the configured pipeline. Artifacts and manifest.json land in
/// config.output_dir; on a stage failure the manifest records it and a
/// PipelineError is thrown with partial artifacts left in place.
inline RunOutputs run_pipeline(const RunConfig& cfg) {
  using namespace pipeline_detail;
  using clock = std::chrono::steady_clock;
  cfg.validate();
  RunOutputs out;
  RunArtifacts art{cfg.output_dir};
  std::filesystem::create_directories(art.root);

  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["versions"] = {{"sbnn", kToolVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["method"] = to_string(cfg.method);
  manifest["status"] = "running";
  json summary = json::object();
  json timings = json::object();
  write_json(art.add("config", "config.json"), to_json(cfg));

  std::string stage = "data";
  auto t0 = clock::now();
  auto lap = [&](const std::string& name) {
    const auto t1 = clock::now();
    timings[name] = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
  };
  auto finish = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["artifacts"] = art.files;
    manifest["summary"] = summary;
    manifest["timings"] = timings;
    write_json(art.root / "manifest.json", manifest);
  };

  try {
    // --- data
    if (cfg.data.generate) {
      out.data = generate_boxcar_dataset(*cfg.data.generate);
      save_dataset(out.data, art.add("dataset", "dataset.csv"), *cfg.data.generate);
    } else {
      out.data = load_dataset(*cfg.data.load);
      save_dataset(out.data, art.add("dataset", "dataset.csv"));
    }
    art.files["dataset_sidecar"] = "dataset.json";
    lap("data");

    const NetworkSpec& spec = cfg.network;
    const ParamLayout layout(spec);
    const auto names = layout.names();
    const PriorSpec partition = cfg.prior_spec();
    SamplingTarget target{&out.data, &spec, partition.sampling_prior()};
    std::function<double(double)> truth;
    if (out.data.truth_fn_id == kBoxcarTruthId) truth = boxcar_truth;

    json upstream_j = to_json(cfg);
    for (const char* k : {"output_dir", "threads", "resume", "gmm", "nsbl", "hier", "laplace", "predict", "method"})
      upstream_j.erase(k);
    const std::string sampling_hash = hash_json(upstream_j);

    // --- posterior samples / approximation
    std::optional<RowMatrix> draws;  // parameter draws for the predictive fan
    auto run_sampling = [&]() -> TmcmcResult {
      stage = "tmcmc";
      TmcmcConfig tc = *cfg.tmcmc;
      tc.seed = cfg.seed;
      tc.threads = cfg.threads;
      std::optional<TmcmcResult> r;
      if (cfg.resume) r = load_tmcmc(art.root, "tmcmc", sampling_hash, layout.size());
      const bool resumed = r.has_value();
      if (!r)
        r = tmcmc_sample([&](Rng& rng) { return target.draw(rng); },
                         [&](const Vector& p) { return target.log_prior(p); },
                         [&](const Vector& p) { return target.log_likelihood(p); }, tc);
      save_tmcmc(*r, names, sampling_hash, art, "tmcmc");
      summary["tmcmc"] = {{"log_evidence", r->log_evidence},
                          {"stages", r->stages.size()},
                          {"reached_final", r->reached_final},
                          {"final_acceptance", r->stages.empty() ? 0.0 : r->stages.back().acceptance_rate},
                          {"resumed", resumed}};
      if (!r->reached_final) throw NumericalError("TMCMC did not reach beta = 1 within max_stages");
      lap("tmcmc");
      return *r;
    };

    auto run_nsbl = [&](const Gmm& g) {
      stage = "nsbl";
      NsblOptions opt = cfg.nsbl->options;
      opt.seed = cfg.seed;
      NsblResult r = optimize_alpha(g, cfg.hyperprior(), partition, opt);
      save_gmm(r.posterior, art.add("posterior_gmm", "posterior_gmm.json"));
      json nj = to_json(r, partition, names, "posterior_gmm.json");
      nj["parameter_names"] = names;
      nj["hyperprior"] = hyperprior_json(cfg);
      write_json(art.add("nsbl", "nsbl.json"), nj);
      std::ofstream(art.add("nsbl_table", "nsbl_table.txt")) << relevance_table(nj);
      json table = json::object();
      for (const auto& n : nj["ard_parameters"]) {
        const auto s = n.get<std::string>();
        table[s] = {{"log_alpha_map", nj["log_alpha_map"][s]},
                    {"gamma_rms", nj["gamma_rms"][s]},
                    {"class", nj["classification"][s]}};
      }
      summary["nsbl"] = {{"objective", r.objective},
                         {"log_evidence", r.log_evidence},
                         {"converged", r.converged},
                         {"distinct_optima", r.distinct_optima.size()},
                         {"gamma_table", table}};
      if (cfg.predict.enabled) {
        draws = sample_posterior(r.posterior, cfg.predict.n_draws, cfg.seed);
        write_csv(art.add("posterior_samples", "posterior_samples.csv"), names, *draws);
      }
      lap("nsbl");
      return r;
    };

    auto laplace_target = [&]() {
      LogTarget f;
      f.value = [&](const Vector& p) {
        const double lp = target.log_prior(p);
        return std::isfinite(lp) ? lp + target.log_likelihood(p) : kNegInf;
      };
      f.gradient = [&](const Vector& p) {
        return Vector(log_likelihood_gradient(out.data, spec, p) + target.log_prior_gradient(p));
      };
      const auto np = static_cast<Eigen::Index>(target.priors.size());
      f.lower = Vector::Constant(np, -kInf);
      f.upper = Vector::Constant(np, kInf);
      for (Eigen::Index i = 0; i < np; ++i)
        if (const auto* box = std::get_if<FlatBox>(&target.priors[static_cast<std::size_t>(i)])) {
          f.lower[i] = box->lo;
          f.upper[i] = box->hi;
        }
      return f;
    };

    auto run_laplace = [&]() {
      stage = "laplace";
      ParamVector start(spec);
      if (cfg.laplace->start.boxcar_mode) start = boxcar_mode(spec, *cfg.laplace->start.boxcar_mode);
      for (const auto& [name, v] : cfg.laplace->start.values) start[name] = v;
      LaplaceFit fit = laplace_fit(laplace_target(), start.values, cfg.laplace->solver);
      summary["laplace"] = {{"converged", fit.converged},
                            {"gradient_norm", fit.gradient_norm},
                            {"regularized", fit.regularized},
                            {"placeholders", static_cast<int>(std::count(fit.placeholder.begin(), fit.placeholder.end(), true))},
                            {"at_bound", static_cast<int>(std::count(fit.at_bound.begin(), fit.at_bound.end(), true))}};
      lap("laplace");
      return fit;
    };

    auto write_laplace = [&](const LaplaceFit& fit, const NsblResult* sparse) {
      const auto rows = laplace_table(fit, names, sparse, sparse ? &partition : nullptr);
      std::vector<std::string> bound_names;
      for (std::size_t i = 0; i < fit.at_bound.size(); ++i)
        if (fit.at_bound[i]) bound_names.push_back(names[i]);
      json lj = {{"parameter_names", names},
                 {"mode_seed", to_json(fit.mode_seed)},
                 {"phi_map", to_json(fit.phi_map)},
                 {"converged", fit.converged},
                 {"regularized", fit.regularized},
                 {"gradient_norm", fit.gradient_norm},
                 {"at_bound", bound_names},
                 {"hessian_asymmetry", fit.hessian_asymmetry},
                 {"sigma", to_json(fit.sigma)},
                 {"table", to_json(rows)}};
      write_json(art.add("laplace", "laplace.json"), lj);
      std::ofstream(art.add("laplace_table", "laplace_table.txt")) << laplace_table_text(lj["table"]);
    };

    switch (cfg.method) {
      case Method::standard: {
        out.tmcmc = run_sampling();
        if (cfg.predict.enabled) draws = pick_rows(out.tmcmc->samples, cfg.predict.n_draws, cfg.seed);
        break;
      }
      case Method::nsbl: {
        out.tmcmc = run_sampling();
        stage = "gmm";
        GmmFitOptions go = cfg.gmm->fit;
        go.seed = cfg.seed;
        go.threads = cfg.threads;
        json gmm_key = to_json(cfg)["gmm"];
        const std::string gmm_hash = hash_json({{"sampling", sampling_hash}, {"gmm", gmm_key}});
        std::optional<Gmm> g;
        const auto gmm_path = art.root / "gmm.json";
        const auto report_path = art.root / "gmm_report.json";
        if (cfg.resume && std::filesystem::exists(gmm_path) && std::filesystem::exists(report_path) &&
            read_json(report_path).value("upstream_hash", std::string()) == gmm_hash) {
          g = load_gmm(gmm_path);
          summary["gmm"] = {{"selected_k", static_cast<int>(g->size())}, {"resumed", true}};
          art.add("gmm", "gmm.json");
          art.add("gmm_report", "gmm_report.json");
        } else {
          RowMatrix fit_samples = out.tmcmc->samples;
          if (cfg.gmm->relabel && spec.num_layers() == 2)
            relabel_samples(spec, fit_samples, out.tmcmc->log_likelihood + out.tmcmc->log_prior);
          const auto rep = fit_gmm_report(fit_samples, go);
          g = rep.gmm;
          save_gmm(*g, art.add("gmm", "gmm.json"));
          write_json(art.add("gmm_report", "gmm_report.json"), gmm_report_json(rep, gmm_hash));
          summary["gmm"] = {{"selected_k", rep.selected_k}, {"bic", rep.bic}, {"resumed", false}};
        }
        out.likelihood_gmm = *g;
        lap("gmm");
        out.nsbl = run_nsbl(*g);
        break;
      }
      case Method::hier: {
        stage = "hier";
        HierConfig hc = *cfg.hier;
        hc.tmcmc.seed = cfg.seed;
        hc.tmcmc.threads = cfg.threads;
        out.hier = run_hierarchical(out.data, spec, partition, hc);
        const auto& r = *out.hier;
        std::vector<std::string> cols = names;
        std::vector<std::string> alpha_cols;
        for (auto i : partition.ard_set) alpha_cols.push_back("log_alpha_" + names[i]);
        cols.insert(cols.end(), alpha_cols.begin(), alpha_cols.end());
        RowMatrix table(r.phi_samples.rows(), r.phi_samples.cols() + r.log_alpha_samples.cols());
        table << r.phi_samples, r.log_alpha_samples;
        write_csv(art.add("hier_samples", "hier_samples.csv"), cols, table);
        std::ofstream trace(art.add("hier_trace", "hier_stages.jsonl"));
        write_stage_trace(trace, r.tmcmc);
        write_json(art.add("hier_summary", "hier_summary.json"),
                   {{"log_evidence", r.tmcmc.log_evidence},
                    {"reached_final", r.tmcmc.reached_final},
                    {"quantiles", column_summary(table, cols)}});
        summary["hier"] = {{"log_evidence", r.tmcmc.log_evidence},
                           {"stages", r.tmcmc.stages.size()},
                           {"reached_final", r.tmcmc.reached_final}};
        if (!r.tmcmc.reached_final) throw NumericalError("TMCMC did not reach beta = 1 within max_stages");
        lap("hier");
        if (cfg.predict.enabled) draws = pick_rows(r.phi_samples, cfg.predict.n_draws, cfg.seed);
        break;
      }
      case Method::laplace: {
        out.laplace = run_laplace();
        write_laplace(*out.laplace, nullptr);
        if (cfg.predict.enabled && out.laplace->converged)
          draws = sample_gmm(laplace_kernel(*out.laplace), cfg.predict.n_draws, cfg.seed);
        break;
      }
      case Method::laplace_nsbl: {
        out.laplace = run_laplace();
        write_laplace(*out.laplace, nullptr);
        stage = "laplace";
        const Gmm kernel = laplace_kernel(*out.laplace);
        save_gmm(kernel, art.add("gmm", "gmm.json"));
        out.likelihood_gmm = kernel;
        out.nsbl = run_nsbl(kernel);
        write_laplace(*out.laplace, &*out.nsbl);
        break;
      }
    }

    // --- predictive fan
    if (cfg.predict.enabled && draws) {
      stage = "predict";
      const Vector grid = linspace_grid(cfg.predict.grid_lo, cfg.predict.grid_hi, cfg.predict.grid_n);
      out.fan = push_forward(spec, *draws, grid, cfg.predict.include_noise, out.data.noise_var, cfg.seed,
                             cfg.predict.levels, cfg.threads);
      save_fan(*out.fan, art.add("fan", "fan.csv"), art.add("fan_samples", "fan_samples.csv"));
      if (truth) {
        out.metrics = extrapolation_metrics(*out.fan, truth, out.data.x.minCoeff(), out.data.x.maxCoeff());
        summary["predict"] = {{"rmse_in", out.metrics->rmse_in},
                              {"rmse_out", out.metrics->rmse_out},
                              {"band_width_out", out.metrics->band_width_out}};
      }
      lap("predict");
    }
  } catch (const std::exception& e) {
    manifest["error"] = {{"stage", stage}, {"message", e.what()}};
    finish("failed");
    out.manifest = manifest;
    throw PipelineError(stage, e.what());
  }
  finish("ok");
  out.manifest = manifest;
  return out;
}

/// Manifest without the wall-clock section, for determinism comparisons.
inline json manifest_without_timings(json m) {
  m.erase("timings");
  return m;
}

}  // namespace sbnn
