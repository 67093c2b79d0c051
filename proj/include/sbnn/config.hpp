#pragma once

// Run configuration: a single versioned JSON document. Parsing fills every
// default so that serialize(parse(x)) is a complete, canonical description.

#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "sbnn/boxcar.hpp"
#include "sbnn/gmm.hpp"
#include "sbnn/hier.hpp"
#include "sbnn/io.hpp"
#include "sbnn/laplace.hpp"
#include "sbnn/nsbl.hpp"
#include "sbnn/tmcmc.hpp"

namespace sbnn {

inline constexpr int kSchemaVersion = 1;

/// Raised for anything wrong with a configuration document.
struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

enum class Method { standard, nsbl, hier, laplace, laplace_nsbl };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::standard: return "standard";
    case Method::nsbl: return "nsbl";
    case Method::hier: return "hier";
    case Method::laplace: return "laplace";
    case Method::laplace_nsbl: return "laplace-nsbl";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "standard") return Method::standard;
  if (s == "nsbl") return Method::nsbl;
  if (s == "hier") return Method::hier;
  if (s == "laplace") return Method::laplace;
  if (s == "laplace-nsbl") return Method::laplace_nsbl;
  throw ConfigError("unknown method '" + s + "'");
}

struct DataSource {
  std::optional<BoxcarSettings> generate;
  std::optional<std::string> load;
};

struct KnownPriorEntry {
  std::string name;
  KnownPrior prior;
};

struct PriorConfig {
  FlatBox flat_box{};                   // prior of ARD parameters while sampling
  std::vector<KnownPriorEntry> known;   // everything else is ARD
};

struct GmmConfig {
  GmmFitOptions fit{};
  bool relabel = true;  // pivot relabeling of hidden-unit symmetries before fitting
};

struct NsblConfig {
  NsblOptions options{};
  Hyperprior::Mode hyperprior = Hyperprior::Mode::jeffreys;
  double shape = 0.0;
  double rate = 0.0;
};

struct LaplaceStart {
  std::optional<int> boxcar_mode;
  std::vector<std::pair<std::string, double>> values;  // unnamed parameters start at 0
};

struct LaplaceRunConfig {
  LaplaceConfig solver{};
  LaplaceStart start{5, {}};
};

struct PredictConfig {
  bool enabled = true;
  std::size_t n_draws = 1000;
  double grid_lo = -5.0;
  double grid_hi = 5.0;
  int grid_n = 201;
  bool include_noise = false;
  std::vector<double> levels{0.5, 0.95};
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  unsigned threads = 1;
  DataSource data{BoxcarSettings{}, std::nullopt};
  NetworkSpec network{};
  Method method = Method::nsbl;
  PriorConfig prior{};
  std::optional<TmcmcConfig> tmcmc;
  std::optional<GmmConfig> gmm;
  std::optional<NsblConfig> nsbl;
  std::optional<HierConfig> hier;
  std::optional<LaplaceRunConfig> laplace;
  PredictConfig predict{};
  bool resume = false;

  void validate() const;
  PriorSpec prior_spec() const;
  Hyperprior hyperprior() const;
};

namespace config_detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline json prior_json(const KnownPrior& p) {
  if (const auto* b = std::get_if<FlatBox>(&p)) return {{"type", "flat"}, {"lo", b->lo}, {"hi", b->hi}};
  const auto& g = std::get<GaussianPrior>(p);
  return {{"type", "gaussian"}, {"mean", g.mean}, {"var", g.var}};
}

inline KnownPrior prior_from(const json& j, const std::string& where) {
  check_keys(j, where, {"type", "lo", "hi", "mean", "var"});
  std::string type;
  read(j, "type", type, where);
  if (type == "flat") {
    FlatBox b;
    read(j, "lo", b.lo, where);
    read(j, "hi", b.hi, where);
    return b;
  }
  if (type == "gaussian") {
    GaussianPrior g;
    read(j, "mean", g.mean, where);
    read(j, "var", g.var, where);
    if (!(g.var > 0)) throw ConfigError(where + ".var must be positive");
    return g;
  }
  throw ConfigError(where + ".type must be 'flat' or 'gaussian'");
}

inline json tmcmc_json(const TmcmcConfig& c) {
  return {{"n_samples", c.n_samples},       {"target_cov", c.target_cov},
          {"proposal_scale", c.proposal_scale}, {"max_stages", c.max_stages},
          {"mh_steps", c.mh_steps},         {"adaptive_scale", c.adaptive_scale},
          {"target_acceptance", c.target_acceptance}};
}

inline TmcmcConfig tmcmc_from(const json& j, const std::string& where, TmcmcConfig c) {
  check_keys(j, where,
             {"n_samples", "target_cov", "proposal_scale", "max_stages", "mh_steps", "adaptive_scale",
              "target_acceptance"});
  read(j, "n_samples", c.n_samples, where);
  read(j, "target_cov", c.target_cov, where);
  read(j, "proposal_scale", c.proposal_scale, where);
  read(j, "max_stages", c.max_stages, where);
  read(j, "mh_steps", c.mh_steps, where);
  read(j, "adaptive_scale", c.adaptive_scale, where);
  read(j, "target_acceptance", c.target_acceptance, where);
  return c;
}

}  // namespace config_detail

/// Desk-scale sampler defaults: 20k samples for standard/NSBL runs, 50k for
/// the hierarchical run, adaptive proposal scaling with 5 moves per stage.
inline TmcmcConfig default_run_tmcmc(std::size_t n) {
  TmcmcConfig c;
  c.n_samples = n;
  c.mh_steps = 5;
  c.adaptive_scale = true;
  return c;
}

inline json to_json(const RunConfig& c) {
  using namespace config_detail;
  json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  if (c.data.generate) {
    const auto& g = *c.data.generate;
    j["data"] = {{"generate", {{"n", g.n}, {"x_lo", g.x_lo}, {"x_hi", g.x_hi}, {"noise_var", g.noise_var}, {"seed", g.seed}}}};
  } else {
    j["data"] = {{"load", *c.data.load}};
  }
  j["network"] = {{"layer_sizes", c.network.layer_sizes}, {"activation", to_string(c.network.activation)}};
  j["method"] = to_string(c.method);
  json known = json::array();
  for (const auto& k : c.prior.known) {
    json e = prior_json(k.prior);
    known.push_back({{"name", k.name}, {"prior", e}});
  }
  j["prior"] = {{"flat_box", {c.prior.flat_box.lo, c.prior.flat_box.hi}}, {"known", known}};
  if (c.tmcmc) j["tmcmc"] = tmcmc_json(*c.tmcmc);
  if (c.gmm) {
    const auto& f = c.gmm->fit;
    j["gmm"] = {{"k_candidates", f.k_candidates},   {"n_restarts", f.n_restarts},
                {"max_iterations", f.max_iterations}, {"rel_tolerance", f.rel_tolerance},
                {"covariance_floor", f.covariance_floor}, {"kmeans_iterations", f.kmeans_iterations},
                {"relabel", c.gmm->relabel}};
  }
  if (c.nsbl) {
    const auto& o = c.nsbl->options;
    json hp = {{"mode", c.nsbl->hyperprior == Hyperprior::Mode::jeffreys ? "jeffreys" : "gamma"}};
    if (c.nsbl->hyperprior == Hyperprior::Mode::gamma) {
      hp["shape"] = c.nsbl->shape;
      hp["rate"] = c.nsbl->rate;
    }
    j["nsbl"] = {{"hyperprior", hp},
                 {"n_starts", o.n_starts},
                 {"start_lo", o.start_lo},
                 {"start_hi", o.start_hi},
                 {"log_alpha_lo", o.log_alpha_lo},
                 {"log_alpha_hi", o.log_alpha_hi},
                 {"distinct_gap", o.distinct_gap},
                 {"irrelevant_below", o.thresholds.irrelevant_below},
                 {"relevant_above", o.thresholds.relevant_above},
                 {"trust_region",
                  {{"gradient_tolerance", o.trust_region.gradient_tolerance},
                   {"min_radius", o.trust_region.min_radius},
                   {"max_iterations", o.trust_region.max_iterations},
                   {"initial_radius", o.trust_region.initial_radius},
                   {"max_radius", o.trust_region.max_radius},
                   {"accept_ratio", o.trust_region.accept_ratio}}}};
  }
  if (c.hier)
    j["hier"] = {{"gamma_shape", c.hier->gamma_shape},
                 {"gamma_rate", c.hier->gamma_rate},
                 {"log_alpha_box", {c.hier->log_alpha_lo, c.hier->log_alpha_hi}},
                 {"tmcmc", tmcmc_json(c.hier->tmcmc)}};
  if (c.laplace) {
    json start = json::object();
    if (c.laplace->start.boxcar_mode) start["boxcar_mode"] = *c.laplace->start.boxcar_mode;
    json vals = json::object();
    for (const auto& [k, v] : c.laplace->start.values) vals[k] = v;
    start["values"] = vals;
    const auto& s = c.laplace->solver;
    j["laplace"] = {{"start", start},
                    {"max_iterations", s.max_iterations},
                    {"gradient_tolerance", s.gradient_tolerance},
                    {"newton", s.newton},
                    {"fd_relative_step", s.fd_relative_step},
                    {"nonidentifiable_tolerance", s.nonidentifiable_tolerance}};
  }
  const auto& p = c.predict;
  j["predict"] = {{"enabled", p.enabled},     {"n_draws", p.n_draws},
                  {"grid", {p.grid_lo, p.grid_hi, p.grid_n}},
                  {"include_noise", p.include_noise}, {"levels", p.levels}};
  j["resume"] = c.resume;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  using namespace config_detail;
  check_keys(j, "config",
             {"schema_version", "seed", "output_dir", "threads", "data", "network", "method", "prior", "tmcmc", "gmm",
              "nsbl", "hier", "laplace", "predict", "resume"});
  RunConfig c;
  if (!j.contains("schema_version")) throw ConfigError("config.schema_version is required");
  read(j, "schema_version", c.schema_version, "config");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
  if (!j.contains("method")) throw ConfigError("config.method is required");
  std::string method;
  read(j, "method", method, "config");
  c.method = method_from_string(method);
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "threads", c.threads, "config");
  read(j, "resume", c.resume, "config");

  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data", {"generate", "load"});
    if (d.contains("generate") == d.contains("load")) throw ConfigError("data needs exactly one of 'generate' or 'load'");
    c.data = {};
    if (d.contains("generate")) {
      const json& g = d["generate"];
      check_keys(g, "data.generate", {"n", "x_lo", "x_hi", "noise_var", "seed"});
      BoxcarSettings s;
      s.seed = c.seed;
      read(g, "n", s.n, "data.generate");
      read(g, "x_lo", s.x_lo, "data.generate");
      read(g, "x_hi", s.x_hi, "data.generate");
      read(g, "noise_var", s.noise_var, "data.generate");
      read(g, "seed", s.seed, "data.generate");
      c.data.generate = s;
    } else {
      std::string path;
      read(d, "load", path, "data");
      c.data.load = path;
    }
  } else if (c.data.generate) {
    c.data.generate->seed = c.seed;
  }

  if (j.contains("network")) {
    const json& n = j["network"];
    check_keys(n, "network", {"layer_sizes", "activation"});
    read(n, "layer_sizes", c.network.layer_sizes, "network");
    std::string act = to_string(c.network.activation);
    read(n, "activation", act, "network");
    try {
      c.network.activation = activation_from_string(act);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("network.activation: ") + e.what());
    }
  }

  if (j.contains("prior")) {
    const json& p = j["prior"];
    check_keys(p, "prior", {"flat_box", "known"});
    if (p.contains("flat_box")) {
      std::vector<double> box;
      read(p, "flat_box", box, "prior");
      if (box.size() != 2) throw ConfigError("prior.flat_box must be [lo, hi]");
      c.prior.flat_box = {box[0], box[1]};
    }
    if (p.contains("known")) {
      if (!p["known"].is_array()) throw ConfigError("prior.known must be an array");
      for (const auto& e : p["known"]) {
        check_keys(e, "prior.known[]", {"name", "prior"});
        KnownPriorEntry k;
        read(e, "name", k.name, "prior.known[]");
        if (!e.contains("prior")) throw ConfigError("prior.known[] needs a 'prior'");
        k.prior = prior_from(e["prior"], "prior.known[].prior");
        c.prior.known.push_back(k);
      }
    }
  }

  if (j.contains("tmcmc")) c.tmcmc = tmcmc_from(j["tmcmc"], "tmcmc", default_run_tmcmc(20000));
  if (j.contains("gmm")) {
    const json& g = j["gmm"];
    check_keys(g, "gmm",
               {"k_candidates", "n_restarts", "max_iterations", "rel_tolerance", "covariance_floor",
                "kmeans_iterations", "relabel"});
    GmmConfig gc;
    read(g, "k_candidates", gc.fit.k_candidates, "gmm");
    read(g, "n_restarts", gc.fit.n_restarts, "gmm");
    read(g, "max_iterations", gc.fit.max_iterations, "gmm");
    read(g, "rel_tolerance", gc.fit.rel_tolerance, "gmm");
    read(g, "covariance_floor", gc.fit.covariance_floor, "gmm");
    read(g, "kmeans_iterations", gc.fit.kmeans_iterations, "gmm");
    read(g, "relabel", gc.relabel, "gmm");
    c.gmm = gc;
  }
  if (j.contains("nsbl")) {
    const json& s = j["nsbl"];
    check_keys(s, "nsbl",
               {"hyperprior", "n_starts", "start_lo", "start_hi", "log_alpha_lo", "log_alpha_hi", "distinct_gap",
                "irrelevant_below", "relevant_above", "trust_region"});
    NsblConfig nc;
    auto& o = nc.options;
    if (s.contains("hyperprior")) {
      const json& h = s["hyperprior"];
      check_keys(h, "nsbl.hyperprior", {"mode", "shape", "rate"});
      std::string mode = "jeffreys";
      read(h, "mode", mode, "nsbl.hyperprior");
      if (mode == "gamma") {
        nc.hyperprior = Hyperprior::Mode::gamma;
        if (!h.contains("shape") || !h.contains("rate")) throw ConfigError("gamma hyperprior needs shape and rate");
        read(h, "shape", nc.shape, "nsbl.hyperprior");
        read(h, "rate", nc.rate, "nsbl.hyperprior");
      } else if (mode != "jeffreys") {
        throw ConfigError("nsbl.hyperprior.mode must be 'jeffreys' or 'gamma'");
      }
    }
    read(s, "n_starts", o.n_starts, "nsbl");
    read(s, "start_lo", o.start_lo, "nsbl");
    read(s, "start_hi", o.start_hi, "nsbl");
    read(s, "log_alpha_lo", o.log_alpha_lo, "nsbl");
    read(s, "log_alpha_hi", o.log_alpha_hi, "nsbl");
    read(s, "distinct_gap", o.distinct_gap, "nsbl");
    read(s, "irrelevant_below", o.thresholds.irrelevant_below, "nsbl");
    read(s, "relevant_above", o.thresholds.relevant_above, "nsbl");
    if (s.contains("trust_region")) {
      const json& t = s["trust_region"];
      check_keys(t, "nsbl.trust_region",
                 {"gradient_tolerance", "min_radius", "max_iterations", "initial_radius", "max_radius", "accept_ratio"});
      auto& tr = o.trust_region;
      read(t, "gradient_tolerance", tr.gradient_tolerance, "nsbl.trust_region");
      read(t, "min_radius", tr.min_radius, "nsbl.trust_region");
      read(t, "max_iterations", tr.max_iterations, "nsbl.trust_region");
      read(t, "initial_radius", tr.initial_radius, "nsbl.trust_region");
      read(t, "max_radius", tr.max_radius, "nsbl.trust_region");
      read(t, "accept_ratio", tr.accept_ratio, "nsbl.trust_region");
    }
    c.nsbl = nc;
  }
  if (j.contains("hier")) {
    const json& h = j["hier"];
    check_keys(h, "hier", {"gamma_shape", "gamma_rate", "log_alpha_box", "tmcmc"});
    HierConfig hc;
    hc.tmcmc = default_run_tmcmc(50000);
    read(h, "gamma_shape", hc.gamma_shape, "hier");
    read(h, "gamma_rate", hc.gamma_rate, "hier");
    if (h.contains("log_alpha_box")) {
      std::vector<double> box;
      read(h, "log_alpha_box", box, "hier");
      if (box.size() != 2) throw ConfigError("hier.log_alpha_box must be [lo, hi]");
      hc.log_alpha_lo = box[0];
      hc.log_alpha_hi = box[1];
    }
    if (h.contains("tmcmc")) hc.tmcmc = tmcmc_from(h["tmcmc"], "hier.tmcmc", hc.tmcmc);
    c.hier = hc;
  }
  if (j.contains("laplace")) {
    const json& l = j["laplace"];
    check_keys(l, "laplace",
               {"start", "max_iterations", "gradient_tolerance", "newton", "fd_relative_step", "nonidentifiable_tolerance"});
    LaplaceRunConfig lc;
    if (l.contains("start")) {
      const json& s = l["start"];
      check_keys(s, "laplace.start", {"boxcar_mode", "values"});
      lc.start.boxcar_mode.reset();
      if (s.contains("boxcar_mode") && !s["boxcar_mode"].is_null()) {
        int m = 0;
        read(s, "boxcar_mode", m, "laplace.start");
        lc.start.boxcar_mode = m;
      }
      if (s.contains("values")) {
        if (!s["values"].is_object()) throw ConfigError("laplace.start.values must be an object");
        for (auto it = s["values"].begin(); it != s["values"].end(); ++it) {
          if (!it.value().is_number()) throw ConfigError("laplace.start.values entries must be numbers");
          lc.start.values.emplace_back(it.key(), it.value().get<double>());
        }
      }
    }
    read(l, "max_iterations", lc.solver.max_iterations, "laplace");
    read(l, "gradient_tolerance", lc.solver.gradient_tolerance, "laplace");
    read(l, "newton", lc.solver.newton, "laplace");
    read(l, "fd_relative_step", lc.solver.fd_relative_step, "laplace");
    read(l, "nonidentifiable_tolerance", lc.solver.nonidentifiable_tolerance, "laplace");
    c.laplace = lc;
  }
  if (j.contains("predict")) {
    const json& p = j["predict"];
    check_keys(p, "predict", {"enabled", "n_draws", "grid", "include_noise", "levels"});
    auto& pc = c.predict;
    read(p, "enabled", pc.enabled, "predict");
    read(p, "n_draws", pc.n_draws, "predict");
    read(p, "include_noise", pc.include_noise, "predict");
    read(p, "levels", pc.levels, "predict");
    if (p.contains("grid")) {
      const json& g = p["grid"];
      if (!g.is_array() || g.size() != 3) throw ConfigError("predict.grid must be [lo, hi, n]");
      try {
        pc.grid_lo = g[0].get<double>();
        pc.grid_hi = g[1].get<double>();
        pc.grid_n = g[2].get<int>();
      } catch (const json::exception&) {
        throw ConfigError("predict.grid must be [lo, hi, n]");
      }
    }
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j);
}

inline PriorSpec RunConfig::prior_spec() const {
  const ParamLayout layout(network);
  PriorSpec p;
  p.num_params = layout.size();
  p.ard_sampling_box = prior.flat_box;
  std::vector<bool> known(layout.size(), false);
  std::vector<std::optional<KnownPrior>> by_index(layout.size());
  for (const auto& k : prior.known) {
    std::size_t i = 0;
    try {
      i = layout.index_of(k.name);
    } catch (const InvalidArgument&) {
      throw ConfigError("prior.known names unknown parameter '" + k.name + "'");
    }
    if (known[i]) throw ConfigError("prior.known lists '" + k.name + "' twice");
    known[i] = true;
    by_index[i] = k.prior;
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (known[i]) {
      p.known_set.push_back(i);
      p.known_prior.push_back(*by_index[i]);
    } else {
      p.ard_set.push_back(i);
    }
  }
  return p;
}

inline Hyperprior RunConfig::hyperprior() const {
  const auto n = static_cast<Eigen::Index>(prior_spec().num_ard());
  if (!nsbl || nsbl->hyperprior == Hyperprior::Mode::jeffreys) return Hyperprior::jeffreys(n);
  return Hyperprior::gamma(n, nsbl->shape, nsbl->rate);
}

inline void RunConfig::validate() const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  };
  if (data.generate.has_value() == data.load.has_value())
    throw ConfigError("data needs exactly one of 'generate' or 'load'");
  if (data.generate) {
    const auto& g = *data.generate;
    if (g.n < 2 || !(g.x_lo < g.x_hi) || !(g.noise_var > 0)) throw ConfigError("data.generate has invalid settings");
  }
  if (threads < 1) throw ConfigError("threads must be at least 1");
  wrap([&] { network.validate(); });
  if (!(prior.flat_box.lo < prior.flat_box.hi)) throw ConfigError("prior.flat_box must satisfy lo < hi");
  wrap([&] { prior_spec().validate(); });

  auto need = [&](bool present, const char* block) {
    if (!present) throw ConfigError("method '" + to_string(method) + "' requires a '" + block + "' block");
  };
  switch (method) {
    case Method::standard: need(tmcmc.has_value(), "tmcmc"); break;
    case Method::nsbl:
      need(tmcmc.has_value(), "tmcmc");
      need(gmm.has_value(), "gmm");
      need(nsbl.has_value(), "nsbl");
      break;
    case Method::hier: need(hier.has_value(), "hier"); break;
    case Method::laplace: need(laplace.has_value(), "laplace"); break;
    case Method::laplace_nsbl:
      need(laplace.has_value(), "laplace");
      need(nsbl.has_value(), "nsbl");
      break;
  }
  if (tmcmc) wrap([&] { tmcmc->validate(); });
  if (hier) wrap([&] { hier->validate(); });
  if (gmm) {
    if (gmm->fit.k_candidates.empty()) throw ConfigError("gmm.k_candidates must not be empty");
    for (int k : gmm->fit.k_candidates)
      if (k < 1) throw ConfigError("gmm.k_candidates must be positive");
    if (gmm->fit.n_restarts < 1) throw ConfigError("gmm.n_restarts must be positive");
    if (gmm->relabel && (network.num_layers() != 2))
      throw ConfigError("gmm.relabel requires a single hidden layer");
  }
  if (nsbl) {
    const auto& o = nsbl->options;
    if (o.n_starts < 1) throw ConfigError("nsbl.n_starts must be positive");
    if (!(o.log_alpha_lo < o.log_alpha_hi)) throw ConfigError("nsbl log alpha bounds are inverted");
    if (!(o.start_lo <= o.start_hi)) throw ConfigError("nsbl start range is inverted");
    if (!(o.thresholds.irrelevant_below <= o.thresholds.relevant_above))
      throw ConfigError("nsbl classification thresholds are inverted");
    if (nsbl->hyperprior == Hyperprior::Mode::gamma && !(nsbl->shape > 0 && nsbl->rate > 0))
      throw ConfigError("gamma hyperprior needs positive shape and rate");
    if (prior_spec().num_ard() == 0) throw ConfigError("nsbl needs at least one ARD parameter");
  }
  if (laplace) {
    const ParamLayout layout(network);
    if (laplace->start.boxcar_mode) {
      const int m = *laplace->start.boxcar_mode;
      if (m < 1 || m > 8) throw ConfigError("laplace.start.boxcar_mode must be in 1..8");
      if (network.layer_sizes.size() != 3 || network.layer_sizes[1] < 2)
        throw ConfigError("laplace.start.boxcar_mode needs a 1-H-1 network with H >= 2");
    }
    for (const auto& [name, v] : laplace->start.values) {
      (void)v;
      try {
        layout.index_of(name);
      } catch (const InvalidArgument&) {
        throw ConfigError("laplace.start.values names unknown parameter '" + name + "'");
      }
    }
  }
  if (predict.enabled) {
    if (predict.n_draws < 1) throw ConfigError("predict.n_draws must be positive");
    if (predict.grid_n < 2 || !(predict.grid_lo < predict.grid_hi)) throw ConfigError("predict.grid is invalid");
    for (double l : predict.levels)
      if (!(l > 0 && l < 1)) throw ConfigError("predict.levels must lie in (0, 1)");
    if (std::find(predict.levels.begin(), predict.levels.end(), 0.95) == predict.levels.end())
      throw ConfigError("predict.levels must include 0.95");
  }
}

}  // namespace sbnn
