#include "dynbp/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dynbp/csv.hpp"
#include "dynbp/exact.hpp"
#include "dynbp/ising.hpp"
#include "dynbp/model_io.hpp"
#include "dynbp/motion.hpp"
#include "dynbp/static_infer.hpp"
#include "dynbp/temporal.hpp"

namespace dynbp {
namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

// --- shared flag packs ------------------------------------------------------

struct SolverFlags {
  double damping = 0.5;
  double tol = 1e-6;
  int max_iters = 500;
  std::string degenerate = "error";
};

std::string check_degenerate_spec(const std::string& s) {
  if (s == "error" || s == "fixed") return {};
  if (s.rfind("fixed:", 0) == 0) {
    try {
      size_t used = 0;
      (void)std::stod(s.substr(6), &used);
      if (used == s.size() - 6) return {};
    } catch (const std::exception&) {
    }
  }
  return "expected error, fixed or fixed:<x>, got \"" + s + "\"";
}

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--damping", f.damping, "message damping in [0,1)")
      ->capture_default_str();
  cmd->add_option("--tol", f.tol, "per-sweep convergence tolerance")
      ->capture_default_str();
  cmd->add_option("--max-iters", f.max_iters, "sweep limit per step")
      ->capture_default_str();
  cmd->add_option("--degenerate-exponent", f.degenerate,
                  "zero counting-sum policy: error | fixed:<x>")
      ->capture_default_str()
      ->check(CLI::Validator(check_degenerate_spec, "POLICY"));
}

SolverOptions make_options(const SolverFlags& f) {
  SolverOptions o;
  o.damping = f.damping;
  o.tolerance = f.tol;
  o.max_iterations = f.max_iters;
  if (f.degenerate == "error") {
    o.degenerate_policy = DegeneratePolicy::error;
  } else {
    o.degenerate_policy = DegeneratePolicy::fixed_exponent;
    if (f.degenerate.rfind("fixed:", 0) == 0)
      o.fixed_exponent = std::stod(f.degenerate.substr(6));
  }
  return o;
}

json solver_config(const SolverFlags& f) {
  return json{{"damping", f.damping},
              {"tol", f.tol},
              {"max-iters", f.max_iters},
              {"degenerate-exponent", f.degenerate}};
}

// --- manifest plumbing ------------------------------------------------------

std::string manifest_path(const std::string& explicit_path, const std::string& out,
                          const std::string& subcommand) {
  if (!explicit_path.empty()) return explicit_path;
  if (!out.empty()) return out + ".manifest.json";
  return subcommand + "-manifest.json";
}

void write_manifest(const std::string& path, const std::string& subcommand,
                    json config, json results) {
  json j;
  j["tool"] = "dynbp";
  j["version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["config"] = std::move(config);
  j["results"] = std::move(results);
  write_json_file(path, j);
}

// --- model assembly ---------------------------------------------------------

FactorGraph static_graph(const LoadedModel& m) {
  FactorGraph g;
  g.variables = m.variables;
  g.factors = m.factors;
  return g;
}

TemporalModel assemble_temporal(const LoadedModel& m) {
  if (m.regions) {
    TemporalModel tm;
    tm.variables = m.variables;
    tm.factors = m.temporal_factors;
    tm.regions = *m.regions;
    if (tm.regions.counting.empty()) compute_counting_numbers(tm.regions);
    return tm;
  }
  return make_temporal_model(m.variables, m.temporal_factors);
}

// 0 = static, 1 = temporal; mixed files are rejected so every subcommand has
// an unambiguous model kind to work on
int classify_model(const LoadedModel& m, std::string& err) {
  if (!m.factors.empty() && !m.temporal_factors.empty()) {
    err = "model mixes static and temporal factors; split it into two files";
    return -1;
  }
  return m.temporal_factors.empty() ? 0 : 1;
}

int fail(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return 1;
}

std::string diag_path(const std::string& explicit_path, const std::string& out,
                      const char* suffix) {
  if (!explicit_path.empty()) return explicit_path;
  if (out.empty()) return {};
  std::filesystem::path p(out);
  p.replace_extension();
  return p.string() + suffix;
}

void print_kv(const char* key, double v) {
  std::cout << key << " " << format_double(v) << "\n";
}

// --- validate ---------------------------------------------------------------

struct ValidateOpts {
  std::string model, manifest;
};

int cmd_validate(const ValidateOpts& o) {
  const std::string mpath = manifest_path(o.manifest, "", "validate");
  const json config{{"model", o.model}};
  LoadedModel m;
  try {
    m = load_model_file(o.model);
  } catch (const std::exception& e) {
    write_manifest(mpath, "validate", config, json{{"valid", false}, {"error", e.what()}});
    return fail(e.what());
  }

  ValidationReport rep;
  std::string kind_err;
  const int kind = classify_model(m, kind_err);
  if (kind < 0) {
    rep.add("model", kind_err);
  } else if (kind == 1) {
    try {
      const TemporalModel tm = assemble_temporal(m);
      rep = validate_temporal_model(tm);
    } catch (const std::exception& e) {
      rep.add("model", e.what());
    }
  } else {
    const FactorGraph g = static_graph(m);
    rep = validate_factor_graph(g);
    if (rep.ok() && m.regions) {
      RegionGraph rg = *m.regions;
      if (rg.counting.empty()) compute_counting_numbers(rg);
      rep = validate_region_graph(rg, g);
    }
  }

  json issues = json::array();
  for (const auto& i : rep.issues) issues.push_back(i.where + ": " + i.what);
  write_manifest(mpath, "validate", config,
                 json{{"valid", rep.ok()}, {"issues", std::move(issues)}});
  if (!rep.ok()) {
    std::cerr << rep.to_string();
    return 1;
  }
  std::cout << "ok: " << m.variables.size() << " variables, " << m.factors.size()
            << " static factors, " << m.temporal_factors.size() << " temporal factors\n";
  return 0;
}

// --- exact ------------------------------------------------------------------

struct ExactOpts {
  std::string model, out, manifest;
  std::vector<int> vars;
  bool map = false;
};

int cmd_exact(const ExactOpts& o) {
  const std::string mpath = manifest_path(o.manifest, o.out, "exact");
  json config{{"model", o.model}, {"out", o.out}, {"map", o.map}, {"var", o.vars}};
  LoadedModel m;
  try {
    m = load_model_file(o.model);
  } catch (const std::exception& e) {
    write_manifest(mpath, "exact", config, json{{"error", e.what()}});
    return fail(e.what());
  }
  std::string kind_err;
  if (classify_model(m, kind_err) != 0) {
    const std::string msg = kind_err.empty() ? "exact works on static models only" : kind_err;
    write_manifest(mpath, "exact", config, json{{"error", msg}});
    return fail(msg);
  }
  const FactorGraph g = static_graph(m);
  if (const auto rep = validate_factor_graph(g); !rep.ok()) {
    write_manifest(mpath, "exact", config, json{{"error", rep.to_string()}});
    std::cerr << rep.to_string();
    return 1;
  }
  for (int v : o.vars)
    if (v < 0 || v >= g.num_variables()) {
      const std::string msg = "unknown variable " + std::to_string(v);
      write_manifest(mpath, "exact", config, json{{"error", msg}});
      return fail(msg);
    }

  json results;
  try {
    const double log_z = exact_log_partition(g);
    results["log_z"] = log_z;
    print_kv("log_z", log_z);
    if (!o.vars.empty()) {
      json marg = json::object();
      for (int v : o.vars) {
        const auto p = exact_marginal(g, {v});
        marg[std::to_string(v)] = p;
        std::cout << "marginal " << v;
        for (double x : p) std::cout << " " << format_double(x);
        std::cout << "\n";
      }
      results["marginals"] = std::move(marg);
    }
    if (o.map) {
      const MapResult mr = exact_map(g);
      results["map_state"] = mr.state;
      results["map_log_weight"] = mr.log_weight;
      std::cout << "map";
      for (int s : mr.state) std::cout << " " << s;
      std::cout << "\n";
    }
  } catch (const std::exception& e) {
    write_manifest(mpath, "exact", config, json{{"error", e.what()}});
    return fail(e.what());
  }
  if (!o.out.empty()) write_json_file(o.out, results);
  write_manifest(mpath, "exact", config, results);
  return 0;
}

// --- bp / gbp ---------------------------------------------------------------

struct StaticInferOpts {
  std::string model, out, manifest;
  SolverFlags solver;
};

void write_marginals_csv(const std::string& path, const FactorGraph& g,
                         const BeliefSet& bs) {
  CsvWriter w;
  w.cell("variable").cell("state").cell("belief").end_row();
  for (int v = 0; v < g.num_variables(); ++v)
    for (size_t k = 0; k < bs.variable_beliefs[static_cast<size_t>(v)].size(); ++k) {
      w.cell(v).cell(static_cast<int>(k));
      w.cell(bs.variable_beliefs[static_cast<size_t>(v)][k]).end_row();
    }
  w.write_file(path);
}

int cmd_static_infer(const StaticInferOpts& o, bool use_regions) {
  const char* name = use_regions ? "gbp" : "bp";
  const std::string mpath = manifest_path(o.manifest, o.out, name);
  json config = solver_config(o.solver);
  config["model"] = o.model;
  config["out"] = o.out;

  LoadedModel m;
  try {
    m = load_model_file(o.model);
  } catch (const std::exception& e) {
    write_manifest(mpath, name, config, json{{"error", e.what()}});
    return fail(e.what());
  }
  std::string kind_err;
  if (classify_model(m, kind_err) != 0) {
    const std::string msg =
        kind_err.empty() ? std::string(name) + " works on static models only" : kind_err;
    write_manifest(mpath, name, config, json{{"error", msg}});
    return fail(msg);
  }
  const FactorGraph g = static_graph(m);
  if (const auto rep = validate_factor_graph(g); !rep.ok()) {
    write_manifest(mpath, name, config, json{{"error", rep.to_string()}});
    std::cerr << rep.to_string();
    return 1;
  }

  const SolverOptions opts = make_options(o.solver);
  BeliefSet bs;
  SolveResult res;
  json results;
  if (use_regions) {
    RegionGraph rg;
    if (m.regions) {
      rg = *m.regions;
      if (rg.counting.empty()) compute_counting_numbers(rg);
    } else {
      rg = build_bethe_regions(g);
    }
    if (const auto rep = validate_region_graph(rg, g); !rep.ok()) {
      write_manifest(mpath, name, config, json{{"error", rep.to_string()}});
      std::cerr << rep.to_string();
      return 1;
    }
    res = gbp_parent_to_child(g, rg, opts, bs);
    const double fe = region_free_energy(rg, g, bs.region_beliefs, opts.zero_floor);
    results["free_energy"] = fe;
    print_kv("free_energy", fe);
  } else {
    res = sum_product_bp(g, opts, bs);
  }
  if (!o.out.empty()) write_marginals_csv(o.out, g, bs);

  results["converged"] = res.converged;
  results["iterations"] = res.iterations;
  results["final_delta"] = res.final_delta;
  std::cout << "converged " << (res.converged ? 1 : 0) << " iterations " << res.iterations
            << " final_delta " << format_double(res.final_delta) << "\n";
  write_manifest(mpath, name, config, results);
  return res.converged ? 0 : 2;
}

// --- dynbp / ext-gbp --------------------------------------------------------

struct TemporalInferOpts {
  std::string model, out, diag, manifest, init = "uniform";
  int steps = 10;
  SolverFlags solver;
};

int parse_init(const std::string& text, const TemporalModel& tm, PathBeliefStore& store,
               std::string& err) {
  if (text == "uniform") {
    store = uniform_priors(tm);
    return 0;
  }
  std::vector<int> state;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    try {
      state.push_back(std::stoi(text.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      err = "--init expects uniform or a comma-separated state list";
      return 1;
    }
    pos = comma + 1;
  }
  if (static_cast<int>(state.size()) != tm.num_variables()) {
    err = "--init needs one state per variable (" + std::to_string(tm.num_variables()) + ")";
    return 1;
  }
  for (int v = 0; v < tm.num_variables(); ++v)
    if (state[static_cast<size_t>(v)] < 0 ||
        state[static_cast<size_t>(v)] >= tm.cardinality(v)) {
      err = "--init state out of range for variable " + std::to_string(v);
      return 1;
    }
  store = point_priors(tm, state);
  return 0;
}

void write_trajectory_csv(const std::string& path, const EvolveResult& ev) {
  CsvWriter w;
  w.cell("step").cell("node").cell("state").cell("belief").end_row();
  for (size_t s = 0; s < ev.node_beliefs.size(); ++s)
    for (size_t v = 0; v < ev.node_beliefs[s].size(); ++v)
      for (size_t k = 0; k < ev.node_beliefs[s][v].size(); ++k) {
        w.cell(static_cast<int>(s) + 1).cell(static_cast<int>(v)).cell(static_cast<int>(k));
        w.cell(ev.node_beliefs[s][v][k]).end_row();
      }
  w.write_file(path);
}

void write_diagnostics_csv(const std::string& path, const EvolveResult& ev) {
  CsvWriter w;
  w.cell("step").cell("sweep").cell("max_delta").cell("prior_residual");
  w.cell("cross_residual").cell("objective").end_row();
  for (size_t s = 0; s < ev.steps.size(); ++s) {
    const auto& d = ev.steps[s];
    for (int sw = 0; sw < d.sweeps; ++sw) {
      w.cell(static_cast<int>(s) + 1).cell(sw + 1);
      w.cell(d.sweep_delta[static_cast<size_t>(sw)]);
      w.cell(d.prior_residual[static_cast<size_t>(sw)]);
      w.cell(d.cross_residual[static_cast<size_t>(sw)]);
      w.cell(d.objective[static_cast<size_t>(sw)]).end_row();
    }
  }
  w.write_file(path);
}

int cmd_temporal_infer(const TemporalInferOpts& o, bool extended) {
  const char* name = extended ? "ext-gbp" : "dynbp";
  const std::string mpath = manifest_path(o.manifest, o.out, name);
  json config = solver_config(o.solver);
  config["model"] = o.model;
  config["out"] = o.out;
  config["steps"] = o.steps;
  config["init"] = o.init;

  LoadedModel m;
  try {
    m = load_model_file(o.model);
  } catch (const std::exception& e) {
    write_manifest(mpath, name, config, json{{"error", e.what()}});
    return fail(e.what());
  }
  std::string kind_err;
  if (classify_model(m, kind_err) != 1) {
    const std::string msg =
        kind_err.empty() ? std::string(name) + " needs a temporal model" : kind_err;
    write_manifest(mpath, name, config, json{{"error", msg}});
    return fail(msg);
  }

  TemporalModel tm;
  try {
    tm = assemble_temporal(m);
  } catch (const std::exception& e) {
    write_manifest(mpath, name, config, json{{"error", e.what()}});
    return fail(e.what());
  }
  if (const auto rep = validate_temporal_model(tm); !rep.ok()) {
    write_manifest(mpath, name, config, json{{"error", rep.to_string()}});
    std::cerr << rep.to_string();
    return 1;
  }

  PathBeliefStore store;
  if (std::string err; parse_init(o.init, tm, store, err) != 0) {
    write_manifest(mpath, name, config, json{{"error", err}});
    return fail(err);
  }

  const SolverOptions opts = make_options(o.solver);
  EvolveResult ev;
  try {
    ev = extended ? extended_gbp_evolve(tm, std::move(store), o.steps, opts)
                  : dynbp_evolve(tm, std::move(store), o.steps, opts);
  } catch (const std::exception& e) {
    write_manifest(mpath, name, config, json{{"error", e.what()}});
    return fail(e.what());
  }

  if (!o.out.empty()) write_trajectory_csv(o.out, ev);
  const std::string dpath = diag_path(o.diag, o.out, ".diag.csv");
  if (!dpath.empty()) write_diagnostics_csv(dpath, ev);

  json per_step = json::array();
  int converged_steps = 0;
  for (const auto& d : ev.steps) {
    per_step.push_back(d.converged);
    converged_steps += d.converged ? 1 : 0;
  }
  json results{{"all_converged", ev.all_converged}, {"step_converged", std::move(per_step)}};
  if (!ev.steps.empty()) results["final_free_energy"] = ev.steps.back().free_energy;
  std::cout << "converged_steps " << converged_steps << "/" << ev.steps.size() << "\n";
  if (!ev.steps.empty()) print_kv("final_free_energy", ev.steps.back().free_energy);
  write_manifest(mpath, name, config, results);
  return ev.all_converged ? 0 : 2;
}

// --- ising-trace ------------------------------------------------------------

struct TraceOpts {
  int rows = 1, cols = 1, steps = 20, node = -1;
  double theta_dt = 0.5;
  double h = std::sqrt(0.1), j = std::sqrt(0.1);
  std::uint64_t seed = 1;
  std::string topology = "torus", out, manifest;
  SolverFlags solver;
};

int cmd_ising_trace(const TraceOpts& o) {
  const std::string mpath = manifest_path(o.manifest, o.out, "ising-trace");
  json config = solver_config(o.solver);
  config["rows"] = o.rows;
  config["cols"] = o.cols;
  config["steps"] = o.steps;
  config["node"] = o.node;
  config["theta-dt"] = o.theta_dt;
  config["field"] = o.h;
  config["coupling"] = o.j;
  config["seed"] = o.seed;
  config["topology"] = o.topology;
  config["out"] = o.out;

  Rng rng(o.seed);
  const LatticeTopology topo =
      o.topology == "open" ? LatticeTopology::open : LatticeTopology::torus;
  const IsingLattice lat = random_ising_lattice(o.rows, o.cols, topo, o.j, o.h, rng);
  if (o.node >= lat.num_sites()) {
    const std::string msg = "--node out of range";
    write_manifest(mpath, "ising-trace", config, json{{"error", msg}});
    return fail(msg);
  }
  const std::vector<int> init(static_cast<size_t>(lat.num_sites()), 0);

  BeliefTraceResult res;
  try {
    res = run_belief_trace(lat, o.theta_dt, o.steps, init, make_options(o.solver));
  } catch (const std::exception& e) {
    write_manifest(mpath, "ising-trace", config, json{{"error", e.what()}});
    return fail(e.what());
  }

  CsvWriter w;
  w.cell("step").cell("site").cell("dynbp_up").cell("bp_up").cell("exact_up").end_row();
  for (const auto& r : res.rows) {
    if (o.node >= 0 && r.site != o.node) continue;
    w.cell(r.step).cell(r.site).cell(r.dynbp_up).cell(r.bp_up);
    if (res.has_exact)
      w.cell(r.exact_up);
    else
      w.cell("");
    w.end_row();
  }
  w.write_file(o.out);

  std::cout << "steps " << o.steps << " sites " << lat.num_sites() << " exact "
            << (res.has_exact ? 1 : 0) << " converged " << (res.all_converged ? 1 : 0)
            << "\n";
  write_manifest(mpath, "ising-trace", config,
                 json{{"all_converged", res.all_converged}, {"has_exact", res.has_exact}});
  return res.all_converged ? 0 : 2;
}

// --- ising-hist -------------------------------------------------------------

struct HistOpts {
  int rows = 3, cols = 4, seeds = 20, steps = 10, bins = 10, jobs = 1;
  double h = 0.1, j = 0.1, theta_dt = 0.3;
  std::uint64_t seed = 1;
  std::string out, manifest;
  SolverFlags solver;
};

int cmd_ising_hist(const HistOpts& o) {
  const std::string mpath = manifest_path(o.manifest, o.out, "ising-hist");
  json config = solver_config(o.solver);
  config["rows"] = o.rows;
  config["cols"] = o.cols;
  config["seeds"] = o.seeds;
  config["steps"] = o.steps;
  config["bins"] = o.bins;
  config["jobs"] = o.jobs;
  config["field"] = o.h;
  config["coupling"] = o.j;
  config["theta-dt"] = o.theta_dt;
  config["seed"] = o.seed;
  config["out"] = o.out;

  HistogramResult hr;
  try {
    hr = run_error_histogram(o.rows, o.cols, o.h, o.j, o.seeds, o.steps, o.theta_dt,
                             o.seed, make_options(o.solver), o.jobs);
  } catch (const std::exception& e) {
    write_manifest(mpath, "ising-hist", config, json{{"error", e.what()}});
    return fail(e.what());
  }

  CsvWriter w;
  w.cell("seed").cell("step").cell("rel_err").cell("converged").end_row();
  for (const auto& r : hr.rows)
    w.cell(r.seed_index).cell(r.step).cell(r.rel_err).cell(r.converged).end_row();
  w.write_file(o.out);

  const std::string rpath = diag_path("", o.out, ".residuals.csv");
  CsvWriter rw;
  rw.cell("seed").cell("step").cell("sweep").cell("max_delta").cell("prior_residual");
  rw.cell("cross_residual").cell("objective").end_row();
  for (const auto& r : hr.residuals) {
    rw.cell(r.seed_index).cell(r.step).cell(r.sweep).cell(r.sweep_delta);
    rw.cell(r.prior_residual).cell(r.cross_residual).cell(r.objective).end_row();
  }
  rw.write_file(rpath);

  std::vector<int> bins(static_cast<size_t>(o.bins), 0);
  int overflow = 0, within = 0;
  for (const auto& r : hr.rows) {
    if (r.rel_err <= 0.10) ++within;
    const int b = static_cast<int>(r.rel_err * o.bins);
    if (r.rel_err > 1.0 || b >= o.bins)
      ++overflow;
    else
      ++bins[static_cast<size_t>(b)];
  }
  for (int b = 0; b < o.bins; ++b) {
    std::cout << "bin " << format_double(static_cast<double>(b) / o.bins) << " "
              << format_double(static_cast<double>(b + 1) / o.bins) << " "
              << bins[static_cast<size_t>(b)] << "\n";
  }
  std::cout << "overflow " << overflow << "\n";
  const double frac =
      hr.rows.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(hr.rows.size());
  print_kv("within_0.1", frac);
  std::cout << "converged_steps " << hr.converged_steps << "/" << hr.total_steps << "\n";

  write_manifest(mpath, "ising-hist", config,
                 json{{"within_0.1", frac},
                      {"converged_steps", hr.converged_steps},
                      {"total_steps", hr.total_steps},
                      {"residuals", rpath}});
  return 0;
}

// --- fe-ratio ---------------------------------------------------------------

struct RatioOpts {
  int rows = 3, cols = 3, trials = 200, jobs = 1;
  double h = std::sqrt(0.1), j = std::sqrt(0.1), theta_dt = 0.3;
  std::uint64_t seed = 1;
  std::string out, manifest;
  SolverFlags solver;
};

int cmd_fe_ratio(const RatioOpts& o) {
  const std::string mpath = manifest_path(o.manifest, o.out, "fe-ratio");
  json config = solver_config(o.solver);
  config["rows"] = o.rows;
  config["cols"] = o.cols;
  config["trials"] = o.trials;
  config["jobs"] = o.jobs;
  config["field"] = o.h;
  config["coupling"] = o.j;
  config["theta-dt"] = o.theta_dt;
  config["seed"] = o.seed;
  config["out"] = o.out;

  RatioResult rr;
  try {
    rr = free_energy_ratio_experiment(o.rows, o.cols, o.h, o.j, o.trials, o.theta_dt,
                                      o.seed, make_options(o.solver), o.jobs);
  } catch (const std::exception& e) {
    write_manifest(mpath, "fe-ratio", config, json{{"error", e.what()}});
    return fail(e.what());
  }

  CsvWriter w;
  w.cell("trial").cell("fe_constrained").cell("fe_extended").cell("ratio");
  w.cell("constrained_converged").cell("extended_converged").end_row();
  int both_conv = 0, in_band = 0;
  for (const auto& r : rr.rows) {
    const double ratio = r.fe_constrained / r.fe_extended;
    w.cell(r.trial).cell(r.fe_constrained).cell(r.fe_extended).cell(ratio);
    w.cell(r.constrained_converged).cell(r.extended_converged).end_row();
    if (r.constrained_converged && r.extended_converged) {
      ++both_conv;
      if (ratio >= 0.9 && ratio <= 1.1) ++in_band;
    }
  }
  w.write_file(o.out);

  const double n = rr.rows.empty() ? 1.0 : static_cast<double>(rr.rows.size());
  print_kv("both_converged", static_cast<double>(both_conv) / n);
  const double band =
      both_conv == 0 ? 0.0 : static_cast<double>(in_band) / static_cast<double>(both_conv);
  print_kv("in_band", band);
  write_manifest(mpath, "fe-ratio", config,
                 json{{"trials", static_cast<int>(rr.rows.size())},
                      {"both_converged", both_conv},
                      {"in_band_of_converged", band}});
  return 0;
}

// --- motion-demo ------------------------------------------------------------

struct MotionOpts {
  int rows = 50, cols = 50, frames = 60, patch = 5, bins = 2, sweeps = 1;
  double theta_s = 0.99, theta_t = 0.6, diff_threshold = 0.125;
  std::uint64_t seed = 1;
  std::string out_dir = "motion-out", input, manifest;
  bool save_frames = false;
  SolverFlags solver;
};

std::string frame_file(const std::string& dir, const char* stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d.pgm", stem, index);
  return dir + "/" + buf;
}

std::vector<std::uint8_t> mask_to_gray(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint8_t> gray(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) gray[i] = mask[i] ? 255 : 0;
  return gray;
}

int cmd_motion_demo(const MotionOpts& o) {
  const std::string mpath =
      !o.manifest.empty() ? o.manifest : o.out_dir + "/manifest.json";
  json config = solver_config(o.solver);
  config["rows"] = o.rows;
  config["cols"] = o.cols;
  config["frames"] = o.frames;
  config["patch"] = o.patch;
  config["bins"] = o.bins;
  config["theta-s"] = o.theta_s;
  config["theta-t"] = o.theta_t;
  config["diff-threshold"] = o.diff_threshold;
  config["sweeps-per-frame"] = o.sweeps;
  config["seed"] = o.seed;
  config["out-dir"] = o.out_dir;
  config["input"] = o.input;

  std::error_code ec;
  std::filesystem::create_directories(o.out_dir, ec);
  if (ec) return fail("cannot create " + o.out_dir + ": " + ec.message());

  MotionModelParams params;
  params.theta_s = o.theta_s;
  params.theta_t = o.theta_t;
  params.state_count = o.bins;
  params.diff_threshold = o.diff_threshold;
  params.sweeps_per_frame = o.sweeps;
  if (const auto rep = validate_motion_params(params); !rep.ok()) {
    write_manifest(mpath, "motion-demo", config, json{{"error", rep.to_string()}});
    std::cerr << rep.to_string();
    return 1;
  }

  FrameSequence fs;
  try {
    fs = o.input.empty()
             ? synth_random_patch_video(o.rows, o.cols, o.frames, o.patch, o.seed)
             : load_frames(o.input);
  } catch (const std::exception& e) {
    write_manifest(mpath, "motion-demo", config, json{{"error", e.what()}});
    return fail(e.what());
  }

  DetectionResult dr;
  try {
    dr = detect_motion(fs, params, make_options(o.solver));
  } catch (const std::exception& e) {
    write_manifest(mpath, "motion-demo", config, json{{"error", e.what()}});
    return fail(e.what());
  }

  const bool has_truth = !fs.truth.empty();
  CsvWriter w;
  w.cell("frame").cell("converged").cell("iou_dynbp").cell("iou_baseline").end_row();
  int converged_steps = 0;
  double sum_mask = 0.0, sum_base = 0.0;
  int tail = 0;
  for (size_t s = 0; s < dr.masks.size(); ++s) {
    const int frame = static_cast<int>(s) + 1;
    w.cell(frame).cell(dr.step_converged[s]);
    if (has_truth) {
      w.cell(dr.iou_masks[s]).cell(dr.iou_baseline[s]);
      if (frame >= 10) {
        sum_mask += dr.iou_masks[s];
        sum_base += dr.iou_baseline[s];
        ++tail;
      }
    } else {
      w.cell("").cell("");
    }
    w.end_row();
    if (dr.step_converged[s]) ++converged_steps;
    write_pgm(frame_file(o.out_dir, "mask", frame), fs.rows, fs.cols,
              mask_to_gray(dr.masks[s]));
    write_pgm(frame_file(o.out_dir, "baseline", frame), fs.rows, fs.cols,
              mask_to_gray(dr.baseline[s]));
  }
  w.write_file(o.out_dir + "/metrics.csv");

  if (o.save_frames) {
    for (int f = 0; f < fs.frame_count(); ++f) {
      std::vector<std::uint8_t> gray(static_cast<size_t>(fs.pixel_count()));
      for (int i = 0; i < fs.pixel_count(); ++i)
        gray[static_cast<size_t>(i)] = static_cast<std::uint8_t>(
            fs.frames[static_cast<size_t>(f)][static_cast<size_t>(i)] * 255.0);
      write_pgm(frame_file(o.out_dir, "frame", f), fs.rows, fs.cols, gray);
    }
  }

  json results{{"all_converged", dr.all_converged},
               {"converged_steps", converged_steps},
               {"steps", static_cast<int>(dr.masks.size())}};
  std::cout << "converged_steps " << converged_steps << "/" << dr.masks.size() << "\n";
  if (has_truth && tail > 0) {
    results["mean_iou_dynbp"] = sum_mask / tail;
    results["mean_iou_baseline"] = sum_base / tail;
    print_kv("mean_iou_dynbp", sum_mask / tail);
    print_kv("mean_iou_baseline", sum_base / tail);
  }
  write_manifest(mpath, "motion-demo", config, results);
  return dr.all_converged ? 0 : 2;
}

int run_cli_impl(int argc, const char* const* argv) {
  CLI::App app{
      "discrete graphical-model toolkit: exact inference, static and temporal "
      "message passing, lattice experiments"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  ValidateOpts vo;
  auto* validate = app.add_subcommand("validate", "check a model file");
  validate->add_option("--model", vo.model, "model JSON")->required();
  validate->add_option("--manifest", vo.manifest, "manifest path");

  ExactOpts eo;
  auto* exact = app.add_subcommand("exact", "exhaustive inference on a static model");
  exact->add_option("--model", eo.model, "model JSON")->required();
  exact->add_option("--out", eo.out, "result JSON");
  exact->add_option("--var", eo.vars, "marginal target, repeatable");
  exact->add_flag("--map", eo.map, "also report the maximizing assignment");
  exact->add_option("--manifest", eo.manifest, "manifest path");

  StaticInferOpts bo;
  auto* bp = app.add_subcommand("bp", "factor-graph sum-product on a static model");
  bp->add_option("--model", bo.model, "model JSON")->required();
  bp->add_option("--out", bo.out, "marginal CSV");
  bp->add_option("--manifest", bo.manifest, "manifest path");
  add_solver_flags(bp, bo.solver);

  StaticInferOpts go;
  auto* gbp = app.add_subcommand("gbp", "parent-to-child region passing on a static model");
  gbp->add_option("--model", go.model, "model JSON")->required();
  gbp->add_option("--out", go.out, "marginal CSV");
  gbp->add_option("--manifest", go.manifest, "manifest path");
  add_solver_flags(gbp, go.solver);

  TemporalInferOpts dyo;
  auto* dynbp = app.add_subcommand("dynbp", "temporal path solver with prior coupling");
  dynbp->add_option("--model", dyo.model, "temporal model JSON")->required();
  dynbp->add_option("--steps", dyo.steps, "transitions to evolve")->capture_default_str();
  dynbp->add_option("--init", dyo.init, "uniform or comma-separated start state")
      ->capture_default_str();
  dynbp->add_option("--out", dyo.out, "trajectory CSV");
  dynbp->add_option("--diag", dyo.diag, "diagnostics CSV");
  dynbp->add_option("--manifest", dyo.manifest, "manifest path");
  add_solver_flags(dynbp, dyo.solver);

  TemporalInferOpts exo;
  auto* extg = app.add_subcommand("ext-gbp", "temporal solver, renormalization only");
  extg->add_option("--model", exo.model, "temporal model JSON")->required();
  extg->add_option("--steps", exo.steps, "transitions to evolve")->capture_default_str();
  extg->add_option("--init", exo.init, "uniform or comma-separated start state")
      ->capture_default_str();
  extg->add_option("--out", exo.out, "trajectory CSV");
  extg->add_option("--diag", exo.diag, "diagnostics CSV");
  extg->add_option("--manifest", exo.manifest, "manifest path");
  add_solver_flags(extg, exo.solver);

  TraceOpts to;
  auto* trace = app.add_subcommand("ising-trace", "belief trajectories on a random lattice");
  trace->add_option("--rows", to.rows, "lattice rows")->capture_default_str();
  trace->add_option("--cols", to.cols, "lattice cols")->capture_default_str();
  trace->add_option("--steps", to.steps, "transitions")->capture_default_str();
  trace->add_option("--node", to.node, "restrict CSV to one site, -1 = all")
      ->capture_default_str();
  trace->add_option("--theta-dt", to.theta_dt, "flip weight in (0,1)")->capture_default_str();
  trace->add_option("--field", to.h, "field stddev")->capture_default_str();
  trace->add_option("--coupling", to.j, "coupling stddev")->capture_default_str();
  trace->add_option("--seed", to.seed, "lattice seed")->capture_default_str();
  trace->add_option("--topology", to.topology, "torus | open")
      ->capture_default_str()
      ->check(CLI::IsMember({"torus", "open"}));
  trace->add_option("--out", to.out, "trace CSV")->required();
  trace->add_option("--manifest", to.manifest, "manifest path");
  add_solver_flags(trace, to.solver);

  HistOpts ho;
  auto* hist = app.add_subcommand("ising-hist", "oracle error histogram over random lattices");
  hist->add_option("--rows", ho.rows, "lattice rows")->capture_default_str();
  hist->add_option("--cols", ho.cols, "lattice cols")->capture_default_str();
  hist->add_option("--seeds", ho.seeds, "number of lattices")->capture_default_str();
  hist->add_option("--steps", ho.steps, "transitions per lattice")->capture_default_str();
  hist->add_option("--bins", ho.bins, "histogram bins on [0,1]")->capture_default_str();
  hist->add_option("--jobs", ho.jobs, "parallel trials")->capture_default_str();
  hist->add_option("--field", ho.h, "field stddev")->capture_default_str();
  hist->add_option("--coupling", ho.j, "coupling stddev")->capture_default_str();
  hist->add_option("--theta-dt", ho.theta_dt, "flip weight in (0,1)")->capture_default_str();
  hist->add_option("--seed", ho.seed, "base seed")->capture_default_str();
  hist->add_option("--out", ho.out, "histogram CSV")->required();
  hist->add_option("--manifest", ho.manifest, "manifest path");
  add_solver_flags(hist, ho.solver);

  RatioOpts ro;
  auto* ratio = app.add_subcommand("fe-ratio", "constrained vs extended free energies");
  ratio->add_option("--rows", ro.rows, "lattice rows")->capture_default_str();
  ratio->add_option("--cols", ro.cols, "lattice cols")->capture_default_str();
  ratio->add_option("--trials", ro.trials, "number of random lattices")->capture_default_str();
  ratio->add_option("--jobs", ro.jobs, "parallel trials")->capture_default_str();
  ratio->add_option("--field", ro.h, "field stddev")->capture_default_str();
  ratio->add_option("--coupling", ro.j, "coupling stddev")->capture_default_str();
  ratio->add_option("--theta-dt", ro.theta_dt, "flip weight in (0,1)")->capture_default_str();
  ratio->add_option("--seed", ro.seed, "base seed")->capture_default_str();
  ratio->add_option("--out", ro.out, "per-trial CSV")->required();
  ratio->add_option("--manifest", ro.manifest, "manifest path");
  add_solver_flags(ratio, ro.solver);

  MotionOpts mo;
  auto* motion = app.add_subcommand("motion-demo", "moving-patch detection demo");
  motion->add_option("--rows", mo.rows, "frame rows")->capture_default_str();
  motion->add_option("--cols", mo.cols, "frame cols")->capture_default_str();
  motion->add_option("--frames", mo.frames, "frame count")->capture_default_str();
  motion->add_option("--patch", mo.patch, "patch side")->capture_default_str();
  motion->add_option("--bins", mo.bins, "state quantization levels")->capture_default_str();
  motion->add_option("--theta-s", mo.theta_s, "spatial smoothness")->capture_default_str();
  motion->add_option("--theta-t", mo.theta_t, "temporal decay")->capture_default_str();
  motion->add_option("--sweeps-per-frame", mo.sweeps, "message sweeps per frame transition")
      ->capture_default_str();
  motion->add_option("--diff-threshold", mo.diff_threshold, "change threshold")
      ->capture_default_str();
  motion->add_option("--seed", mo.seed, "video seed")->capture_default_str();
  motion->add_option("--input", mo.input, "frame container instead of synthesis");
  motion->add_option("--out-dir", mo.out_dir, "output directory")->capture_default_str();
  motion->add_flag("--save-frames", mo.save_frames, "also write input frames as PGM");
  motion->add_option("--manifest", mo.manifest, "manifest path");
  add_solver_flags(motion, mo.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 64;
  }

  try {
    if (app.got_subcommand(validate)) return cmd_validate(vo);
    if (app.got_subcommand(exact)) return cmd_exact(eo);
    if (app.got_subcommand(bp)) return cmd_static_infer(bo, false);
    if (app.got_subcommand(gbp)) return cmd_static_infer(go, true);
    if (app.got_subcommand(dynbp)) return cmd_temporal_infer(dyo, false);
    if (app.got_subcommand(extg)) return cmd_temporal_infer(exo, true);
    if (app.got_subcommand(trace)) return cmd_ising_trace(to);
    if (app.got_subcommand(hist)) return cmd_ising_hist(ho);
    if (app.got_subcommand(ratio)) return cmd_fe_ratio(ro);
    if (app.got_subcommand(motion)) return cmd_motion_demo(mo);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 64;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    return run_cli_impl(argc, argv);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

}  // namespace dynbp
