#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rvar/bounds.hpp"
#include "rvar/estimator.hpp"
#include "rvar/experiments.hpp"
#include "rvar/json_io.hpp"
#include "rvar/var_core.hpp"

namespace fs = std::filesystem;
using rvar::json;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return json::parse(f, nullptr, true, true);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

// Relative paths inside a config are resolved against the config's directory.
fs::path resolve(const std::string& config, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : fs::path(config).parent_path() / q;
}

int run_simulate(const Options& o) {
  const json j = load_json(o.config);
  const std::uint64_t seed = o.seed.value_or(j.value("seed", std::uint64_t{1}));
  const rvar::VarModel model = rvar::model_from_json(j.at("model"), seed);
  const int n = j.at("n").get<int>();
  const int paths = o.reps.value_or(j.value("paths", 1));
  for (int r = 0; r < paths; ++r) {
    const std::uint64_t s = paths == 1 ? seed : rvar::derive_seed(seed, {static_cast<std::uint64_t>(r)});
    const rvar::SamplePath path = rvar::simulate(model, n, s);
    const fs::path file = o.out / fs::path(paths == 1 ? "path.csv" : "path_" + std::to_string(r) + ".csv");
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    rvar::write_path_csv(f, path);
  }
  json mj = rvar::model_to_json(model);
  mj["n"] = n;
  mj["seed"] = seed;
  mj["paths"] = paths;
  write_json(fs::path(o.out) / "model.json", mj);
  std::printf("simulated %d path(s) of length %d, d=%d\n", paths, n, model.d());
  return 0;
}

int run_fit(const Options& o) {
  const json j = load_json(o.config);
  std::ifstream f(resolve(o.config, j.at("path").get<std::string>()));
  if (!f) throw std::runtime_error("cannot open path csv");
  const rvar::SamplePath path = rvar::read_path_csv(f);
  const rvar::RestrictionBasis basis = rvar::build_basis(rvar::pattern_from_json(j.at("pattern")));
  const bool oracle = j.value("oracle", false);
  const rvar::FitResult fit = oracle ? rvar::fit_dense_oracle(path, basis) : rvar::fit(path, basis);
  json out = rvar::fit_to_json(fit);
  if (j.contains("truth")) {
    const rvar::VarModel truth = rvar::model_from_json(j.at("truth"), o.seed.value_or(1));
    const rvar::EstimationError e = rvar::estimation_error(fit, truth);
    out["error"] = rvar::error_to_json(e);
    std::printf("l2 error %.6g  spectral error %.6g\n", e.l2, e.spec);
  }
  write_json(fs::path(o.out) / "fit.json", out);
  std::printf("fitted m=%d on n=%d, d=%d%s\n", basis.m(), path.n(), path.d(), fit.rank_flag ? " (rank deficient)" : "");
  return 0;
}

int run_bounds(const Options& o) {
  const json j = load_json(o.config);
  const rvar::VarModel model = rvar::model_from_json(j.at("model"), o.seed.value_or(1));
  const rvar::RestrictionBasis basis = rvar::build_basis(rvar::pattern_from_json(j.at("pattern")));
  const int n = j.at("n").get<int>();
  const rvar::BoundConfig cfg = rvar::bound_config_from_json(j.value("bounds", json::object()));
  const rvar::BoundReport r = rvar::bound_report(model, basis, n, cfg, j.value("xi", false));
  std::printf("%-22s %s\n", "regime", rvar::regime_name(r.regime).c_str());
  std::printf("%-22s d=%d m=%d n=%d\n", "sizes", r.d, r.m, r.n);
  std::printf("%-22s %d\n", "k (feasible)", r.k_max_feasible);
  std::printf("%-22s %.6g\n", "lambda_max(Gamma_Rk)", r.lambda_max_Gamma_Rk);
  std::printf("%-22s %.6g\n", "kappa", r.kappa);
  std::printf("%-22s %.6g\n", "xi", r.xi);
  std::printf("%-22s %d\n", "upper Gram choice", r.upper_gram);
  std::printf("%-22s %.6g%s\n", "thm1 bound", r.thm1_bound, r.thm1_valid ? "" : "  (sample size too small)");
  std::printf("%-22s %.6g\n", "prop1 bound", r.prop1_bound);
  std::printf("%-22s %.6g\n", "thm2 rate", r.thm2_bound);
  std::printf("%-22s %s (threshold %.6g)\n", "phase", rvar::phase_name(r.phase).c_str(), r.phase_threshold);
  std::printf("%-22s %.6g\n", "thm3 rate", r.thm3_bound);
  std::printf("%-22s %.6g (regime %d)\n", "minimax lower", r.lower.rate, r.lower.regime);
  write_json(fs::path(o.out) / "bounds.json", rvar::bound_report_to_json(r));
  return 0;
}

int run_experiment(const Options& o) {
  json j = load_json(o.config);
  if (o.reps) j["replications"] = *o.reps;
  if (o.seed) j["seed"] = *o.seed;
  if (o.workers) j["workers"] = *o.workers;
  const rvar::ExperimentConfig cfg = rvar::config_from_json(j);
  const rvar::BoundConfig bcfg = rvar::bound_config_from_json(j.value("bounds", json::object()));
  const rvar::ReplicationSummary s = rvar::run_experiment(cfg);
  rvar::emit_csv(s, (fs::path(o.out) / "results.csv").string());
  rvar::emit_bound_overlay(s, bcfg, (fs::path(o.out) / "overlay.csv").string());
  double total = 0.0;
  int flagged = 0;
  json rt = json::array();
  for (const auto& r : s.rows) {
    total += r.runtime_seconds;
    flagged += r.flagged ? 1 : 0;
    rt.push_back({{"d", r.d}, {"m", r.m}, {"n", r.n}, {"rho", r.rho}, {"seconds", r.runtime_seconds}, {"flagged", r.flagged}});
  }
  write_json(fs::path(o.out) / "runtime.json", json{{"experiment", s.experiment}, {"replications", s.replications},
                                          {"total_seconds", total}, {"points", rt}});
  std::printf("%s: %zu grid points x %d replications in %.1fs, %d flagged\n", s.experiment.c_str(), s.rows.size(),
              s.replications, total, flagged);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Restricted VAR estimation, bounds and simulation experiments"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (created if missing)");
    sub->add_option("--reps", o.reps, "replications (experiment) or number of paths (simulate)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--workers", o.workers, "worker threads, 0 for one per core")->check(CLI::NonNegativeNumber);
  };
  auto* sim = app.add_subcommand("simulate", "simulate a VAR(1) path");
  auto* fit = app.add_subcommand("fit", "restricted least squares on a path csv");
  auto* bnd = app.add_subcommand("bounds", "evaluate the error bounds for a model");
  auto* exp = app.add_subcommand("experiment", "run a replication experiment");
  for (auto* s : {sim, fit, bnd, exp}) add_common(s);
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(o.out);
    if (sim->parsed()) return run_simulate(o);
    if (fit->parsed()) return run_fit(o);
    if (bnd->parsed()) return run_bounds(o);
    return run_experiment(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
