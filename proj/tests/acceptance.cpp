// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rvar/bounds.hpp"
#include "rvar/estimator.hpp"
#include "rvar/experiments.hpp"

using namespace rvar;

namespace {

constexpr int kSlopeReps = 300;
constexpr int kFastReps = 400;
constexpr int kDimReps = 2000;
constexpr int kKlPaths = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

// ---------------------------------------------------------------------------

RestrictionPattern random_pattern(int kind, std::mt19937_64& g) {
  std::uniform_int_distribution<int> pick_d(3, 6);
  int d = pick_d(g);
  switch (kind) {
    case 0:
      return Unrestricted{d};
    case 1:
      return Banded{d, 1 + static_cast<int>(g() % static_cast<unsigned>((d - 1) / 2))};
    case 2: {
      Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(d, d);
      std::bernoulli_distribution coin(0.4);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (i != j && coin(g)) adj(i, j) = 1;
      adj(0, d - 1) = 1;
      return Network{d, adj};
    }
    case 3: {
      d = 2 * (1 + static_cast<int>(g() % 3));
      return Grouped{d, d % 4 == 0 ? 4 : 2};
    }
    case 4:
      return ScaledIdentity{d};
    case 5: {
      const int p = 2 + static_cast<int>(g() % 2);
      std::shared_ptr<const RestrictionPattern> inner;
      if (g() % 2) inner = std::make_shared<const RestrictionPattern>(ScaledIdentity{2});
      return CompanionVarP{2, p, inner};
    }
    case 6: {
      Custom c;
      c.d = d;
      const int N = d * d;
      std::vector<int> idx(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), g);
      c.zeros = {idx[0], idx[1]};
      c.equal = {{idx[2], idx[3], idx[4]}};
      c.fixed = {{idx[5], 0.2}, {idx[6], -0.1}};
      return c;
    }
    default:
      return sparse_offdiagonal_pattern(d, d - 1, g());
  }
}

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(20240101);
  double worst = 0.0;
  double worst_lib = 0.0;
  int kinds_seen = 0;
  for (int i = 0; i < 100; ++i) {
    const int kind = i % 8;
    kinds_seen |= 1 << kind;
    const RestrictionPattern pat = random_pattern(kind, g);
    const RestrictionBasis b = build_basis(pat);
    const int d = b.d();
    Eigen::MatrixXd A = oracle::random_matrix(d, d, g);
    A *= 0.9 / std::max(1e-12, spectral_radius(A));
    std::uniform_int_distribution<int> pick_n(d + 5, 50);
    const SamplePath p = simulate(VarModel(A), pick_n(g), g());
    const FitResult f = fit(p, b);
    const oracle::Design z = oracle::design(p, b);
    worst = std::max(worst, rel_diff(f.theta_hat, oracle::min_norm_ls(z.Z, z.y, 1e-12)));
    worst_lib = std::max(worst_lib, rel_diff(f.theta_hat, fit_dense_oracle(p, b).theta_hat));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = worst <= 1e-8 && worst_lib <= 1e-8 && secs < 10.0 && kinds_seen == 0xff;
  return {ok, fmt("max relative theta discrepancy %.2e (pseudo-inverse), %.2e (library SVD oracle); 8 pattern kinds; %.2f s",
                  worst, worst_lib, secs)};
}

// ---------------------------------------------------------------------------

ExperimentConfig dgp3_config(double rho, int d, int reps, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.id = "acceptance";
  cfg.replications = reps;
  cfg.base_seed = seed;
  (void)rho;
  (void)d;
  return cfg;
}

GridPoint dgp3_point(double rho, int d, RestrictionPattern fit, int n) {
  DgpSpec s;
  s.which = 3;
  s.d = d;
  s.rho = rho;
  return {s, std::move(fit), n};
}

Outcome slope_collapse() {
  ExperimentConfig cfg = dgp3_config(0.2, 24, kSlopeReps, 11);
  for (int k0 : {1, 3, 7}) {
    const int m = free_parameter_count(Banded{24, k0});
    for (double x : {0.15, 0.35, 0.55, 0.75, 0.95})
      cfg.grid.push_back(dgp3_point(0.2, 24, Banded{24, k0}, static_cast<int>(std::lround(m / (x * x)))));
  }
  const ReplicationSummary s = run_experiment(cfg);
  const auto groups = check_slope_collapse(s.rows);
  const SlopeGroup& g = groups.at(0);
  std::string slopes;
  for (const auto& l : g.lines) slopes += fmt(" m=%d:%.4f", l.m, l.slope);
  const bool ok = groups.size() == 1 && g.slope_ratio >= 1.0 && g.slope_ratio <= 1.10 && g.min_r2 >= 0.99;
  return {ok, fmt("slope ratio %.4f, min R^2 %.5f, slopes%s; %d reps", g.slope_ratio, g.min_r2, slopes.c_str(),
                  kSlopeReps)};
}

Outcome fast_rate() {
  ExperimentConfig cfg = dgp3_config(1.0, 24, kFastReps, 12);
  for (int n : {200, 400, 800, 1600}) cfg.grid.push_back(dgp3_point(1.0, 24, Banded{24, 1}, n));
  const ReplicationSummary s = run_experiment(cfg);
  const FastRateDiagnostic byn = check_fast_rate(s.rows, RateScale::TimesN);
  const FastRateDiagnostic bysqrt = check_fast_rate(s.rows, RateScale::TimesSqrtN);
  std::string seq;
  for (double v : byn.scaled) seq += fmt(" %.3f", v);
  const bool ok = byn.tail_change <= 0.20 && bysqrt.tail_change >= 0.25;
  return {ok, fmt("n*err tail change %.4f, sqrt(n)*err tail change %.4f, n*err:%s; %d reps", byn.tail_change,
                  bysqrt.tail_change, seq.c_str(), kFastReps)};
}

Outcome dimension_independence() {
  ExperimentConfig cfg = dgp3_config(0.2, 0, kDimReps, 13);
  for (int d : {25, 100, 400}) cfg.grid.push_back(dgp3_point(0.2, d, ScaledIdentity{d}, 100));
  const ReplicationSummary s = run_experiment(cfg);
  double lo = 1e300;
  double hi = 0.0;
  std::string seq;
  for (const auto& r : s.rows) {
    lo = std::min(lo, r.mean_error);
    hi = std::max(hi, r.mean_error);
    seq += fmt(" d=%d:%.5f(+-%.5f)", r.d, r.mean_error, r.stderr_);
  }
  return {hi / lo <= 1.10, fmt("max/min %.4f,%s; %d reps", hi / lo, seq.c_str(), kDimReps)};
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, RestrictionBasis>> every_builder(int d) {
  std::vector<std::pair<std::string, RestrictionBasis>> out;
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(d, d);
  for (int i = 0; i + 1 < d; ++i) adj(i, i + 1) = adj(i + 1, i) = 1;
  Custom c;
  c.d = d;
  c.zeros = {1, 2};
  c.equal = {{0, d + 1}};
  c.fixed = {{3, 0.4}};
  const std::vector<RestrictionPattern> pats = {
      Unrestricted{d}, Banded{d, 1}, Banded{d, 2}, Network{d, adj}, Grouped{d, 2}, Grouped{d, 3}, ScaledIdentity{d},
      CompanionVarP{2, d / 2, nullptr}, CompanionVarP{2, d / 2, std::make_shared<const RestrictionPattern>(ScaledIdentity{2})},
      c, sparse_offdiagonal_pattern(d, 4, 3)};
  for (const auto& p : pats) out.emplace_back(pattern_name(p), build_basis(p));
  std::mt19937_64 g(5);
  ConstraintForm cf;
  cf.shape = {d, d};
  cf.C = oracle::random_matrix(d * d - 7, d * d, g);
  cf.mu = oracle::random_matrix(d * d - 7, 1, g);
  out.emplace_back("from_constraints", basis_from_constraints(cf));
  return out;
}

Outcome closed_form_spectrum() {
  const int d = 6;
  double worst = 0.0;
  int checks = 0;
  for (const auto& [name, b] : every_builder(d))
    for (double rho : {0.0, 0.3, 0.9, 1.0, 1.05})
      for (int k : {1, 5, 20}) {
        const Eigen::MatrixXd A = rho * Eigen::MatrixXd::Identity(d, d);
        worst = std::max(worst, std::abs(gamma_Rk_lambda_max(b, gramian(A, k)) - 1.0 / oracle::gamma_scalar(rho, k)));
        ++checks;
      }
  return {worst <= 1e-10, fmt("max |lambda_max - 1/gamma_k| = %.2e over %d (builder, rho, k) cases", worst, checks)};
}

Outcome monotonicity() {
  const int d = 6;
  struct Pair {
    RestrictionPattern coarse;
    RestrictionPattern fine;
  };
  const std::vector<Pair> pairs = {{Unrestricted{d}, Banded{d, 1}},
                                   {Banded{d, 2}, Banded{d, 1}},
                                   {Banded{d, 1}, ScaledIdentity{d}},
                                   {Grouped{d, 6}, Grouped{d, 2}},
                                   {Grouped{d, 3}, ScaledIdentity{d}}};
  std::mt19937_64 g(6);
  double slack_gamma = 1e300;
  double slack_k = 1e300;
  double slack_nest = 1e300;
  int cases = 0;
  bool all_nested = true;
  for (const auto& pr : pairs) {
    const RestrictionBasis coarse = build_basis(pr.coarse);
    const RestrictionBasis fine = build_basis(pr.fine);
    all_nested = all_nested && nest_check(coarse, fine).nested;
    for (double rho : {0.3, 0.9, 1.0, 1.05}) {
      ++cases;
      Eigen::MatrixXd A = oracle::random_matrix(d, d, g);
      A *= rho / spectral_radius(A);
      GramianCache cache(A);
      for (int t = 1; t < 20; ++t) slack_gamma = std::min(slack_gamma, oracle::lambda_min_sym(cache.at(t + 1) - cache.at(t)));
      for (const RestrictionBasis* b : {&coarse, &fine}) {
        double prev = gamma_Rk_lambda_max(*b, cache.at(1));
        for (int k = 2; k <= 20; ++k) {
          const double cur = gamma_Rk_lambda_max(*b, cache.at(k));
          slack_k = std::min(slack_k, prev - cur);
          prev = cur;
        }
      }
      for (int k : {1, 2, 5, 10, 20})
        slack_nest = std::min(slack_nest, oracle::lambda_min_sym(gamma_Rk_matrix(coarse, cache.at(k)) -
                                                                 gamma_Rk_matrix(fine, cache.at(k))));
    }
  }
  const double worst = std::min({slack_gamma, slack_k, slack_nest});
  return {worst >= -1e-9 && all_nested && cases == 20,
          fmt("min slacks: Gamma_t %.2e, lambda_max over k %.2e, nesting %.2e; %d cases", slack_gamma, slack_k,
              slack_nest, cases)};
}

Outcome kl_validation() {
  const RestrictionBasis b = build_basis(Unrestricted{2});
  Eigen::Vector4d theta(0.6, 0.2, -0.1, 0.4);
  Eigen::Vector4d theta0(0.3, 0.0, 0.1, 0.5);
  const int n = 10;
  const double kl = kl_divergence(theta, theta0, b, n);
  const Eigen::MatrixXd A = b.coefficients(theta);
  const Eigen::MatrixXd A0 = b.coefficients(theta0);
  const VarModel model(A);
  double s = 0.0;
  double ss = 0.0;
  for (int r = 0; r < kKlPaths; ++r) {
    const double l = log_likelihood_ratio(simulate(model, n, derive_seed(77, {static_cast<std::uint64_t>(r)})), A, A0);
    s += l;
    ss += l * l;
  }
  const double mean = s / kKlPaths;
  const double se = std::sqrt((ss / kKlPaths - mean * mean) / (kKlPaths - 1));
  const double self = kl_divergence(theta, theta, b, n);
  const bool ok = std::abs(mean - kl) <= 3.0 * se && self == 0.0;
  return {ok, fmt("closed form %.5f, Monte Carlo %.5f +- %.5f (%.2f SE); kl(theta,theta) = %g", kl, mean, se,
                  std::abs(mean - kl) / se, self)};
}

Outcome sigma_x_agreement() {
  std::mt19937_64 g(8);
  double worst = 0.0;
  std::string parts;
  for (auto [d, n] : {std::pair{4, 50}, std::pair{8, 100}, std::pair{2, 500}}) {
    Eigen::MatrixXd A = oracle::random_matrix(d, d, g);
    A *= 0.8 / spectral_radius(A);
    GramianCache cache(A);
    const double dense = oracle::lambda_max_sym(oracle::sigma_x(A, 1.0, n));
    SigmaXNorm mf = sigma_x_norm(cache, 1.0, n);
    std::string method = fmt("power(%d it)", mf.iterations);
    if (mf.dense_fallback) {
      // The dense fallback is not matrix-free; report the Lanczos stage instead.
      mf = sigma_x_norm_lanczos(cache, 1.0, n);
      method = fmt("lanczos(%d it)", mf.iterations);
    }
    const double r = std::abs(mf.value - dense) / dense;
    worst = std::max(worst, r);
    parts += fmt(" (%d,%d): %.1e %s", d, n, r, method.c_str());
  }
  return {worst <= 1e-6, fmt("max relative gap %.2e;%s", worst, parts.c_str())};
}

Outcome phase_sanity() {
  const BoundConfig cfg;
  const RateResult one = thm3_bound(VarModel(Eigen::MatrixXd::Identity(24, 24)), 70, 400, cfg);
  const RateResult low = thm3_bound(VarModel(0.2 * Eigen::MatrixXd::Identity(24, 24)), 70, 400, cfg);
  const RateResult fast = thm3_bound(VarModel(Eigen::MatrixXd::Identity(24, 24)), 1, 400, cfg);
  const double want = (std::log(24.0 * 1.0 / 0.05) + std::log(400.0)) / 400.0;
  const bool ok = one.phase == Phase::Fast && low.phase == Phase::Slow && fast.phase == Phase::Fast &&
                  std::abs(fast.value - want) <= 1e-12;
  return {ok, fmt("rho=1 -> %s (threshold %.4f), rho=0.2 -> %s (threshold %.4f); fast value %.15f vs %.15f",
                  phase_name(one.phase).c_str(), one.threshold, phase_name(low.phase).c_str(), low.threshold, fast.value,
                  want)};
}

Outcome determinism() {
  auto run = [](int workers) {
    ExperimentConfig cfg = preset("fig1", 10, 1);
    cfg.workers = workers;
    const ReplicationSummary s = run_experiment(cfg);
    std::ostringstream os;
    emit_csv(s, os);
    emit_bound_overlay(s, BoundConfig{}, os);
    return os.str();
  };
  const std::string a = run(1);
  const std::string b = run(8);
  const std::string c = run(1);
  return {a == b && a == c, fmt("workers=1 vs 8 vs 1: %s (%zu bytes)", a == b && a == c ? "identical" : "DIFFERENT", a.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"slow-rate slope collapse", slope_collapse},
      {"fast-rate regime", fast_rate},
      {"dimension independence", dimension_independence},
      {"closed-form lambda_max", closed_form_spectrum},
      {"monotonicity suite", monotonicity},
      {"KL validation", kl_validation},
      {"Sigma_X matrix-free vs dense", sigma_x_agreement},
      {"phase classifier sanity", phase_sanity},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
