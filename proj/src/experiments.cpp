#include "rvar/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "rvar/estimator.hpp"

namespace rvar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int round_n(int m, double x) { return std::max(1, static_cast<int>(std::lround(m / (x * x)))); }

DgpSpec dgp3(int d, double rho) {
  DgpSpec s;
  s.which = 3;
  s.d = d;
  s.rho = rho;
  return s;
}

void add_fig1(ExperimentConfig& cfg) {
  const int d = 24;
  const double rhos[] = {0.2, 0.8, 1.0};
  const double xs[] = {0.15, 0.35, 0.55, 0.75, 0.95};
  for (int which : {1, 2, 3}) {
    for (double rho : rhos) {
      DgpSpec spec;
      spec.which = which;
      spec.d = d;
      spec.rho = rho;
      spec.k0 = 1;
      spec.K = 2;
      std::vector<RestrictionPattern> fits;
      if (which == 2) {
        for (int K : {2, 4, 12}) fits.push_back(Grouped{d, K});
      } else {
        for (int k0 : {1, 3, 7}) fits.push_back(Banded{d, k0});
      }
      for (const auto& f : fits) {
        const int m = free_parameter_count(f);
        for (double x : xs) cfg.grid.push_back({spec, f, round_n(m, x)});
      }
    }
  }
}

void add_fig2a(ExperimentConfig& cfg) {
  const int d = 24;
  const int ns[] = {100, 200, 400, 800, 1600};
  const RestrictionPattern band = Banded{d, 1};
  for (double rho : {0.2, 0.4, 0.6})
    for (int n : ns) cfg.grid.push_back({dgp3(d, rho), band, n});

  const RestrictionPattern fits[] = {ScaledIdentity{d}, Banded{d, 1}};
  for (const auto& f : fits) {
    const int m = free_parameter_count(f);
    for (int mode = 0; mode < 4; ++mode) {
      if (m == 70 && mode == 3) continue;
      for (int n : ns) {
        double rho = 0.99;
        if (mode == 1) rho = 1.0 - (m + std::log(static_cast<double>(d))) / n;
        if (mode == 2) rho = 1.0 + 1.0 / n;
        if (mode == 3) rho = 1.01;
        cfg.grid.push_back({dgp3(d, rho), f, n});
      }
    }
  }
}

void add_fig2b(ExperimentConfig& cfg) {
  const int d = 24;
  for (int n : {200, 400, 800, 1600, 3200}) cfg.grid.push_back({dgp3(d, 1.0), Banded{d, 1}, n});
  const RestrictionPattern fits[] = {ScaledIdentity{d}, Banded{d, 1}, Banded{d, 3}, Banded{d, 7}};
  for (const auto& f : fits) cfg.grid.push_back({dgp3(d, 1.0), f, 400});
}

void add_fig3(ExperimentConfig& cfg) {
  for (double rho : {0.2, 0.8, 1.0}) {
    for (int n : {100, 500}) {
      for (int d : {25, 50, 100, 200, 300, 400, 500}) {
        cfg.grid.push_back({dgp3(d, rho), ScaledIdentity{d}, n});
        const std::uint64_t s = derive_seed(cfg.base_seed, {0x73706172ULL, static_cast<std::uint64_t>(d)});
        cfg.grid.push_back({dgp3(d, rho), sparse_offdiagonal_pattern(d, 19, s), n});
      }
    }
  }
}

std::uint64_t double_bits(double x) {
  std::uint64_t u = 0;
  std::memcpy(&u, &x, sizeof u);
  return u;
}

// Runs body(r) for r in [0, count) on `workers` threads. The first exception
// thrown by any worker is rethrown here.
template <typename F>
void parallel_for(int count, int workers, F&& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr err;
  std::mutex err_mu;
  auto loop = [&] {
    for (int r = next.fetch_add(1); r < count && !stop.load(); r = next.fetch_add(1)) {
      try {
        body(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

SpectralStats truth_stats(const DgpSpec& spec, const VarModel& truth) {
  if (spec.which == 3) {
    SpectralStats s;
    s.rho = std::abs(spec.rho);
    s.sigma_min = std::abs(spec.rho);
    s.sigma_max = std::abs(spec.rho);
    s.diagonalizable = true;
    s.cond_S = 1.0;
    return s;
  }
  return spectral_stats(truth.A);
}

bool same_key(const SummaryRow& a, const SummaryRow& b) {
  return a.dgp == b.dgp && a.rho == b.rho && a.d == b.d;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("experiment: replications must be at least 1");
  if (workers < 0) throw std::invalid_argument("experiment: workers must be nonnegative");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("experiment: sigma2 must be positive");
  if (grid.empty()) throw std::invalid_argument("experiment: empty grid");
  for (const auto& g : grid) {
    if (g.n < 1) throw std::invalid_argument("experiment: n must be at least 1");
    rvar::validate(g.fit);
    const ModelShape sh = pattern_shape(g.fit);
    if (sh.q != g.dgp.d || sh.d != g.dgp.d)
      throw std::invalid_argument("experiment: fitted pattern " + pattern_name(g.fit) + " does not match d=" +
                                  std::to_string(g.dgp.d));
  }
}

ExperimentConfig preset(const std::string& id, int replications, std::uint64_t base_seed) {
  ExperimentConfig cfg;
  cfg.id = id;
  cfg.replications = replications;
  cfg.base_seed = base_seed;
  if (id == "fig1") {
    add_fig1(cfg);
  } else if (id == "fig2a") {
    add_fig2a(cfg);
  } else if (id == "fig2b") {
    add_fig2b(cfg);
  } else if (id == "fig3") {
    add_fig3(cfg);
  } else {
    throw std::invalid_argument("unknown experiment '" + id + "' (expected fig1, fig2a, fig2b or fig3)");
  }
  return cfg;
}

ExperimentConfig config_from_json(const json& j) {
  const std::string id = j.value("experiment", std::string("custom"));
  const int reps = j.value("replications", 1000);
  const std::uint64_t seed = j.value("seed", std::uint64_t{1});
  ExperimentConfig cfg;
  if (id == "custom") {
    cfg.id = id;
    cfg.replications = reps;
    cfg.base_seed = seed;
    if (!j.contains("grid")) throw std::invalid_argument("custom experiment needs a \"grid\" array");
    for (const auto& e : j.at("grid")) {
      GridPoint g;
      g.dgp = dgp_from_json(e.at("dgp"));
      g.fit = pattern_from_json(e.at("fit"));
      if (e.contains("n")) {
        g.n = e.at("n").get<int>();
      } else if (e.contains("x")) {
        g.n = round_n(free_parameter_count(g.fit), e.at("x").get<double>());
      } else {
        throw std::invalid_argument("grid entry needs \"n\" or \"x\"");
      }
      cfg.grid.push_back(std::move(g));
    }
  } else {
    cfg = preset(id, reps, seed);
  }
  cfg.workers = j.value("workers", 0);
  cfg.sigma2 = j.value("sigma2", 1.0);
  if (j.contains("law")) cfg.law = law_from_json(j.at("law"));
  cfg.validate();
  return cfg;
}

std::uint64_t truth_seed(std::uint64_t base_seed, const DgpSpec& spec) {
  const int shape_param = spec.which == 1 ? spec.k0 : spec.which == 2 ? spec.K : 0;
  return derive_seed(base_seed, {0x7472757468ULL, static_cast<std::uint64_t>(spec.which),
                                 static_cast<std::uint64_t>(spec.d), static_cast<std::uint64_t>(shape_param),
                                 double_bits(spec.rho)});
}

VarModel truth_model(const ExperimentConfig& cfg, const GridPoint& g) {
  const std::uint64_t seed = g.dgp.which == 3 ? 0 : truth_seed(cfg.base_seed, g.dgp);
  VarModel base = make_dgp(g.dgp, seed);
  return VarModel(std::move(base.A), cfg.sigma2, cfg.law);
}

ReplicationSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  int workers = cfg.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  ReplicationSummary out;
  out.experiment = cfg.id;
  out.replications = cfg.replications;
  out.normal_innovations = is_normal(cfg.law);
  out.rows.reserve(cfg.grid.size());

  for (std::size_t gi = 0; gi < cfg.grid.size(); ++gi) {
    const GridPoint& g = cfg.grid[gi];
    const auto t0 = std::chrono::steady_clock::now();
    const VarModel truth = truth_model(cfg, g);
    const RestrictionBasis basis = build_basis(g.fit);
    const SpectralStats st = truth_stats(g.dgp, truth);

    std::vector<double> err(static_cast<std::size_t>(cfg.replications), kNaN);
    parallel_for(cfg.replications, workers, [&](int r) {
      try {
        const SamplePath path = simulate(truth, g.n, replication_seed(cfg.base_seed, gi, r));
        err[static_cast<std::size_t>(r)] = l2_error(fit(path, basis, false), truth.A);
      } catch (const SimulationOverflow&) {
        // counted as a failure below
      }
    });

    SummaryRow row;
    row.experiment = cfg.id;
    row.dgp = g.dgp.which;
    row.rho = g.dgp.rho;
    row.d = g.dgp.d;
    row.m = basis.m();
    row.n = g.n;
    double sum = 0.0;
    double sumsq = 0.0;
    for (double e : err) {
      if (!std::isfinite(e)) {
        ++row.fails;
        continue;
      }
      ++row.used;
      sum += e;
      sumsq += e * e;
    }
    if (row.used > 0) {
      row.mean_error = sum / row.used;
      const double var = row.used > 1 ? std::max(0.0, (sumsq - row.used * row.mean_error * row.mean_error) / (row.used - 1)) : 0.0;
      row.stderr_ = std::sqrt(var / row.used);
    } else {
      row.mean_error = kNaN;
      row.stderr_ = kNaN;
    }
    row.flagged = row.fails * 100 > cfg.replications;
    row.truth_rho = st.rho;
    row.truth_sigma_min = st.sigma_min;
    row.truth_cond_S = st.cond_S.value_or(kNaN);
    row.truth_diagonalizable = st.diagonalizable;
    row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SlopeGroup> check_slope_collapse(const std::vector<SummaryRow>& rows) {
  std::vector<SlopeGroup> groups;
  std::vector<std::vector<const SummaryRow*>> members;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const SlopeGroup& g) {
      return g.dgp == r.dgp && g.rho == r.rho && g.d == r.d;
    });
    if (it == groups.end()) {
      groups.push_back({r.dgp, r.rho, r.d, {}, 1.0, 1.0});
      members.emplace_back();
      it = groups.end() - 1;
    }
    members[static_cast<std::size_t>(it - groups.begin())].push_back(&r);
  }

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    SlopeGroup& g = groups[gi];
    std::vector<int> ms;
    for (const auto* r : members[gi])
      if (std::find(ms.begin(), ms.end(), r->m) == ms.end()) ms.push_back(r->m);
    double smin = std::numeric_limits<double>::infinity();
    double smax = 0.0;
    g.min_r2 = 1.0;
    for (int m : ms) {
      std::vector<double> x;
      std::vector<double> y;
      for (const auto* r : members[gi]) {
        if (r->m != m || !std::isfinite(r->mean_error)) continue;
        x.push_back(std::sqrt(static_cast<double>(r->m) / r->n));
        y.push_back(r->mean_error);
      }
      if (x.size() < 3)
        throw std::invalid_argument("check_slope_collapse: line m=" + std::to_string(m) + " has fewer than 3 points");
      double sxy = 0.0;
      double sxx = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
      }
      SlopeLine line;
      line.m = m;
      line.points = static_cast<int>(x.size());
      line.slope = sxy / sxx;
      double ybar = 0.0;
      for (double v : y) ybar += v;
      ybar /= static_cast<double>(y.size());
      double ss_res = 0.0;
      double ss_tot = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - line.slope * x[i];
        ss_res += e * e;
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
      }
      line.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
      smin = std::min(smin, line.slope);
      smax = std::max(smax, line.slope);
      g.min_r2 = std::min(g.min_r2, line.r2);
      g.lines.push_back(line);
    }
    g.slope_ratio = smax / smin;
  }
  return groups;
}

FastRateDiagnostic check_fast_rate(const std::vector<SummaryRow>& rows, RateScale scale) {
  const bool by_m = scale == RateScale::PerM || scale == RateScale::PerSqrtM;
  if (rows.size() < 3) throw std::invalid_argument("check_fast_rate: need at least 3 rows");
  for (const auto& r : rows) {
    if (!same_key(r, rows.front()) || (by_m ? r.n != rows.front().n : r.m != rows.front().m))
      throw std::invalid_argument("check_fast_rate: rows differ in more than the axis");
  }
  std::vector<const SummaryRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [&](const SummaryRow* a, const SummaryRow* b) { return by_m ? a->m < b->m : a->n < b->n; });

  FastRateDiagnostic out;
  for (const auto* r : sorted) {
    const double n = r->n;
    const double m = r->m;
    double s = r->mean_error;
    switch (scale) {
      case RateScale::TimesN: s *= n; break;
      case RateScale::TimesSqrtN: s *= std::sqrt(n); break;
      case RateScale::TimesN_Over2LogN: s *= n / (2.0 * std::log(n)); break;
      case RateScale::PerM: s /= m; break;
      case RateScale::PerSqrtM: s /= std::sqrt(m); break;
    }
    out.axis.push_back(by_m ? m : n);
    out.scaled.push_back(s);
  }
  const double last = out.scaled[out.scaled.size() - 1];
  const double prev = out.scaled[out.scaled.size() - 2];
  out.tail_change = std::abs(last - prev) / std::abs(prev);
  return out;
}

// ---------------------------------------------------------------------------

void emit_csv(const ReplicationSummary& summary, std::ostream& os) {
  os << "experiment,dgp,rho,d,m,n,mean_error,stderr,fails\n";
  char buf[256];
  for (const auto& r : summary.rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%d,%d,%d,%.12g,%.12g,%d\n", r.experiment.c_str(), r.dgp, r.rho, r.d,
                  r.m, r.n, r.mean_error, r.stderr_, r.fails);
    os << buf;
  }
}

void emit_csv(const ReplicationSummary& summary, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  emit_csv(summary, f);
}

void emit_bound_overlay(const ReplicationSummary& summary, const BoundConfig& cfg, std::ostream& os) {
  cfg.validate();
  const InnovationLaw law = summary.normal_innovations ? InnovationLaw{NormalLaw{}} : InnovationLaw{StudentTLaw{}};
  os << "experiment,dgp,rho,d,m,n,mean_error,stderr,fails,regime,phase,thm3_bound,minimax_lower\n";
  char buf[384];
  for (const auto& r : summary.rows) {
    double upper = kNaN;
    std::string regime = "none";
    std::string phase = "none";
    try {
      SpectralStats st;
      st.rho = r.truth_rho;
      st.sigma_min = r.truth_sigma_min;
      st.diagonalizable = r.truth_diagonalizable;
      if (std::isfinite(r.truth_cond_S)) st.cond_S = r.truth_cond_S;
      const Regime reg = resolve_regime(cfg.regime, st.rho, law);
      const SpectralInputs s = spectral_inputs(st, cfg, reg);
      const PhaseResult p = classify_phase(reg, st.sigma_min, r.m, r.d, r.n, cfg, s);
      upper = thm3_rate(reg, p.phase, st.sigma_min, r.m, r.d, r.n, cfg, s);
      regime = regime_name(reg);
      phase = phase_name(p.phase);
    } catch (const std::exception&) {
      // inputs the rate needs are unavailable (non-diagonalizable truth without b_max)
    }
    double lower = kNaN;
    if (r.truth_rho > 0.0 && cfg.delta < 0.25) lower = minimax_lower(r.m, r.n, r.truth_rho, cfg.delta, cfg.c_explosive).rate;
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%d,%d,%d,%.12g,%.12g,%d,%s,%s,%.12g,%.12g\n", r.experiment.c_str(), r.dgp,
                  r.rho, r.d, r.m, r.n, r.mean_error, r.stderr_, r.fails, regime.c_str(), phase.c_str(), upper, lower);
    os << buf;
  }
}

void emit_bound_overlay(const ReplicationSummary& summary, const BoundConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  emit_bound_overlay(summary, cfg, f);
}

}  // namespace rvar
