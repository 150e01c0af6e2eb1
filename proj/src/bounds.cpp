#include "rvar/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rvar/rng.hpp"

namespace rvar {

// ---------------------------------------------------------------------------

GramianCache::GramianCache(Eigen::MatrixXd A) : A_(std::move(A)) {
  if (A_.rows() != A_.cols() || A_.rows() == 0) throw std::invalid_argument("GramianCache: A must be square");
  gammas_.push_back(Eigen::MatrixXd::Identity(A_.rows(), A_.cols()));
}

int GramianCache::filled() const {
  std::shared_lock lock(mu_);
  return static_cast<int>(gammas_.size());
}

const Eigen::MatrixXd& GramianCache::at(int t) {
  if (t < 1) throw std::invalid_argument("gramian: t must be at least 1");
  {
    std::shared_lock lock(mu_);
    if (static_cast<int>(gammas_.size()) >= t) return gammas_[t - 1];
  }
  std::unique_lock lock(mu_);
  while (static_cast<int>(gammas_.size()) < t) {
    Eigen::MatrixXd next = A_ * gammas_.back() * A_.transpose();
    next.diagonal().array() += 1.0;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite())
      throw std::overflow_error("gramian: overflow at t=" + std::to_string(gammas_.size() + 1));
    gammas_.push_back(std::move(next));
  }
  return gammas_[t - 1];
}

Eigen::MatrixXd gramian(const Eigen::MatrixXd& A, int t) {
  if (t < 1) throw std::invalid_argument("gramian: t must be at least 1");
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  for (int s = 1; s < t; ++s) {
    G = (A * G * A.transpose()).eval();
    G.diagonal().array() += 1.0;
  }
  if (!G.allFinite()) throw std::overflow_error("gramian: overflow at t=" + std::to_string(t));
  return 0.5 * (G + G.transpose());
}

double scalar_gramian(double rho, int t) {
  const double r2 = rho * rho;
  double sum = 0.0;
  double p = 1.0;
  for (int s = 0; s < t; ++s) {
    sum += p;
    p *= r2;
  }
  return sum;
}

double gamma_Rk_lambda_max(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_k) {
  if (basis.m() == 0) return 0.0;
  const Eigen::MatrixXd M = basis.block_congruence(Gamma_k);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(basis.RtR(), M, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success)
    throw std::runtime_error("gamma_Rk: R^T (I kron Gamma_k) R is numerically singular");
  return ges.eigenvalues().maxCoeff();
}

Eigen::MatrixXd gamma_Rk_matrix(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_k) {
  if (basis.m() == 0) return Eigen::MatrixXd::Zero(basis.N(), basis.N());
  Eigen::LLT<Eigen::MatrixXd> llt(basis.block_congruence(Gamma_k));
  if (llt.info() != Eigen::Success) throw std::runtime_error("gamma_Rk: inner matrix is not positive definite");
  return basis.R() * llt.solve(basis.R().transpose());
}

// ---------------------------------------------------------------------------

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Auto: return "auto";
    case Regime::Explosive: return "explosive";
    case Regime::Stable1: return "stable1";
    case Regime::Stable2: return "stable2";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "auto") return Regime::Auto;
  if (s == "explosive") return Regime::Explosive;
  if (s == "stable1") return Regime::Stable1;
  if (s == "stable2") return Regime::Stable2;
  throw std::invalid_argument("unknown regime '" + s + "' (expected auto, explosive, stable1 or stable2)");
}

std::string phase_name(Phase p) { return p == Phase::Slow ? "slow" : "fast"; }

void BoundConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bounds: delta must lie in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bounds: alpha must lie in (0,1)");
  if (C0 && !(*C0 > 0.0)) throw std::invalid_argument("bounds: C0 must be positive");
  if (!(C1 > 0.0 && c_explosive > 0.0 && c1_phase > 0.0 && k_constant > 0.0 && rate_constant > 0.0))
    throw std::invalid_argument("bounds: constants must be positive");
  if (b_max && *b_max < 1) throw std::invalid_argument("bounds: b_max must be at least 1");
  if (cond_S && !(*cond_S >= 1.0)) throw std::invalid_argument("bounds: cond_S must be at least 1");
}

Regime resolve_regime(Regime requested, double rho, const InnovationLaw& law) {
  if (requested != Regime::Auto) return requested;
  if (rho >= 1.0) return Regime::Explosive;
  return is_normal(law) ? Regime::Stable2 : Regime::Stable1;
}

SpectralInputs spectral_inputs(const SpectralStats& stats, const BoundConfig& cfg, Regime regime) {
  SpectralInputs s;
  s.rho = stats.rho;
  s.sigma_min = stats.sigma_min;
  const bool need = regime == Regime::Explosive;
  if (cfg.cond_S) {
    s.cond_S = *cfg.cond_S;
  } else if (stats.cond_S) {
    s.cond_S = *stats.cond_S;
  } else if (need) {
    s.cond_S = stats.effective_cond_S();  // throws
  }
  if (cfg.b_max) {
    s.b_max = *cfg.b_max;
  } else if (need || stats.diagonalizable || stats.b_max_override) {
    s.b_max = stats.effective_b_max();
  }
  return s;
}

// ---------------------------------------------------------------------------

double c0_normal() { return 1.0 / std::sqrt(2.0 * std::numbers::pi); }

double c0_student(double dof) {
  if (!(dof > 2.0)) throw std::invalid_argument("c0_student: dof must exceed 2");
  const double log_f0 = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi);
  return std::exp(log_f0) * std::sqrt(dof / (dof - 2.0));
}

double c0_for(const InnovationLaw& law) {
  if (const auto* t = std::get_if<StudentTLaw>(&law)) return c0_student(t->dof);
  return c0_normal();
}

Eigen::MatrixXd bmsb_threshold(double sigma2, const Eigen::MatrixXd& Gamma_k, double C0) {
  const double s = 4.0 * C0;
  return sigma2 * Gamma_k / (s * s);
}

BmsbEstimate empirical_bmsb(const VarModel& model, int k, const Eigen::VectorXd& omega, int reps, std::uint64_t seed,
                            std::optional<double> C0) {
  if (reps < 1000) throw std::invalid_argument("empirical_bmsb: need at least 1000 replications");
  if (k < 1) throw std::invalid_argument("empirical_bmsb: k must be at least 1");
  if (omega.size() != model.d()) throw std::invalid_argument("empirical_bmsb: omega has the wrong length");
  const Eigen::VectorXd w = omega.normalized();
  const Eigen::MatrixXd Gsb = bmsb_threshold(model.sigma2, gramian(model.A, k), C0.value_or(c0_for(model.law)));
  const double nu = std::sqrt(w.dot(Gsb * w));

  double sum = 0.0;
  double sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const SamplePath p = simulate(model, 2 * k, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    const Eigen::VectorXd proj = p.X * w;  // X_1..X_{2k}
    const double frac = static_cast<double>((proj.array().abs() >= nu).count()) / (2.0 * k);
    sum += frac;
    sumsq += frac * frac;
  }
  BmsbEstimate e;
  e.probability = sum / reps;
  const double var = std::max(0.0, (sumsq - reps * e.probability * e.probability) / (reps - 1));
  e.stderr_ = std::sqrt(var / reps);
  return e;
}

UpperGram upper_gram_choice(const VarModel& model, const RestrictionBasis& basis, GramianCache& cache, int n,
                            const BoundConfig& cfg, Regime regime) {
  const Eigen::MatrixXd Mn = basis.block_congruence(cache.at(n));
  UpperGram u;
  if (regime == Regime::Stable2 && is_normal(model.law)) {
    u.which = 2;
    u.xi = xi(cache, model.sigma2, basis.m(), n, cfg);
    u.matrix = model.sigma2 * Mn + model.sigma2 * u.xi * basis.RtR();
  } else {
    u.which = 1;
    u.matrix = model.sigma2 * basis.m() * Mn / cfg.delta;
  }
  return u;
}

double logdet_spd(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    llt.compute(S);
    if (llt.info() != Eigen::Success) throw std::runtime_error("logdet: matrix is not positive definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double kappa(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_n) {
  if (basis.m() == 0) return 0.0;
  return logdet_spd(basis.block_congruence(Gamma_n)) - logdet_spd(basis.RtR());
}

// ---------------------------------------------------------------------------

double psi(int m, int d, double delta, double C1) {
  return C1 * (m * std::log(9.0) + std::log(static_cast<double>(d)) + std::log(2.0 / delta));
}

namespace {

std::vector<const Eigen::MatrixXd*> gramian_sequence(GramianCache& cache, int n) {
  std::vector<const Eigen::MatrixXd*> g(static_cast<std::size_t>(n));
  for (int t = 1; t <= n; ++t) g[t - 1] = &cache.at(t);
  return g;
}

// out = Sigma_X v with v, out stored as d x n (column t-1 is block t).
void sigma_x_apply(const Eigen::MatrixXd& A, const std::vector<const Eigen::MatrixXd*>& G, double sigma2,
                   const Eigen::MatrixXd& v, Eigen::MatrixXd& out) {
  const auto n = static_cast<Eigen::Index>(G.size());
  Eigen::VectorXd u = *G[0] * v.col(0);
  out.col(0) = u;
  for (Eigen::Index t = 1; t < n; ++t) {
    u = A * u + *G[t] * v.col(t);
    out.col(t) = u;
  }
  Eigen::VectorXd r = Eigen::VectorXd::Zero(A.rows());
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    r = A.transpose() * (v.col(t + 1) + r);
    out.col(t) += *G[t] * r;
  }
  out *= sigma2;
}

struct Lanczos {
  double value = 0.0;
  int steps = 0;
  bool converged = false;
};

// Largest eigenvalue by Lanczos with full reorthogonalization, started from v.
// Stops when the Ritz residual bound falls below 1e-9 relative or the top Ritz
// value has not moved by more than 1e-12 relative over 20 steps.
Lanczos sigma_x_lanczos(const Eigen::MatrixXd& A, const std::vector<const Eigen::MatrixXd*>& G, double sigma2,
                        const Eigen::MatrixXd& start) {
  const Eigen::Index d = A.rows();
  const auto n = static_cast<Eigen::Index>(G.size());
  const Eigen::Index dn = d * n;
  // Keep the basis under ~2e7 doubles.
  const Eigen::Index kmax = std::min<Eigen::Index>({dn, 600, std::max<Eigen::Index>(50, 20000000 / dn)});
  Eigen::MatrixXd Q(dn, kmax);
  Eigen::VectorXd alpha(kmax), beta(kmax);
  Q.col(0) = Eigen::Map<const Eigen::VectorXd>(start.data(), dn).normalized();
  Eigen::MatrixXd V(d, n), W(d, n);
  Lanczos out;
  double prev = 0.0;
  int still = 0;
  for (Eigen::Index j = 0; j < kmax; ++j) {
    Eigen::Map<Eigen::VectorXd>(V.data(), dn) = Q.col(j);
    sigma_x_apply(A, G, sigma2, V, W);
    Eigen::Map<Eigen::VectorXd> w(W.data(), dn);
    alpha[j] = Q.col(j).dot(w);
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    beta[j] = w.norm();
    out.steps = static_cast<int>(j + 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(alpha.head(j + 1), beta.head(j), Eigen::ComputeEigenvectors);
    const double theta = es.eigenvalues()[j];
    out.value = theta;
    const double resid = beta[j] * std::abs(es.eigenvectors()(j, j));
    if (resid <= 1e-9 * std::abs(theta) || beta[j] <= 1e-14 * std::abs(theta)) {
      out.converged = true;
      break;
    }
    still = std::abs(theta - prev) <= 1e-12 * std::abs(theta) ? still + 1 : 0;
    prev = theta;
    if (still >= 20) {
      out.converged = true;
      break;
    }
    if (j + 1 < kmax) Q.col(j + 1) = w / beta[j];
  }
  return out;
}

Eigen::MatrixXd random_start(int d, int n) {
  Engine eng = make_engine(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd v(d, n);
  for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] = normal(eng);
  return v / v.norm();
}

}  // namespace

Eigen::MatrixXd sigma_x_dense(GramianCache& cache, double sigma2, int n) {
  const int d = cache.d();
  const auto G = gramian_sequence(cache, n);
  Eigen::MatrixXd S(static_cast<Eigen::Index>(d) * n, static_cast<Eigen::Index>(d) * n);
  for (int s = 0; s < n; ++s) {
    Eigen::MatrixXd P = *G[s];
    for (int t = s; t < n; ++t) {
      S.block(t * d, s * d, d, d) = sigma2 * P;
      if (t != s) S.block(s * d, t * d, d, d) = sigma2 * P.transpose();
      P = (cache.A() * P).eval();
    }
  }
  return S;
}

double sigma_x_norm_dense(GramianCache& cache, double sigma2, int n) {
  const Eigen::MatrixXd S = sigma_x_dense(cache, sigma2, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("sigma_x: dense eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SigmaXNorm sigma_x_norm(GramianCache& cache, double sigma2, int n) {
  if (n < 1) throw std::invalid_argument("sigma_x: n must be at least 1");
  constexpr int kMaxIter = 1000;
  constexpr double kTol = 1e-9;
  constexpr double kResidualTol = 1e-6;
  constexpr long kDenseLimit = 4000;
  const int d = cache.d();
  const auto G = gramian_sequence(cache, n);

  Eigen::MatrixXd v = random_start(d, n);

  SigmaXNorm res;
  Eigen::MatrixXd w(d, n);
  double lambda = 0.0;
  for (int it = 1; it <= kMaxIter; ++it) {
    sigma_x_apply(cache.A(), G, sigma2, v, w);
    const double next = (v.array() * w.array()).sum();
    res.iterations = it;
    const double wn = w.norm();
    if (!std::isfinite(wn)) throw std::overflow_error("sigma_x: overflow in power iteration");
    // A small Rayleigh change alone can stall on clustered top eigenvalues,
    // so also require a small eigen-residual before stopping.
    if (it > 1 && std::abs(next - lambda) <= kTol * std::abs(next) &&
        (w - next * v).norm() <= kResidualTol * std::abs(next)) {
      lambda = next;
      res.converged = true;
      break;
    }
    lambda = next;
    if (wn == 0.0) {
      res.converged = true;
      break;
    }
    v = w / wn;
  }
  res.value = lambda;
  if (!res.converged) {
    if (static_cast<long>(d) * n <= kDenseLimit) {
      res.value = sigma_x_norm_dense(cache, sigma2, n);
      res.dense_fallback = true;
      res.converged = true;
    } else {
      const Lanczos l = sigma_x_lanczos(cache.A(), G, sigma2, v);
      res.value = std::max(lambda, l.value);
      res.iterations += l.steps;
      res.converged = l.converged;
      res.lanczos_fallback = true;
      if (!res.converged) throw std::runtime_error("sigma_x: neither power iteration nor Lanczos converged");
    }
  }
  return res;
}

SigmaXNorm sigma_x_norm_lanczos(GramianCache& cache, double sigma2, int n) {
  if (n < 1) throw std::invalid_argument("sigma_x: n must be at least 1");
  const auto G = gramian_sequence(cache, n);
  const Lanczos l = sigma_x_lanczos(cache.A(), G, sigma2, random_start(cache.d(), n));
  SigmaXNorm res;
  res.value = l.value;
  res.iterations = l.steps;
  res.converged = l.converged;
  res.lanczos_fallback = true;
  return res;
}

double xi_value(double lambda_max_Gamma_n, double psi_value, double sigma_x, double sigma2, int n) {
  const double r = psi_value * sigma_x / (sigma2 * n);
  return 2.0 * std::sqrt(lambda_max_Gamma_n * r) + 2.0 * r;
}

double xi(GramianCache& cache, double sigma2, int m, int n, const BoundConfig& cfg) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cache.at(n), Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double sx = sigma_x_norm(cache, sigma2, n).value;
  return xi_value(lmax, psi(m, cache.d(), cfg.delta, cfg.C1), sx, sigma2, n);
}

// ---------------------------------------------------------------------------

double feasible_k_denominator(Regime regime, int m, int d, int n, double delta, const SpectralInputs& s) {
  switch (regime) {
    case Regime::Explosive:
      return m * (std::log(d * s.cond_S / delta) + s.b_max * std::log(static_cast<double>(n)));
    case Regime::Stable1:
      return m * std::log(m / delta) + std::log(static_cast<double>(d));
    case Regime::Stable2:
      return m + std::log(d / delta);
    case Regime::Auto:
      break;
  }
  throw std::invalid_argument("regime must be resolved before evaluating a rate");
}

int feasible_k(Regime regime, int m, int d, int n, const BoundConfig& cfg, const SpectralInputs& s) {
  const double den = feasible_k_denominator(regime, m, d, n, cfg.delta, s);
  const double ceiling = cfg.k_constant * n / den;
  const double cap = std::floor(n / 2.0);
  const double k = std::floor(std::min(ceiling, cap));
  return static_cast<int>(std::max(1.0, k));
}

Thm1Result thm1_bound(const Thm1Inputs& in) {
  const double a = in.alpha;
  const double inner = 12.0 * in.m * std::log(14.0 / a) + 9.0 * in.logdet_ratio + 6.0 * std::log(1.0 / in.delta);
  Thm1Result r;
  r.value = 9.0 * in.sigma / a * std::sqrt(in.lambda_max_term / in.n * inner);
  r.n_required = 9.0 * in.k / (a * a) *
                 (in.m * std::log(27.0 / a) + 0.5 * in.logdet_ratio + std::log(static_cast<double>(in.q)) + std::log(1.0 / in.delta));
  r.valid = in.n >= r.n_required;
  return r;
}

PhaseResult classify_phase(Regime regime, double sigma_min, int m, int d, int n, const BoundConfig& cfg,
                           const SpectralInputs& s) {
  PhaseResult p;
  p.sigma_min = sigma_min;
  p.threshold = 1.0 - cfg.c1_phase * feasible_k_denominator(regime, m, d, n, cfg.delta, s) / n;
  p.phase = sigma_min <= p.threshold ? Phase::Slow : Phase::Fast;
  return p;
}

namespace {

// Numerator of the slow rates and of the Theorem 2 style rates.
double slow_numerator(Regime regime, int m, int d, int n, double delta, const SpectralInputs& s) {
  switch (regime) {
    case Regime::Explosive:
      return feasible_k_denominator(regime, m, d, n, delta, s);
    case Regime::Stable1:
      return m * std::log(m / delta);
    case Regime::Stable2:
      return m + std::log(1.0 / delta);
    case Regime::Auto:
      break;
  }
  throw std::invalid_argument("regime must be resolved before evaluating a rate");
}

void require_normal(Regime regime, const InnovationLaw& law) {
  if (regime == Regime::Stable2 && !is_normal(law))
    throw std::invalid_argument("the stable2 regime assumes normal innovations");
}

}  // namespace

double thm2_rate(Regime regime, double lambda_max_Gamma_Rk, int m, int d, int n, const BoundConfig& cfg,
                 const SpectralInputs& s) {
  return cfg.rate_constant * std::sqrt(lambda_max_Gamma_Rk * slow_numerator(regime, m, d, n, cfg.delta, s) / n);
}

double thm3_rate(Regime regime, Phase phase, double sigma_min, int m, int d, int n, const BoundConfig& cfg,
                 const SpectralInputs& s) {
  if (phase == Phase::Fast) return cfg.rate_constant * feasible_k_denominator(regime, m, d, n, cfg.delta, s) / n;
  const double f = std::max(0.0, 1.0 - sigma_min * sigma_min);
  return cfg.rate_constant * std::sqrt(f * slow_numerator(regime, m, d, n, cfg.delta, s) / n);
}

RateResult thm2_bound(const VarModel& model, const RestrictionBasis& basis, int n, const BoundConfig& cfg) {
  cfg.validate();
  const SpectralStats stats = spectral_stats(model.A);
  RateResult r;
  r.regime = resolve_regime(cfg.regime, stats.rho, model.law);
  require_normal(r.regime, model.law);
  const SpectralInputs s = spectral_inputs(stats, cfg, r.regime);
  const int m = basis.m();
  r.k = feasible_k(r.regime, m, model.d(), n, cfg, s);
  const double lam = gamma_Rk_lambda_max(basis, gramian(model.A, r.k));
  r.value = thm2_rate(r.regime, lam, m, model.d(), n, cfg, s);
  return r;
}

RateResult thm3_bound(const VarModel& model, const SpectralStats& stats, int m, int n, const BoundConfig& cfg) {
  cfg.validate();
  RateResult r;
  r.regime = resolve_regime(cfg.regime, stats.rho, model.law);
  require_normal(r.regime, model.law);
  const SpectralInputs s = spectral_inputs(stats, cfg, r.regime);
  r.k = feasible_k(r.regime, m, model.d(), n, cfg, s);
  const PhaseResult p = classify_phase(r.regime, stats.sigma_min, m, model.d(), n, cfg, s);
  r.phase = p.phase;
  r.threshold = p.threshold;
  r.value = thm3_rate(r.regime, p.phase, stats.sigma_min, m, model.d(), n, cfg, s);
  return r;
}

RateResult thm3_bound(const VarModel& model, int m, int n, const BoundConfig& cfg) {
  return thm3_bound(model, spectral_stats(model.A), m, n, cfg);
}

// ---------------------------------------------------------------------------

double kl_divergence(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta0, const RestrictionBasis& basis,
                     int n) {
  if (theta.size() != basis.m() || theta0.size() != basis.m())
    throw std::invalid_argument("kl_divergence: parameter length does not match the basis");
  if (basis.q() != basis.d()) throw std::invalid_argument("kl_divergence: basis must describe a square transition matrix");
  if (n < 1) throw std::invalid_argument("kl_divergence: n must be at least 1");
  const Eigen::MatrixXd A = basis.coefficients(theta);
  const Eigen::Index d = A.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd S = G;
  for (int t = 2; t <= n; ++t) {
    G = (A * G * A.transpose()).eval();
    G.diagonal().array() += 1.0;
    S += G;
  }
  if (!S.allFinite()) throw std::overflow_error("kl_divergence: Gramian sum overflowed");
  const Eigen::VectorXd diff = theta - theta0;
  return 0.5 * diff.dot(basis.block_congruence(S) * diff);
}

double log_likelihood_ratio(const SamplePath& path, const Eigen::MatrixXd& A, const Eigen::MatrixXd& A0,
                            double sigma2) {
  const Eigen::MatrixXd E = path.Y - path.X * A.transpose();
  const Eigen::MatrixXd E0 = path.Y - path.X * A0.transpose();
  return (E0.squaredNorm() - E.squaredNorm()) / (2.0 * sigma2);
}

MinimaxResult minimax_lower(int m, int n, double rho_bar, double delta, double c) {
  if (!(rho_bar > 0.0)) throw std::invalid_argument("minimax_lower: rho_bar must be positive");
  if (!(delta > 0.0 && delta < 0.25)) throw std::invalid_argument("minimax_lower: delta must lie in (0, 1/4)");
  if (m < 1 || n < 1) throw std::invalid_argument("minimax_lower: m and n must be positive");
  MinimaxResult r;
  const double nn = n;
  if (rho_bar < std::sqrt(1.0 - 1.0 / nn)) {
    r.regime = 1;
    r.rate = std::sqrt((1.0 - rho_bar * rho_bar) * m / nn);
  } else if (rho_bar <= 1.0 + c / nn) {
    r.regime = 2;
    r.rate = std::sqrt(static_cast<double>(m)) / nn;
  } else {
    r.regime = 3;
    r.rate = std::exp(-nn * std::log(rho_bar) + 0.5 * std::log((rho_bar * rho_bar - 1.0) * m / nn));
  }
  r.gamma_n = scalar_gramian(rho_bar, n);
  r.epsilon = std::sqrt((m + std::log(1.0 / delta)) / (nn * r.gamma_n));
  r.epsilon_admissible = r.epsilon <= rho_bar / 4.0;
  return r;
}

double mu_min_diagnostic(const Eigen::MatrixXd& A, int points) {
  if (points < 1) throw std::invalid_argument("mu_min: need at least one grid point");
  const Eigen::Index d = A.rows();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(d, d);
  const Eigen::MatrixXcd Ac = A.cast<std::complex<double>>();
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < points; ++j) {
    const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * j / points);
    const Eigen::MatrixXcd M = I - z * Ac;
    const double smin = Eigen::JacobiSVD<Eigen::MatrixXcd>(M).singularValues().minCoeff();
    best = std::min(best, smin * smin);
  }
  return best;
}

// ---------------------------------------------------------------------------

BoundReport bound_report(const VarModel& model, const RestrictionBasis& basis, int n, const BoundConfig& cfg,
                         bool with_xi) {
  cfg.validate();
  model.validate();
  if (basis.q() != model.d() || basis.d() != model.d())
    throw std::invalid_argument("bounds: basis shape does not match the model dimension");
  if (n < 1) throw std::invalid_argument("bounds: n must be at least 1");
  if (basis.m() < 1) throw std::invalid_argument("bounds: need at least one free parameter");

  const SpectralStats stats = spectral_stats(model.A);
  BoundReport r;
  r.n = n;
  r.m = basis.m();
  r.d = model.d();
  r.regime = resolve_regime(cfg.regime, stats.rho, model.law);
  require_normal(r.regime, model.law);
  r.spectral = spectral_inputs(stats, cfg, r.regime);
  r.C0 = cfg.C0.value_or(c0_for(model.law));
  const int m = r.m;
  const int d = r.d;

  GramianCache cache(model.A);
  r.k_max_feasible = feasible_k(r.regime, m, d, n, cfg, r.spectral);
  const Eigen::MatrixXd& Gk = cache.at(r.k_max_feasible);
  const Eigen::MatrixXd& Gn = cache.at(n);
  r.lambda_max_Gamma_Rk = gamma_Rk_lambda_max(basis, Gk);
  r.kappa = kappa(basis, Gn);

  const UpperGram up = upper_gram_choice(model, basis, cache, n, cfg, r.regime);
  r.upper_gram = up.which;
  r.xi = up.xi;
  if (with_xi && std::isnan(r.xi)) r.xi = xi(cache, model.sigma2, m, n, cfg);

  const double scale = 4.0 * r.C0;
  const double s2 = model.sigma2;
  const Eigen::MatrixXd under = s2 * basis.block_congruence(Gk) / (scale * scale);
  r.logdet_ratio = logdet_spd(up.matrix) - logdet_spd(s2 * basis.RtR() / (scale * scale));

  Thm1Inputs in;
  in.m = m;
  in.n = n;
  in.k = 2 * r.k_max_feasible;  // the small-ball condition holds over blocks of length 2k
  in.q = basis.q();
  in.alpha = cfg.alpha;
  in.sigma = std::sqrt(s2);
  in.delta = cfg.delta;
  in.lambda_max_term = scale * scale / s2 * r.lambda_max_Gamma_Rk;
  in.logdet_ratio = r.logdet_ratio;
  const Thm1Result t1 = thm1_bound(in);
  r.thm1_bound = t1.value;
  r.thm1_valid = t1.valid;
  r.n_required_thm1 = t1.n_required;

  Eigen::LLT<Eigen::MatrixXd> llt(under);
  if (llt.info() != Eigen::Success) throw std::runtime_error("bounds: lower Gram matrix is not positive definite");
  const Eigen::MatrixXd under_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis.block_outer(under_inv), Eigen::EigenvaluesOnly);
  in.lambda_max_term = es.eigenvalues().maxCoeff();
  r.prop1_bound = thm1_bound(in).value;

  r.thm2_bound = thm2_rate(r.regime, r.lambda_max_Gamma_Rk, m, d, n, cfg, r.spectral);
  const PhaseResult p = classify_phase(r.regime, stats.sigma_min, m, d, n, cfg, r.spectral);
  r.phase = p.phase;
  r.phase_threshold = p.threshold;
  r.thm3_bound = thm3_rate(r.regime, p.phase, stats.sigma_min, m, d, n, cfg, r.spectral);

  if (stats.rho > 0.0 && cfg.delta < 0.25) {
    r.lower = minimax_lower(m, n, stats.rho, cfg.delta, cfg.c_explosive);
  } else {
    r.lower.rate = std::numeric_limits<double>::quiet_NaN();
    r.lower.regime = 0;
  }
  return r;
}

}  // namespace rvar
