#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <shared_mutex>
#include <string>

#include <Eigen/Core>

#include "rvar/restrictions.hpp"
#include "rvar/var_core.hpp"

namespace rvar {

// ---------------------------------------------------------------------------
// Controllability Gramians

/// Gamma_t = sum_{s<t} A^s (A^T)^s, filled by Gamma_{t+1} = I + A Gamma_t A^T.
/// Reads take a shared lock; extending the cache takes the exclusive one.
/// References returned by at() stay valid for the cache's lifetime.
class GramianCache {
 public:
  explicit GramianCache(Eigen::MatrixXd A);
  GramianCache(const GramianCache&) = delete;
  GramianCache& operator=(const GramianCache&) = delete;

  const Eigen::MatrixXd& at(int t);
  const Eigen::MatrixXd& A() const { return A_; }
  int d() const { return static_cast<int>(A_.rows()); }
  int filled() const;

 private:
  Eigen::MatrixXd A_;
  mutable std::shared_mutex mu_;
  std::deque<Eigen::MatrixXd> gammas_;  // gammas_[t-1] = Gamma_t
};

Eigen::MatrixXd gramian(const Eigen::MatrixXd& A, int t);

// gamma_t(rho) = sum_{s<t} rho^{2s}.
double scalar_gramian(double rho, int t);

// M_k = R^T (I kron Gamma_k) R.
inline Eigen::MatrixXd gramian_congruence(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma) {
  return basis.block_congruence(Gamma);
}

// lambda_max of Gamma_{R,k} = R M_k^{-1} R^T, from the m x m pencil (R^T R, M_k).
double gamma_Rk_lambda_max(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_k);
// The full N x N matrix; only for small N.
Eigen::MatrixXd gamma_Rk_matrix(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_k);

// ---------------------------------------------------------------------------
// Configuration

enum class Regime { Auto, Explosive, Stable1, Stable2 };
enum class Phase { Slow, Fast };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& s);
std::string phase_name(Phase p);

struct BoundConfig {
  double delta = 0.05;
  double alpha = 0.1;
  std::optional<double> C0;  // default: sup of the innovation density
  double C1 = 1.0;           // constant in psi
  double c_explosive = 1.0;  // rho <= 1 + c/n
  double c1_phase = 1.0;
  double k_constant = 1.0;     // multiplies the feasible-k ceiling
  double rate_constant = 1.0;  // leading constant of the rate formulas
  Regime regime = Regime::Auto;
  std::optional<int> b_max;
  std::optional<double> cond_S;

  void validate() const;
};

// Auto resolves to Explosive when rho >= 1, otherwise Stable2 for normal
// innovations and Stable1 for the rest.
Regime resolve_regime(Regime requested, double rho, const InnovationLaw& law);

// Spectral inputs with the config overrides applied.
struct SpectralInputs {
  double rho = 0.0;
  double sigma_min = 0.0;
  double cond_S = 1.0;
  int b_max = 1;
};
SpectralInputs spectral_inputs(const SpectralStats& stats, const BoundConfig& cfg, Regime regime);

// ---------------------------------------------------------------------------
// Small-ball and upper Gram matrices

double c0_normal();
double c0_student(double dof);
double c0_for(const InnovationLaw& law);

// sigma^2 Gamma_k / (4 C0)^2
Eigen::MatrixXd bmsb_threshold(double sigma2, const Eigen::MatrixXd& Gamma_k, double C0);

struct BmsbEstimate {
  double probability = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo estimate at s = 0 of (2k)^{-1} sum_{t=1}^{2k} pr(|w^T X_t| >= (w^T Gamma_sb w)^{1/2}).
BmsbEstimate empirical_bmsb(const VarModel& model, int k, const Eigen::VectorXd& omega, int reps,
                            std::uint64_t seed, std::optional<double> C0 = std::nullopt);

struct UpperGram {
  Eigen::MatrixXd matrix;  // m x m
  int which = 1;
  double xi = std::numeric_limits<double>::quiet_NaN();  // set when which == 2
};

UpperGram upper_gram_choice(const VarModel& model, const RestrictionBasis& basis, GramianCache& cache, int n,
                            const BoundConfig& cfg, Regime regime);

// log det(M_n) - log det(R^T R)
double kappa(const RestrictionBasis& basis, const Eigen::MatrixXd& Gamma_n);

// log det of a symmetric positive definite matrix; symmetrizes once before giving up.
double logdet_spd(const Eigen::MatrixXd& M);

// ---------------------------------------------------------------------------
// Covariance of vec(X^T) and xi

double psi(int m, int d, double delta, double C1);

struct SigmaXNorm {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  bool dense_fallback = false;
  bool lanczos_fallback = false;  // dn too large for the dense solve
};

// |Sigma_X|_2 for X_1..X_n by power iteration with O(n d^2) block products.
// If that stalls (clustered top eigenvalues), dn <= 4000 goes to the dense
// solve and larger operators to Lanczos with full reorthogonalization.
SigmaXNorm sigma_x_norm(GramianCache& cache, double sigma2, int n);
// The Lanczos stage on its own, started from the same fixed random vector.
SigmaXNorm sigma_x_norm_lanczos(GramianCache& cache, double sigma2, int n);
// Dense eigensolve of the explicitly assembled dn x dn matrix.
double sigma_x_norm_dense(GramianCache& cache, double sigma2, int n);
Eigen::MatrixXd sigma_x_dense(GramianCache& cache, double sigma2, int n);

double xi_value(double lambda_max_Gamma_n, double psi_value, double sigma_x, double sigma2, int n);
double xi(GramianCache& cache, double sigma2, int m, int n, const BoundConfig& cfg);

// ---------------------------------------------------------------------------
// Rates

// The regime's numerator: m[log(d cond/delta) + b log n], m log(m/delta) + log d, or m + log(d/delta).
double feasible_k_denominator(Regime regime, int m, int d, int n, double delta, const SpectralInputs& s);
int feasible_k(Regime regime, int m, int d, int n, const BoundConfig& cfg, const SpectralInputs& s);

struct Thm1Inputs {
  int m = 1;
  int n = 1;
  int k = 1;  // block length in the sample-size condition
  int q = 1;
  double alpha = 0.1;
  double sigma = 1.0;
  double delta = 0.05;
  double lambda_max_term = 1.0;  // lambda_max(R Gamma_under^{-1} R^T), or the spectral-norm variant
  double logdet_ratio = 0.0;     // log det(Gamma_over Gamma_under^{-1})
};

struct Thm1Result {
  double value = 0.0;
  bool valid = false;
  double n_required = 0.0;
};

Thm1Result thm1_bound(const Thm1Inputs& in);

struct PhaseResult {
  Phase phase = Phase::Slow;
  double threshold = 0.0;
  double sigma_min = 0.0;
};

PhaseResult classify_phase(Regime regime, double sigma_min, int m, int d, int n, const BoundConfig& cfg,
                           const SpectralInputs& s);

// sqrt(lambda_max(Gamma_{R,k}) * numerator / n)
double thm2_rate(Regime regime, double lambda_max_Gamma_Rk, int m, int d, int n, const BoundConfig& cfg,
                 const SpectralInputs& s);
double thm3_rate(Regime regime, Phase phase, double sigma_min, int m, int d, int n, const BoundConfig& cfg,
                 const SpectralInputs& s);

struct RateResult {
  double value = 0.0;
  Regime regime = Regime::Stable1;
  int k = 1;
  Phase phase = Phase::Slow;
  double threshold = 0.0;
};

// Model-level wrappers. They throw if Stable2 is requested without normal innovations.
RateResult thm2_bound(const VarModel& model, const RestrictionBasis& basis, int n, const BoundConfig& cfg);
RateResult thm3_bound(const VarModel& model, int m, int n, const BoundConfig& cfg);
RateResult thm3_bound(const VarModel& model, const SpectralStats& stats, int m, int n, const BoundConfig& cfg);

// ---------------------------------------------------------------------------
// Lower bounds

// KL between the laws of X_1..X_{n+1} under A(theta) and A(theta0), normal innovations:
// (1/2)(theta-theta0)^T R^T (I kron sum_{t<=n} Gamma_t(theta)) R (theta-theta0).
double kl_divergence(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta0, const RestrictionBasis& basis,
                     int n);

// Log-likelihood ratio log p_theta / p_theta0 of one path, sigma^2 = 1.
double log_likelihood_ratio(const SamplePath& path, const Eigen::MatrixXd& A, const Eigen::MatrixXd& A0,
                            double sigma2 = 1.0);

struct MinimaxResult {
  double rate = 0.0;
  int regime = 1;  // 1: rho < sqrt(1-1/n), 2: rho <= 1 + c/n, 3: beyond
  double gamma_n = 0.0;
  double epsilon = 0.0;
  bool epsilon_admissible = false;  // epsilon <= rho/4
};

MinimaxResult minimax_lower(int m, int n, double rho_bar, double delta, double c = 1.0);

// inf over a 512-point grid of |z| = 1 of lambda_min((I - zA)^* (I - zA)).
double mu_min_diagnostic(const Eigen::MatrixXd& A, int points = 512);

// ---------------------------------------------------------------------------

struct BoundReport {
  Regime regime = Regime::Stable1;
  int n = 0;
  int m = 0;
  int d = 0;
  int k_max_feasible = 1;
  double lambda_max_Gamma_Rk = 0.0;
  double kappa = 0.0;
  double xi = 0.0;  // NaN when not evaluated
  int upper_gram = 1;
  double logdet_ratio = 0.0;
  double thm1_bound = 0.0;
  bool thm1_valid = false;
  double n_required_thm1 = 0.0;
  double prop1_bound = 0.0;
  double thm2_bound = 0.0;
  Phase phase = Phase::Slow;
  double phase_threshold = 0.0;
  double thm3_bound = 0.0;
  MinimaxResult lower;
  SpectralInputs spectral;
  double C0 = 0.0;
};

// Everything above for one (model, basis, n). xi is evaluated when the
// second upper Gram matrix is in play or `with_xi` is set.
BoundReport bound_report(const VarModel& model, const RestrictionBasis& basis, int n, const BoundConfig& cfg,
                         bool with_xi = false);

}  // namespace rvar
