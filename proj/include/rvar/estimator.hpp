#pragma once

#include <Eigen/Core>

#include "rvar/restrictions.hpp"
#include "rvar/var_core.hpp"

namespace rvar {

struct FitResult {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd A_hat;  // q x d
  Eigen::MatrixXd gram;   // Z^T Z
  Eigen::VectorXd rhs;    // Z^T (y - (I_q kron X) gamma)
  bool rank_flag = false; // gram numerically singular; theta_hat is the minimum-norm solution
  double residual_sse = 0.0;
};

// Singular values of Z below this fraction of the largest are treated as zero;
// on the Gram matrix the cutoff is its square.
inline constexpr double kRelativeSingularCutoff = 1e-6;

/// Restricted least squares. Works with the d x d matrix X^T X and never forms
/// the qn x m design Z = (I_q kron X) R.
/// Sparse selection bases skip X^T X and take only the inner products they need.
/// residual_sse costs O(n d q); pass with_residuals = false to skip it.
FitResult fit(const SamplePath& path, const RestrictionBasis& basis, bool with_residuals = true);

/// Materializes Z and solves by SVD. Refuses designs above kOracleMaxEntries.
FitResult fit_dense_oracle(const SamplePath& path, const RestrictionBasis& basis);
inline constexpr double kOracleMaxEntries = 1e7;

struct EstimationError {
  double l2 = 0.0;    // |beta_hat - beta_*|
  double fro = 0.0;   // |A_hat - A_*|_F, equal to l2
  double spec = 0.0;  // |A_hat - A_*|_2
};

EstimationError estimation_error(const FitResult& fit, const Eigen::MatrixXd& truth);
inline EstimationError estimation_error(const FitResult& fit, const VarModel& truth) {
  return estimation_error(fit, truth.A);
}
// Only the l2 norm; cheap enough for the replication loop.
double l2_error(const FitResult& fit, const Eigen::MatrixXd& truth);

}  // namespace rvar
