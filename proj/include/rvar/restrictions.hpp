#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace rvar {

// Parameter vectors use the row-wise stacking beta = vec(A^T): entry (row, col)
// of a q x d coefficient matrix lives at beta index row * d + col.
struct ModelShape {
  int q = 0;
  int d = 0;
  int N() const { return q * d; }
  bool operator==(const ModelShape&) const = default;
};

inline int beta_index(int row, int col, int d) { return row * d + col; }

struct RestrictionPattern;

struct Unrestricted {
  int d = 0;
};

// a_ij = 0 whenever |i - j| > k0.
struct Banded {
  int d = 0;
  int k0 = 1;
};

// Equal diagonal entries, equal nonzero off-diagonal entries on the edges of
// `adjacency`, zero elsewhere. Two free parameters.
struct Network {
  int d = 0;
  Eigen::MatrixXi adjacency;
};

// Each row has a free diagonal entry and, for every one of K contiguous
// column groups, a single shared value for its off-diagonal members.
struct Grouped {
  int d = 0;
  int K = 1;
};

// A = rho * I.
struct ScaledIdentity {
  int d = 0;
};

// First block row holds the lag matrices A_1..A_p (each d0 x d0, optionally
// restricted by `inner`, applied to every lag separately); the rows below are
// the fixed identity/zero blocks of the companion form.
struct CompanionVarP {
  int d0 = 0;
  int p = 1;
  std::shared_ptr<const RestrictionPattern> inner;  // null means unrestricted
};

// Zero set, equality classes and fixed values over beta indices (0-based).
// Indices mentioned nowhere are free singletons.
struct Custom {
  int q = 0;
  int d = 0;
  std::vector<int> zeros;
  std::vector<std::vector<int>> equal;
  std::vector<std::pair<int, double>> fixed;
};

struct RestrictionPattern {
  std::variant<Unrestricted, Banded, Network, Grouped, ScaledIdentity, CompanionVarP, Custom> kind;

  RestrictionPattern() : kind(Unrestricted{}) {}
  template <typename T>
  RestrictionPattern(T pattern) : kind(std::move(pattern)) {}  // NOLINT(google-explicit-constructor)
};

std::string pattern_name(const RestrictionPattern& pattern);
ModelShape pattern_shape(const RestrictionPattern& pattern);
// Throws std::invalid_argument on bad bandwidth, non-dividing K, loops in the
// adjacency, overlapping custom sets, etc.
void validate(const RestrictionPattern& pattern);

// Selection-form description of a zero/equality/fixed-value pattern.
struct ParameterLayout {
  ModelShape shape;
  std::vector<int> column;  // beta index -> theta column, -1 when fixed
  Eigen::VectorXd gamma;
  int m = 0;
};

ParameterLayout compile(const RestrictionPattern& pattern);
int free_parameter_count(const RestrictionPattern& pattern);

/// Affine parameter space {R theta + gamma}.
///
/// R is stored dense. When every row of R has at most one nonzero entry and
/// that entry is exactly 1 (zero and equality restrictions), the basis also
/// keeps the selection map, which the congruence helpers use to skip the
/// dense algebra.
class RestrictionBasis {
 public:
  RestrictionBasis(Eigen::MatrixXd R, Eigen::VectorXd gamma, ModelShape shape);
  static RestrictionBasis from_layout(const ParameterLayout& layout);

  const Eigen::MatrixXd& R() const { return R_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  ModelShape shape() const { return shape_; }
  int m() const { return static_cast<int>(R_.cols()); }
  int N() const { return shape_.N(); }
  int q() const { return shape_.q; }
  int d() const { return shape_.d; }

  // R_i: the d x m row block for response i.
  auto block(int i) const { return R_.middleRows(static_cast<Eigen::Index>(i) * shape_.d, shape_.d); }
  auto gamma_block(int i) const { return gamma_.segment(static_cast<Eigen::Index>(i) * shape_.d, shape_.d); }

  const std::optional<std::vector<int>>& selector() const { return selector_; }
  // Per response row i: (column j of the coefficient row, theta column) pairs.
  // Empty unless selector() is set.
  const std::vector<std::vector<std::pair<int, int>>>& row_entries() const { return row_entries_; }
  bool has_offset() const { return has_offset_; }

  // Row block owning each theta column, or -1 if the column spans several
  // blocks. All nonnegative means R is block diagonal across responses.
  const std::vector<int>& column_block() const { return column_block_; }
  bool block_diagonal() const;

  const Eigen::MatrixXd& RtR() const { return RtR_; }

  // sum_i R_i^T S R_i = R^T (I_q kron S) R for symmetric d x d S.
  Eigen::MatrixXd block_congruence(const Eigen::MatrixXd& S) const;
  // sum_i R_i^T h_i where h_i is column i of the d x q matrix H.
  Eigen::VectorXd block_transpose_apply(const Eigen::MatrixXd& H) const;
  // sum_i R_i W R_i^T for m x m W; returns d x d.
  Eigen::MatrixXd block_outer(const Eigen::MatrixXd& W) const;

  Eigen::VectorXd beta(const Eigen::VectorXd& theta) const;
  // q x d coefficient matrix with rows given by the d-length slices of beta.
  Eigen::MatrixXd coefficients(const Eigen::VectorXd& theta) const;

 private:
  RestrictionBasis() = default;
  void index_structure();

  Eigen::MatrixXd R_;
  Eigen::VectorXd gamma_;
  ModelShape shape_;
  std::optional<std::vector<int>> selector_;
  // Per response row: (column within row, theta column) pairs, selector case only.
  std::vector<std::vector<std::pair<int, int>>> row_entries_;
  std::vector<int> column_block_;
  std::vector<int> active_blocks_;  // row blocks with a nonzero entry
  Eigen::MatrixXd RtR_;
  bool has_offset_ = false;
};

Eigen::MatrixXd coefficients_from_beta(const Eigen::VectorXd& beta, ModelShape shape);
Eigen::VectorXd beta_from_coefficients(const Eigen::MatrixXd& A);

/// C beta = mu with C of full row rank N - m.
struct ConstraintForm {
  Eigen::MatrixXd C;
  Eigen::VectorXd mu;
  ModelShape shape;
  int m() const { return shape.N() - static_cast<int>(C.rows()); }
};

// Number of singular values above max(rows, cols) * eps * sigma_max.
int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index rows, Eigen::Index cols);

RestrictionBasis build_basis(const RestrictionPattern& pattern);
RestrictionBasis build_basis(const RestrictionPattern& pattern, ModelShape shape);

// Completes C with an orthonormal basis of its null space, inverts the stacked
// matrix and keeps the first m columns as R.
RestrictionBasis basis_from_constraints(const ConstraintForm& cf);
ConstraintForm constraints_from_basis(const RestrictionBasis& rb);

struct NestingReport {
  bool nested = false;
  double residual = 0.0;   // relative residual of R_fine and the offset gap off span(R_coarse)
  Eigen::MatrixXd factor;  // R_fine ~= R_coarse * factor
};

NestingReport nest_check(const RestrictionBasis& coarse, const RestrictionBasis& fine, double tol = 1e-8);

// Projector onto span(R).
Eigen::MatrixXd column_projector(const Eigen::MatrixXd& R);

// Diagonal equality plus `count` off-diagonal free entries at distinct positions
// drawn uniformly (deterministic in `seed`). m = count + 1.
Custom sparse_offdiagonal_pattern(int d, int count, std::uint64_t seed);

}  // namespace rvar
