#include "rvar/estimator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace rvar {

namespace {

void check_shapes(const SamplePath& path, const RestrictionBasis& basis) {
  if (path.X.rows() != path.Y.rows()) throw std::invalid_argument("fit: X and Y have different row counts");
  if (path.d() != basis.d())
    throw std::invalid_argument("fit: path has d=" + std::to_string(path.d()) + " but basis expects d=" + std::to_string(basis.d()));
  if (path.Y.cols() != basis.q())
    throw std::invalid_argument("fit: Y has " + std::to_string(path.Y.cols()) + " columns but basis expects q=" + std::to_string(basis.q()));
  const long long qn = static_cast<long long>(basis.q()) * path.n();
  if (qn < basis.m())
    throw std::invalid_argument("fit: qn=" + std::to_string(qn) + " is smaller than m=" + std::to_string(basis.m()));
}

struct Solve {
  Eigen::VectorXd x;
  bool singular = false;
};

Solve solve_symmetric(const Eigen::MatrixXd& G, const Eigen::VectorXd& b) {
  if (G.rows() == 0) return {Eigen::VectorXd(0), false};
  constexpr double kRcond = kRelativeSingularCutoff * kRelativeSingularCutoff;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() == Eigen::Success && llt.rcond() >= kRcond) return {llt.solve(b), false};

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  if (es.info() != Eigen::Success) throw std::runtime_error("fit: eigensolver failed on the Gram matrix");
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double cutoff = lam.cwiseAbs().maxCoeff() * kRcond;
  Eigen::VectorXd coord = es.eigenvectors().transpose() * b;
  for (Eigen::Index i = 0; i < lam.size(); ++i) coord[i] = lam[i] > cutoff ? coord[i] / lam[i] : 0.0;
  return {es.eigenvectors() * coord, true};
}

void finish(FitResult& r, const SamplePath& path, const RestrictionBasis& basis, bool with_residuals = true) {
  r.beta_hat = basis.beta(r.theta_hat);
  r.A_hat = coefficients_from_beta(r.beta_hat, basis.shape());
  r.residual_sse = with_residuals ? (path.Y - path.X * r.A_hat.transpose()).squaredNorm()
                                  : std::numeric_limits<double>::quiet_NaN();
}

// Number of X column pairs a selection basis touches.
long selector_pairs(const RestrictionBasis& basis) {
  long p = 0;
  for (const auto& e : basis.row_entries()) p += static_cast<long>(e.size() * e.size());
  return p;
}

}  // namespace

FitResult fit(const SamplePath& path, const RestrictionBasis& basis, bool with_residuals) {
  check_shapes(path, basis);
  FitResult r;
  const long dd = static_cast<long>(basis.d()) * basis.d();
  if (basis.selector() && !basis.has_offset() && 4 * selector_pairs(basis) < dd) {
    r.gram = Eigen::MatrixXd::Zero(basis.m(), basis.m());
    r.rhs = Eigen::VectorXd::Zero(basis.m());
    const auto& rows = basis.row_entries();
    for (int i = 0; i < basis.q(); ++i) {
      for (const auto& [ja, ca] : rows[i]) {
        r.rhs[ca] += path.X.col(ja).dot(path.Y.col(i));
        for (const auto& [jb, cb] : rows[i]) r.gram(ca, cb) += path.X.col(ja).dot(path.X.col(jb));
      }
    }
  } else {
    const Eigen::MatrixXd G = path.X.transpose() * path.X;
    Eigen::MatrixXd H = path.X.transpose() * path.Y;  // d x q, column i is X^T y_i
    if (basis.has_offset()) {
      const Eigen::Map<const Eigen::MatrixXd> Gam(basis.gamma().data(), basis.d(), basis.q());
      H.noalias() -= G * Gam;
    }
    r.gram = basis.block_congruence(G);
    r.rhs = basis.block_transpose_apply(H);
  }

  if (basis.block_diagonal() && basis.q() > 1 && basis.m() > 0) {
    std::vector<std::vector<int>> cols(static_cast<std::size_t>(basis.q()));
    for (int c = 0; c < basis.m(); ++c) cols[basis.column_block()[c]].push_back(c);
    r.theta_hat = Eigen::VectorXd::Zero(basis.m());
    for (const auto& idx : cols) {
      if (idx.empty()) continue;
      const auto k = static_cast<Eigen::Index>(idx.size());
      Eigen::MatrixXd Gi(k, k);
      Eigen::VectorXd bi(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        bi[a] = r.rhs[idx[a]];
        for (Eigen::Index b = 0; b < k; ++b) Gi(a, b) = r.gram(idx[a], idx[b]);
      }
      const Solve s = solve_symmetric(Gi, bi);
      r.rank_flag = r.rank_flag || s.singular;
      for (Eigen::Index a = 0; a < k; ++a) r.theta_hat[idx[a]] = s.x[a];
    }
  } else {
    Solve s = solve_symmetric(r.gram, r.rhs);
    r.theta_hat = std::move(s.x);
    r.rank_flag = s.singular;
  }
  finish(r, path, basis, with_residuals);
  return r;
}

FitResult fit_dense_oracle(const SamplePath& path, const RestrictionBasis& basis) {
  check_shapes(path, basis);
  const Eigen::Index n = path.n();
  const int q = basis.q();
  const int m = basis.m();
  if (static_cast<double>(q) * static_cast<double>(n) * static_cast<double>(m) > kOracleMaxEntries)
    throw std::invalid_argument("fit_dense_oracle: design has more than 1e7 entries");

  Eigen::MatrixXd Z(q * n, m);
  Eigen::VectorXd y(q * n);
  for (int i = 0; i < q; ++i) {
    Z.middleRows(i * n, n) = path.X * basis.block(i);
    y.segment(i * n, n) = path.Y.col(i) - path.X * basis.gamma_block(i);
  }

  FitResult r;
  r.gram = Z.transpose() * Z;
  r.rhs = Z.transpose() * y;
  if (m == 0) {
    r.theta_hat = Eigen::VectorXd(0);
  } else {
    // Eigen 3.4.0's BDCSVD returns wrong factors on some block-sparse designs,
    // so reduce to the m x m triangle first and use the Jacobi SVD there.
    Eigen::MatrixXd core = Z;
    Eigen::VectorXd rhs = y;
    if (Z.rows() > m) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
      core = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
      rhs = (qr.householderQ().transpose() * y).head(m);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = s.maxCoeff() * kRelativeSingularCutoff;
    Eigen::VectorXd coord = svd.matrixU().transpose() * rhs;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s[i] > cutoff) {
        coord[i] /= s[i];
      } else {
        coord[i] = 0.0;
        r.rank_flag = true;
      }
    }
    r.theta_hat = svd.matrixV() * coord;
  }
  finish(r, path, basis);
  return r;
}

EstimationError estimation_error(const FitResult& fit, const Eigen::MatrixXd& truth) {
  if (fit.A_hat.rows() != truth.rows() || fit.A_hat.cols() != truth.cols())
    throw std::invalid_argument("estimation_error: truth shape does not match the fit");
  const Eigen::MatrixXd D = fit.A_hat - truth;
  EstimationError e;
  e.l2 = (fit.beta_hat - beta_from_coefficients(truth)).norm();
  e.fro = D.norm();
  if (std::abs(e.l2 - e.fro) > 1e-12 * std::max(1.0, e.fro))
    throw std::logic_error("estimation_error: vec and Frobenius norms disagree");
  e.spec = D.size() == 0
               ? 0.0
               : std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(D.transpose() * D,
                                                                                         Eigen::EigenvaluesOnly)
                                             .eigenvalues()
                                             .maxCoeff()));
  return e;
}

double l2_error(const FitResult& fit, const Eigen::MatrixXd& truth) {
  if (fit.A_hat.rows() != truth.rows() || fit.A_hat.cols() != truth.cols())
    throw std::invalid_argument("l2_error: truth shape does not match the fit");
  return (fit.A_hat - truth).norm();
}

}  // namespace rvar
