#include <doctest.h>

#include <memory>
#include <random>

#include "oracles.hpp"
#include "rvar/estimator.hpp"

using namespace rvar;

namespace {

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// Regressors drawn at random and responses Y = X A^T with no noise.
SamplePath noiseless(const Eigen::MatrixXd& A, int n, std::mt19937_64& g) {
  SamplePath p;
  p.X = oracle::random_matrix(n, static_cast<int>(A.cols()), g);
  p.Y = p.X * A.transpose();
  return p;
}

}  // namespace

TEST_CASE("scalar AR(1) least squares") {
  const SamplePath p = simulate(VarModel(Eigen::MatrixXd::Constant(1, 1, 0.6)), 80, 2);
  const FitResult f = fit(p, build_basis(Unrestricted{1}));
  const double want = p.X.col(0).dot(p.Y.col(0)) / p.X.col(0).squaredNorm();
  CHECK(f.theta_hat[0] == doctest::Approx(want).epsilon(1e-13));
  CHECK_FALSE(f.rank_flag);
}

TEST_CASE("noiseless paths are interpolated exactly") {
  std::mt19937_64 g(8);
  const std::vector<RestrictionPattern> patterns = {Banded{5, 1}, Grouped{6, 3}, ScaledIdentity{4}, Unrestricted{3}};
  for (const auto& pat : patterns) {
    CAPTURE(pattern_name(pat));
    const RestrictionBasis b = build_basis(pat);
    const Eigen::MatrixXd A = oracle::random_member(b, g);
    const FitResult f = fit(noiseless(A, 30, g), b);
    CHECK((f.beta_hat - beta_from_coefficients(A)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("structured fit matches the dense pseudo-inverse oracle") {
  std::mt19937_64 g(21);
  const VarModel m(oracle::random_member(build_basis(Banded{4, 1}), g));
  const SamplePath p = simulate(m, 30, 5);
  const RestrictionBasis b = build_basis(Banded{4, 1});
  const FitResult f = fit(p, b);
  const oracle::Design z = oracle::design(p, b);
  const Eigen::VectorXd want = oracle::min_norm_ls(z.Z, z.y);
  CHECK(rel(f.theta_hat, want) <= 1e-8);
  CHECK(rel(fit_dense_oracle(p, b).theta_hat, want) <= 1e-8);
}

TEST_CASE("offsets, companion and selector paths match the oracle") {
  std::mt19937_64 g(4);
  Custom c;
  c.d = 3;
  c.zeros = {1, 5};
  c.equal = {{0, 4, 8}};
  c.fixed = {{2, 0.3}, {6, -0.1}};
  const std::vector<RestrictionPattern> patterns = {
      c, CompanionVarP{2, 2, std::make_shared<const RestrictionPattern>(ScaledIdentity{2})},
      sparse_offdiagonal_pattern(6, 3, 9), Grouped{6, 2}};
  for (const auto& pat : patterns) {
    CAPTURE(pattern_name(pat));
    const RestrictionBasis b = build_basis(pat);
    const SamplePath p = simulate(VarModel(0.5 * Eigen::MatrixXd::Identity(b.d(), b.d())), 25, g());
    const oracle::Design z = oracle::design(p, b);
    CHECK(rel(fit(p, b).theta_hat, oracle::min_norm_ls(z.Z, z.y)) <= 1e-8);
  }
}

TEST_CASE("reconstruction identities") {
  const RestrictionBasis b = build_basis(Grouped{6, 2});
  const SamplePath p = simulate(VarModel(0.3 * Eigen::MatrixXd::Identity(6, 6)), 40, 1);
  const FitResult f = fit(p, b);
  CHECK((f.beta_hat - (b.R() * f.theta_hat + b.gamma())).cwiseAbs().maxCoeff() <= 1e-12);
  for (int i = 0; i < 6; ++i)
    CHECK((f.A_hat.row(i).transpose() - f.beta_hat.segment(6 * i, 6)).norm() == 0.0);
  CHECK(f.residual_sse == doctest::Approx((p.Y - p.X * f.A_hat.transpose()).squaredNorm()));
  CHECK(std::isnan(fit(p, b, false).residual_sse));
}

TEST_CASE("fully determined model") {
  Custom c;
  c.d = 2;
  c.fixed = {{0, 0.5}, {1, 0.0}, {2, 0.1}, {3, 0.2}};
  const RestrictionBasis b = build_basis(c);
  REQUIRE(b.m() == 0);
  const SamplePath p = simulate(VarModel(Eigen::MatrixXd::Zero(2, 2)), 10, 1);
  const FitResult f = fit(p, b);
  CHECK(f.theta_hat.size() == 0);
  CHECK((f.beta_hat - b.gamma()).norm() == 0.0);
  CHECK(fit_dense_oracle(p, b).theta_hat.size() == 0);
}

TEST_CASE("rank-deficient designs return the minimum-norm solution") {
  // Duplicated coordinates make X^T X singular.
  Eigen::MatrixXd traj(8, 3);
  std::mt19937_64 g(6);
  const Eigen::MatrixXd base = oracle::random_matrix(8, 2, g);
  traj.col(0) = base.col(0);
  traj.col(1) = base.col(0);
  traj.col(2) = base.col(1);
  const SamplePath p = SamplePath::from_trajectory(traj);
  const RestrictionBasis b = build_basis(Unrestricted{3});
  const FitResult f = fit(p, b);
  const FitResult o = fit_dense_oracle(p, b);
  CHECK(f.rank_flag);
  CHECK(o.rank_flag);
  CHECK(rel(f.theta_hat, o.theta_hat) <= 1e-6);
  const oracle::Design z = oracle::design(p, b);
  CHECK(rel(f.theta_hat, oracle::min_norm_ls(z.Z, z.y)) <= 1e-6);
}

TEST_CASE("shape errors") {
  const SamplePath p = simulate(VarModel(Eigen::MatrixXd::Zero(3, 3)), 10, 1);
  CHECK_THROWS_AS(fit(p, build_basis(Unrestricted{4})), std::invalid_argument);
  const SamplePath tiny = simulate(VarModel(Eigen::MatrixXd::Zero(3, 3)), 2, 1);
  CHECK_THROWS_AS(fit(tiny, build_basis(Unrestricted{3})), std::invalid_argument);
}

TEST_CASE("estimation error norms") {
  const RestrictionBasis b = build_basis(Unrestricted{3});
  const SamplePath p = simulate(VarModel(0.2 * Eigen::MatrixXd::Identity(3, 3)), 50, 3);
  const FitResult f = fit(p, b);
  SUBCASE("fit equal to truth") {
    const EstimationError e = estimation_error(f, f.A_hat);
    CHECK(e.l2 == 0.0);
    CHECK(e.fro == 0.0);
    CHECK(e.spec == doctest::Approx(0.0));
  }
  SUBCASE("unit discrepancy") {
    Eigen::MatrixXd truth = f.A_hat;
    truth(0, 0) -= 1.0;
    const EstimationError e = estimation_error(f, truth);
    CHECK(e.l2 == doctest::Approx(1.0));
    CHECK(e.fro == doctest::Approx(1.0));
    CHECK(e.spec == doctest::Approx(1.0));
  }
  SUBCASE("spectral norm never exceeds Frobenius") {
    std::mt19937_64 g(13);
    for (int i = 0; i < 20; ++i) {
      const EstimationError e = estimation_error(f, f.A_hat + oracle::random_matrix(3, 3, g));
      CHECK(e.spec <= e.fro + 1e-12);
      CHECK(l2_error(f, f.A_hat) == 0.0);
    }
  }
}
