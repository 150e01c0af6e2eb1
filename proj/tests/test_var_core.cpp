#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "rvar/var_core.hpp"

using namespace rvar;

namespace {

// Monte Carlo mean and standard error of X_t[0]^2 over `reps` paths.
struct Moment {
  double mean = 0.0;
  double se = 0.0;
};

Moment second_moment(const VarModel& model, int n, int t, int reps, std::uint64_t seed) {
  double s = 0.0;
  double ss = 0.0;
  for (int r = 0; r < reps; ++r) {
    const SamplePath p = simulate(model, n, seed + static_cast<std::uint64_t>(r));
    const double x = p.X(t - 1, 0);
    s += x * x;
    ss += x * x * x * x;
  }
  Moment m;
  m.mean = s / reps;
  m.se = std::sqrt((ss / reps - m.mean * m.mean) / reps);
  return m;
}

}  // namespace

TEST_CASE("model validation") {
  CHECK_THROWS(VarModel(Eigen::MatrixXd::Identity(2, 2), 0.0).validate());
  CHECK_THROWS(VarModel(Eigen::MatrixXd::Identity(2, 2), 1.0, StudentTLaw{2.0}).validate());
  CHECK_THROWS(VarModel(Eigen::MatrixXd::Zero(2, 3)).validate());
  CHECK_NOTHROW(VarModel(Eigen::MatrixXd::Identity(2, 2), 1.0, StudentTLaw{3.0}).validate());
}

TEST_CASE("paths shift by one step") {
  const VarModel m(0.5 * Eigen::MatrixXd::Identity(3, 3));
  const SamplePath p = simulate(m, 40, 9);
  const Eigen::MatrixXd traj = p.trajectory();
  REQUIRE(traj.rows() == 41);
  for (int t = 0; t < 40; ++t) CHECK((p.Y.row(t) - traj.row(t + 1)).norm() == 0.0);
  const SamplePath again = simulate(m, 40, 9);
  CHECK((again.X - p.X).norm() == 0.0);
  CHECK((simulate(m, 40, 10).X - p.X).norm() > 0.0);
}

TEST_CASE("pure noise when A is zero") {
  const VarModel m = make_dgp(DgpSpec{3, 5, 1, 2, 0.0}, 1);
  CHECK(m.A.isZero());
  const Moment v = second_moment(m, 3, 1, 10000, 100);
  CHECK(std::abs(v.mean - 1.0) <= 3.0 * v.se);
}

TEST_CASE("variance of X_t follows the scalar Gramian") {
  const double rho = 0.7;
  const double sigma2 = 2.0;
  const VarModel m(rho * Eigen::MatrixXd::Identity(2, 2), sigma2);
  for (int t : {1, 5}) {
    CAPTURE(t);
    const Moment v = second_moment(m, 6, t, 10000, 1000);
    CHECK(std::abs(v.mean / sigma2 - oracle::gamma_scalar(rho, t)) <= 3.0 * v.se / sigma2);
  }
}

TEST_CASE("random walk variance grows linearly") {
  const VarModel m(Eigen::MatrixXd::Ones(1, 1));
  const Moment v = second_moment(m, 100, 100, 10000, 5000);
  CHECK(std::abs(v.mean - 100.0) <= 3.0 * v.se);
}

TEST_CASE("student-t innovations are rescaled to variance sigma2") {
  const VarModel m(Eigen::MatrixXd::Zero(2, 2), 1.5, StudentTLaw{8.0});
  const Moment v = second_moment(m, 2, 1, 20000, 77);
  CHECK(std::abs(v.mean - 1.5) <= 3.0 * v.se);
}

TEST_CASE("explosive paths overflow") {
  const VarModel m(1e3 * Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(simulate(m, 200, 1), SimulationOverflow);
}

TEST_CASE("spectral statistics") {
  SUBCASE("scaled identity") {
    const SpectralStats s = spectral_stats(-0.4 * Eigen::MatrixXd::Identity(4, 4));
    CHECK(s.rho == doctest::Approx(0.4));
    CHECK(s.sigma_min == doctest::Approx(0.4));
    CHECK(s.diagonalizable);
    CHECK(s.effective_cond_S() == doctest::Approx(1.0));
    CHECK(s.effective_b_max() == 1);
  }
  SUBCASE("nilpotent Jordan block") {
    Eigen::MatrixXd J(2, 2);
    J << 0, 1, 0, 0;
    const SpectralStats s = spectral_stats(J);
    CHECK(s.rho == doctest::Approx(0.0));
    CHECK(s.sigma_min == doctest::Approx(0.0));
    CHECK_FALSE(s.diagonalizable);
    CHECK_THROWS(s.effective_b_max());
    CHECK(spectral_stats(J, kDiagonalizableCondition, 2).effective_b_max() == 2);
  }
  SUBCASE("diagonal") {
    const Eigen::MatrixXd D = Eigen::Vector2d(0.9, 0.1).asDiagonal();
    const SpectralStats s = spectral_stats(D);
    CHECK(s.rho == doctest::Approx(0.9));
    CHECK(s.sigma_min == doctest::Approx(0.1));
  }
  SUBCASE("sigma_min <= rho <= sigma_max") {
    std::mt19937_64 g(3);
    for (int i = 0; i < 20; ++i) {
      const SpectralStats s = spectral_stats(oracle::random_matrix(4, 4, g));
      CHECK(s.sigma_min <= s.rho + 1e-10);
      CHECK(s.rho <= s.sigma_max + 1e-10);
    }
  }
}

TEST_CASE("simulation designs") {
  SUBCASE("DGP3 is rho times the identity") {
    const VarModel m = make_dgp(DgpSpec{3, 24, 1, 2, 1.0}, 1);
    CHECK((m.A - Eigen::MatrixXd::Identity(24, 24)).norm() == 0.0);
    CHECK(spectral_stats(m).sigma_min == doctest::Approx(1.0));
  }
  SUBCASE("DGP1 is banded with the target radius") {
    const VarModel m = make_dgp(DgpSpec{1, 24, 1, 2, 0.8}, 42);
    CHECK(spectral_radius(m.A) == doctest::Approx(0.8).epsilon(1e-10));
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j)
        if (std::abs(i - j) > 1) CHECK(m.A(i, j) == 0.0);
  }
  SUBCASE("DGP2 respects its grouping") {
    const DgpSpec spec{2, 24, 1, 4, 0.5};
    const VarModel m = make_dgp(spec, 5);
    CHECK(spectral_radius(m.A) == doctest::Approx(0.5).epsilon(1e-10));
    const RestrictionBasis b = build_basis(dgp_pattern(spec));
    const Eigen::VectorXd beta = beta_from_coefficients(m.A);
    const Eigen::MatrixXd P = oracle::projector(b.R());
    CHECK((P * beta - beta).norm() < 1e-10);
  }
}

TEST_CASE("companion embedding") {
  SUBCASE("p = 1 leaves A unchanged") {
    Eigen::MatrixXd A(2, 2);
    A << 0.3, 0.1, -0.2, 0.4;
    const CompanionModel c = companion_embed({A});
    CHECK((c.model.A - A).norm() == 0.0);
  }
  SUBCASE("scalar AR(2)") {
    const CompanionModel c = companion_embed({Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.3)});
    Eigen::Matrix2d want;
    want << 0.5, 0.3, 1.0, 0.0;
    CHECK((c.model.A - want).norm() == 0.0);
    const double root = (0.5 + std::sqrt(0.25 + 1.2)) / 2.0;
    CHECK(spectral_radius(c.model.A) == doctest::Approx(root).epsilon(1e-12));
    CHECK(c.model.innovation_dim() == 1);
  }
  SUBCASE("zero lags are nilpotent") {
    const CompanionModel c = companion_embed({Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)});
    CHECK(spectral_radius(c.model.A) == doctest::Approx(0.0));
    const SamplePath p = simulate(c.model, 10, 3);
    CHECK(p.X.col(2).head(1).norm() == 0.0);  // lag block of X_1 is X_0 = 0
  }
}

TEST_CASE("path csv round trip is exact") {
  const SamplePath p = simulate(VarModel(0.9 * Eigen::MatrixXd::Identity(3, 3)), 25, 4);
  std::stringstream ss;
  write_path_csv(ss, p);
  const std::string text = ss.str();
  CHECK(text.rfind("t,x_1,x_2,x_3\n", 0) == 0);
  const SamplePath back = read_path_csv(ss);
  CHECK((back.X - p.X).norm() == 0.0);
  CHECK((back.Y - p.Y).norm() == 0.0);
  std::istringstream bad("t,x_1\n1,abc\n2,1\n");
  CHECK_THROWS(read_path_csv(bad));
}
