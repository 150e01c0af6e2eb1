#include "rvar/var_core.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rvar/rng.hpp"

namespace rvar {

VarModel::VarModel(Eigen::MatrixXd a, double s2, InnovationLaw l, int nd)
    : A(std::move(a)), sigma2(s2), law(l), noise_dim(nd) {
  validate();
}

void VarModel::validate() const {
  if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument("VarModel: A must be square and nonempty");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("VarModel: sigma2 must be positive");
  if (const auto* t = std::get_if<StudentTLaw>(&law); t && !(t->dof > 2.0))
    throw std::invalid_argument("VarModel: Student-t innovations need dof > 2 for finite variance");
  if (noise_dim == 0 || noise_dim < -1 || noise_dim > d()) throw std::invalid_argument("VarModel: bad noise_dim");
  if (!A.allFinite()) throw std::invalid_argument("VarModel: A has non-finite entries");
}

int SpectralStats::effective_b_max() const {
  if (b_max_override) return *b_max_override;
  if (diagonalizable) return 1;
  throw std::invalid_argument("transition matrix is not numerically diagonalizable; supply b_max explicitly");
}

double SpectralStats::effective_cond_S() const {
  if (cond_S) return *cond_S;
  throw std::invalid_argument("eigenvector condition number unavailable for a non-diagonalizable matrix");
}

double spectral_radius(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_radius: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SpectralStats spectral_stats(const Eigen::MatrixXd& A, double cond_threshold, std::optional<int> b_max_override) {
  if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument("spectral_stats: A must be square");
  SpectralStats st;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, true);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_stats: eigensolver did not converge");
  st.rho = es.eigenvalues().cwiseAbs().maxCoeff();

  const Eigen::VectorXd sv = A.jacobiSvd().singularValues();
  st.sigma_max = sv.maxCoeff();
  st.sigma_min = sv.minCoeff();

  const Eigen::VectorXd ssv = Eigen::JacobiSVD<Eigen::MatrixXcd>(es.eigenvectors()).singularValues();
  const double cond = ssv.minCoeff() > 0.0 ? ssv.maxCoeff() / ssv.minCoeff() : std::numeric_limits<double>::infinity();
  st.diagonalizable = std::isfinite(cond) && cond < cond_threshold;
  if (st.diagonalizable) st.cond_S = cond;
  st.b_max_override = b_max_override;
  return st;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd SamplePath::trajectory() const {
  Eigen::MatrixXd out(n() + 1, d());
  out.topRows(n()) = X;
  out.row(n()) = Y.row(n() - 1);
  return out;
}

SamplePath SamplePath::from_trajectory(const Eigen::MatrixXd& traj, std::uint64_t seed) {
  if (traj.rows() < 2) throw std::invalid_argument("SamplePath: need at least two time points");
  SamplePath p;
  const Eigen::Index n = traj.rows() - 1;
  p.X = traj.topRows(n);
  p.Y = traj.bottomRows(n);
  p.seed = seed;
  return p;
}

SimulationOverflow::SimulationOverflow(int t, double norm)
    : std::runtime_error("simulation overflow at t=" + std::to_string(t) + " (|X_t|=" + std::to_string(norm) + ")"),
      step_(t) {}

SamplePath simulate(const VarModel& model, int n, std::uint64_t seed) {
  model.validate();
  if (n < 1) throw std::invalid_argument("simulate: n must be at least 1");
  const int d = model.d();
  const int k = model.innovation_dim();
  const double sigma = std::sqrt(model.sigma2);

  Engine eng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto* tlaw = std::get_if<StudentTLaw>(&model.law);
  std::chi_squared_distribution<double> chi2(tlaw ? tlaw->dof : 1.0);
  const double t_scale = tlaw ? std::sqrt((tlaw->dof - 2.0) / tlaw->dof) : 1.0;

  // Column t holds X_{t+1}.
  Eigen::MatrixXd traj(d, n + 1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(d);
  for (int t = 0; t <= n; ++t) {
    for (int i = 0; i < k; ++i) eta[i] = normal(eng);
    double scale = sigma;
    if (tlaw) scale *= t_scale * std::sqrt(tlaw->dof / chi2(eng));
    Eigen::VectorXd next = model.A * x;
    next.head(k) += scale * eta.head(k);
    const double nrm = next.norm();
    if (!std::isfinite(nrm) || nrm > kOverflowNorm) throw SimulationOverflow(t + 1, nrm);
    traj.col(t) = next;
    x.swap(next);
  }
  SamplePath p;
  p.X = traj.leftCols(n).transpose();
  p.Y = traj.rightCols(n).transpose();
  p.seed = seed;
  return p;
}

// ---------------------------------------------------------------------------

RestrictionPattern dgp_pattern(const DgpSpec& spec) {
  switch (spec.which) {
    case 1:
      return Banded{spec.d, spec.k0};
    case 2:
      return Grouped{spec.d, spec.K};
    case 3:
      return ScaledIdentity{spec.d};
    default:
      throw std::invalid_argument("dgp: which must be 1, 2 or 3");
  }
}

VarModel make_dgp(const DgpSpec& spec, std::uint64_t seed) {
  if (spec.d < 1) throw std::invalid_argument("dgp: d must be positive");
  if (spec.which == 3) return VarModel(spec.rho * Eigen::MatrixXd::Identity(spec.d, spec.d));
  if (!(spec.rho > 0.0)) throw std::invalid_argument("dgp: target spectral radius must be positive");

  const RestrictionBasis basis = build_basis(dgp_pattern(spec));
  Engine eng = make_engine(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  constexpr int kMaxDraws = 100;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    Eigen::VectorXd theta(basis.m());
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = unif(eng);
    Eigen::MatrixXd A = basis.coefficients(theta);
    const double r = spectral_radius(A);
    if (!(r > 1e-12)) continue;
    A *= spec.rho / r;
    return VarModel(std::move(A));
  }
  throw std::runtime_error("dgp: could not draw a matrix with nonzero spectral radius");
}

CompanionModel companion_embed(const std::vector<Eigen::MatrixXd>& coeffs, double sigma2, InnovationLaw law) {
  if (coeffs.empty()) throw std::invalid_argument("companion_embed: need at least one lag");
  const auto d0 = coeffs.front().rows();
  for (const auto& c : coeffs)
    if (c.rows() != d0 || c.cols() != d0) throw std::invalid_argument("companion_embed: lag matrices must be d0 x d0");
  const int p = static_cast<int>(coeffs.size());
  const Eigen::Index d = d0 * p;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (int l = 0; l < p; ++l) A.block(0, l * d0, d0, d0) = coeffs[l];
  if (p > 1) A.bottomLeftCorner(d - d0, d - d0).setIdentity();
  CompanionModel out;
  out.d0 = static_cast<int>(d0);
  out.p = p;
  out.model = VarModel(std::move(A), sigma2, law, p > 1 ? static_cast<int>(d0) : -1);
  return out;
}

// ---------------------------------------------------------------------------

void write_path_csv(std::ostream& os, const SamplePath& path) {
  const Eigen::MatrixXd traj = path.trajectory();
  os << "t";
  for (int j = 1; j <= traj.cols(); ++j) os << ",x_" << j;
  os << '\n';
  char buf[40];
  for (Eigen::Index t = 0; t < traj.rows(); ++t) {
    os << (t + 1);
    for (Eigen::Index j = 0; j < traj.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", traj(t, j));
      os << ',' << buf;
    }
    os << '\n';
  }
}

SamplePath read_path_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("path csv: empty input");
  int cols = 0;
  {
    std::stringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "t") throw std::runtime_error("path csv: header must start with 't'");
    while (std::getline(hs, cell, ',')) {
      ++cols;
      if (cell != "x_" + std::to_string(cols)) throw std::runtime_error("path csv: unexpected header column '" + cell + "'");
    }
  }
  if (cols == 0) throw std::runtime_error("path csv: no data columns");
  std::vector<double> values;
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    int got = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("path csv: bad number '" + cell + "' on data row " + std::to_string(rows + 1));
      }
      ++got;
    }
    if (got != cols) throw std::runtime_error("path csv: row " + std::to_string(rows + 1) + " has " + std::to_string(got) + " values, expected " + std::to_string(cols));
    ++rows;
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXd traj = Eigen::Map<const RowMajor>(values.data(), rows, cols);
  return SamplePath::from_trajectory(traj);
}

}  // namespace rvar
