#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rvar/restrictions.hpp"

namespace rvar {

struct NormalLaw {};

// Multivariate t with `dof` degrees of freedom, rescaled so every coordinate
// has variance sigma^2.
struct StudentTLaw {
  double dof = 5.0;
};

using InnovationLaw = std::variant<NormalLaw, StudentTLaw>;

inline bool is_normal(const InnovationLaw& law) { return std::holds_alternative<NormalLaw>(law); }

/// X_{t+1} = A X_t + eta_t, X_0 = 0, var(eta_t) = sigma2 * I on the first
/// `noise_dim` coordinates (all coordinates unless the model is a companion
/// embedding).
struct VarModel {
  Eigen::MatrixXd A;
  double sigma2 = 1.0;
  InnovationLaw law = NormalLaw{};
  int noise_dim = -1;  // -1: all d coordinates

  VarModel() = default;
  explicit VarModel(Eigen::MatrixXd a, double s2 = 1.0, InnovationLaw l = NormalLaw{}, int nd = -1);

  int d() const { return static_cast<int>(A.rows()); }
  int innovation_dim() const { return noise_dim < 0 ? d() : noise_dim; }
  void validate() const;
};

struct SpectralStats {
  double rho = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool diagonalizable = false;
  std::optional<double> cond_S;
  std::optional<int> b_max_override;

  // b_max is 1 for diagonalizable matrices; otherwise the caller must supply it.
  int effective_b_max() const;
  double effective_cond_S() const;
};

inline constexpr double kDiagonalizableCondition = 1e8;

SpectralStats spectral_stats(const Eigen::MatrixXd& A, double cond_threshold = kDiagonalizableCondition,
                             std::optional<int> b_max_override = std::nullopt);
inline SpectralStats spectral_stats(const VarModel& model) { return spectral_stats(model.A); }

double spectral_radius(const Eigen::MatrixXd& A);

/// Rows of X are X_1..X_n, rows of Y are X_2..X_{n+1}.
struct SamplePath {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  // X_1..X_{n+1} as an (n+1) x d matrix.
  Eigen::MatrixXd trajectory() const;
  static SamplePath from_trajectory(const Eigen::MatrixXd& traj, std::uint64_t seed = 0);
};

class SimulationOverflow : public std::runtime_error {
 public:
  SimulationOverflow(int t, double norm);
  int step() const { return step_; }

 private:
  int step_;
};

// Paths whose state norm exceeds this are aborted.
inline constexpr double kOverflowNorm = 1e300;

SamplePath simulate(const VarModel& model, int n, std::uint64_t seed);

// Generators for the three simulation designs.
struct DgpSpec {
  int which = 3;   // 1 banded, 2 grouped, 3 scaled identity
  int d = 24;
  int k0 = 1;      // DGP1
  int K = 2;       // DGP2
  double rho = 1;  // target spectral radius (DGP1/2) or the scalar itself (DGP3)
};

VarModel make_dgp(const DgpSpec& spec, std::uint64_t seed);
// Restriction pattern satisfied exactly by the generator's matrices.
RestrictionPattern dgp_pattern(const DgpSpec& spec);

struct CompanionModel {
  VarModel model;
  int d0 = 0;
  int p = 0;
};

CompanionModel companion_embed(const std::vector<Eigen::MatrixXd>& coeffs, double sigma2 = 1.0,
                               InnovationLaw law = NormalLaw{});

// CSV with header "t,x_1,...,x_d" and one row per time point t = 1..n+1.
void write_path_csv(std::ostream& os, const SamplePath& path);
SamplePath read_path_csv(std::istream& is);

}  // namespace rvar
