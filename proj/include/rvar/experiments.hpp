#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rvar/bounds.hpp"
#include "rvar/json_io.hpp"
#include "rvar/restrictions.hpp"
#include "rvar/rng.hpp"
#include "rvar/var_core.hpp"

namespace rvar {

struct GridPoint {
  DgpSpec dgp;
  RestrictionPattern fit;
  int n = 100;
};

struct ExperimentConfig {
  std::string id = "custom";  // fig1 | fig2a | fig2b | fig3 | custom
  std::vector<GridPoint> grid;
  int replications = 1000;
  std::uint64_t base_seed = 1;
  int workers = 0;  // 0: one per hardware thread
  double sigma2 = 1.0;
  InnovationLaw law = NormalLaw{};

  void validate() const;
};

// The built-in designs. Grids follow the figure captions; values a caption
// leaves open are fixed here.
ExperimentConfig preset(const std::string& id, int replications = 1000, std::uint64_t base_seed = 1);
ExperimentConfig config_from_json(const json& j);

// Seed of the random DGP1/DGP2 transition matrix. One draw per (design, rho, d)
// so that every m and n in a figure is fitted against the same truth.
std::uint64_t truth_seed(std::uint64_t base_seed, const DgpSpec& spec);
// Seed of replication `rep` at grid position `grid_index`.
inline std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t grid_index, int rep) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(grid_index), static_cast<std::uint64_t>(rep)});
}
VarModel truth_model(const ExperimentConfig& cfg, const GridPoint& g);

struct SummaryRow {
  std::string experiment;
  int dgp = 3;
  double rho = 0.0;
  int d = 0;
  int m = 0;
  int n = 0;
  double mean_error = 0.0;
  double stderr_ = 0.0;
  int fails = 0;
  int used = 0;  // replications - fails
  bool flagged = false;  // more than 1% of paths failed
  double runtime_seconds = 0.0;
  // Spectral summary of the truth, used by the bound overlay.
  double truth_rho = 0.0;
  double truth_sigma_min = 0.0;
  double truth_cond_S = 1.0;
  bool truth_diagonalizable = true;
};

struct ReplicationSummary {
  std::string experiment;
  int replications = 0;
  bool normal_innovations = true;
  std::vector<SummaryRow> rows;
};

ReplicationSummary run_experiment(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

struct SlopeLine {
  int m = 0;
  double slope = 0.0;
  double r2 = 0.0;  // centered, around the through-origin fit
  int points = 0;
};

struct SlopeGroup {
  int dgp = 0;
  double rho = 0.0;
  int d = 0;
  std::vector<SlopeLine> lines;
  double slope_ratio = 1.0;  // max slope / min slope
  double min_r2 = 1.0;
};

// Mean error regressed on (m/n)^{1/2} through the origin, one line per m,
// grouped by (dgp, rho, d). Throws if a line has fewer than three points.
std::vector<SlopeGroup> check_slope_collapse(const std::vector<SummaryRow>& rows);

enum class RateScale { TimesN, TimesSqrtN, TimesN_Over2LogN, PerM, PerSqrtM };

struct FastRateDiagnostic {
  std::vector<double> axis;    // n (or m) in increasing order
  std::vector<double> scaled;  // scaled mean error
  double tail_change = 0.0;    // |s_last - s_prev| / |s_prev|
};

// Rows must share every key except the axis (n for the n-scales, m for the m-scales).
FastRateDiagnostic check_fast_rate(const std::vector<SummaryRow>& rows, RateScale scale);

// ---------------------------------------------------------------------------

// experiment,dgp,rho,d,m,n,mean_error,stderr,fails
void emit_csv(const ReplicationSummary& summary, std::ostream& os);
void emit_csv(const ReplicationSummary& summary, const std::string& path);
// Same columns plus thm3_bound and minimax_lower.
void emit_bound_overlay(const ReplicationSummary& summary, const BoundConfig& cfg, std::ostream& os);
void emit_bound_overlay(const ReplicationSummary& summary, const BoundConfig& cfg, const std::string& path);

}  // namespace rvar
