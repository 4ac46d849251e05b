#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridsite/acpf.hpp"
#include "gridsite/miblp.hpp"
#include "gridsite/relaxation.hpp"

namespace gridsite {

struct AcVerification {
  bool ok = false;          // network_ok and the discrete siting rules hold
  bool network_ok = false;  // converged power flow within voltage bands and ratings
  std::string reason;
  PowerFlowState state;
  LimitReport limits;
  double discrete_violation = 0.0;
  double model_violation = 0.0;
};

/// Re-solves the power flow with the chargers of (x, z) applied and checks every constraint of the
/// rational formulation, voltage bands and transformer ratings within `tol`.
AcVerification verify_ac_feasibility(const MinlpProblem& minlp, const std::vector<int>& x, const std::vector<int>& z,
                                     double tol = 1e-6);

struct Incumbent {
  std::vector<int> x;
  std::vector<int> z;
  double objective = 0.0;
};

/// Greedy rounding of the root relaxation followed by power-flow verification. Returns nothing
/// when no verified point is found within `max_checks` verifications.
std::optional<Incumbent> local_incumbent(const MinlpProblem& minlp, const Relaxation& relaxation, const Box& box,
                                         int max_checks = 24, double tol = 1e-6);

enum class IntegralityMode { Relaxed, Exact };

struct SbtOptions {
  double epsilon = 1e-4;
  int max_sweeps = 25;
  double margin = 1e-8;  // widening applied to every LP bound before it is accepted
  IntegralityMode integrality = IntegralityMode::Relaxed;
  int threads = 1;
  int exact_node_limit = 200;
  bool tighten_integers = true;  // one min/max pass over x and z once the sweeps stop
};

struct SbtSweep {
  int sweep = 0;
  double lower_change = 0.0;  // L2 norm of the lower-bound change over the filtered columns
  double upper_change = 0.0;  // same for the upper bounds
  double total_width = 0.0;   // sum of filtered widths after the sweep
  int lp_solves = 0;
};

// EmptyRegion: the box crossed or the relaxation became infeasible; with the cut on, the incumbent
// is optimal.
enum class SbtOutcome { Converged, SweepLimit, EmptyRegion };

std::string to_string(SbtOutcome outcome);

struct SbtResult {
  Box box;
  SbtOutcome outcome = SbtOutcome::Converged;
  std::vector<SbtSweep> sweeps;
  std::vector<Box> history;  // box after each sweep, history[0] is the input box
  int lp_solves = 0;
  double initial_width = 0.0;  // sum of filtered widths after the first propagation
  int integer_tightened = 0;   // x and z columns whose bounds moved in the final pass
  double seconds = 0.0;
};

/// Sequential bound tightening of the filtered (voltage deviation) columns: each sweep minimizes
/// and maximizes every filtered column over the relaxation restricted to sum(w z) >= incumbent.
/// An infinite incumbent objective (-inf) turns the cut off; an empty region then means the
/// problem itself is infeasible.
SbtResult sbt_presolve(const Relaxation& relaxation, const Box& box, double incumbent_objective,
                       const SbtOptions& options = {});

struct NodeLogEntry {
  long node = 0;
  int depth = 0;
  double bound = 0.0;
  double incumbent = 0.0;
  double gap = 0.0;
  std::string action;
};

struct BnbConfig {
  double gap_tol = 1e-6;
  long node_limit = 200000;
  double time_limit = 3600.0;  // seconds
  double int_tol = 1e-6;
  double bilinear_tol = 1e-7;
  double cut_tol = 1e-7;
  double verify_tol = 1e-6;
  std::function<void(const NodeLogEntry&)> on_node;
};

enum class BnbStatus { Optimal, Infeasible, NodeLimit, TimeLimit };

std::string to_string(BnbStatus status);

struct BnbResult {
  BnbStatus status = BnbStatus::Infeasible;
  std::optional<Incumbent> incumbent;
  double bound = 0.0;
  double gap = 0.0;
  long nodes = 0;
  long lp_solves = 0;
  long verifications = 0;
  double seconds = 0.0;
};

/// Spatial branch and bound on the decomposed problem. Integral nodes are accepted only after
/// power-flow verification.
BnbResult branch_and_bound(const MinlpProblem& minlp, Relaxation& relaxation, const Box& root,
                           std::optional<Incumbent> start, const BnbConfig& config);

/// Relative gap used everywhere: (bound - incumbent) / max(1, |incumbent|).
double relative_gap(double bound, double incumbent);
std::string format_gap(double gap);

enum class PresolveMode { None, Sbt };

struct SolverConfig {
  PresolveMode presolve = PresolveMode::Sbt;
  SbtOptions sbt;
  BnbConfig bnb;
  LiftOptions lift;
};

enum class SolveStatus { Optimal, LimitWithIncumbent, LimitWithoutIncumbent, Infeasible };

std::string to_string(SolveStatus status);

struct PlacementSolution {
  SolveStatus status = SolveStatus::Infeasible;
  std::optional<Incumbent> best;
  double bound = 0.0;
  double gap = 0.0;
  long nodes = 0;
  long lp_solves = 0;
  bool local_incumbent = false;
  std::optional<SbtResult> sbt;
  AcVerification verification;
  double seconds = 0.0;
  double presolve_seconds = 0.0;  // incumbent search and SBT
  double solve_seconds = 0.0;
  double verify_seconds = 0.0;
  int num_vars = 0;
  int num_bilinear = 0;
};

/// Lift, decompose, optional SBT presolve, branch and bound, final verification.
PlacementSolution solve_placement(const MinlpProblem& minlp, const SolverConfig& config);

/// Voltages per node-phase: node, phase, v_real, v_imag, magnitude.
nlohmann::json state_to_json(const FeederModel& model, const PowerFlowState& state);

nlohmann::json verification_to_json(const MinlpProblem& minlp, const AcVerification& verification);

/// Report of a solve. Wall-clock times are left out so identical runs give identical documents.
nlohmann::json solution_to_json(const MinlpProblem& minlp, const PlacementSolution& solution);

}  // namespace gridsite
