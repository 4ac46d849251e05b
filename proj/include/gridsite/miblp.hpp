#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridsite/acpf.hpp"
#include "gridsite/candidates.hpp"
#include "gridsite/feeder.hpp"

namespace gridsite {

/// Charger, cost and spacing parameters of the siting model.
struct CostConfig {
  double charger_kw = 7.2;      // rated draw of one charger
  double pf = 0.985;            // charger power factor
  double charger_cost = 8600.0;  // installation cost per charger
  double budget = 0.0;          // total budget, same currency unit
  double service_radius_m = 100.0;

  void validate() const;
  double charger_p_pu(const BaseValues& base) const { return charger_kw / base.s_base_kva; }
  double tan_phi() const;
};

struct CandidatePair {
  int first = -1;
  int second = -1;
};

/// Candidate pairs at distinct nodes whose haversine distance is at most 2R; each yields x_i + x_j <= 1.
std::vector<CandidatePair> anti_clustering_constraints(const CandidateSet& candidates, double service_radius_m);

// ---------------------------------------------------------------------------
// Pre-lift problem

/// A point of the original (rational) formulation. Vectors over node-phases unless noted.
struct MinlpPoint {
  std::vector<double> v_real, v_imag;
  std::vector<double> g_load, b_load;
  std::vector<double> g_ch, b_ch;  // over node-phases; nonzero only at candidate node-phases
  std::vector<double> p_ch, q_ch;  // over candidates
  std::vector<int> x, z;           // over candidates
};

class MinlpProblem {
 public:
  const FeederModel* model = nullptr;
  Admittance admittance;
  CandidateSet candidates;
  int demand = 0;
  CostConfig cost;
  std::vector<CandidatePair> separation;
  double charger_p = 0.0;  // per-unit active draw per charger
  double tan_phi = 0.0;

  double objective(const std::vector<int>& x, const std::vector<int>& z) const;

  /// Largest violation of the discrete constraints (demand, linking, budget, separation); <= 0 when satisfied.
  double discrete_violation(const std::vector<int>& x, const std::vector<int>& z) const;

  /// Largest violation over every constraint of the rational formulation at `point`.
  double max_violation(const MinlpPoint& point, std::string* worst = nullptr) const;

  /// Point built from a converged power-flow state with chargers (x, z) applied.
  MinlpPoint point_from_state(const PowerFlowState& state, const std::vector<int>& x,
                              const std::vector<int>& z) const;

  /// Charger draws of (x, z) as an overlay for power flow.
  InjectionOverlay charger_overlay(const std::vector<int>& z) const;
};

/// Assembles the complete siting model. Throws Error(Infeasible) when D exceeds the total charger capacity.
MinlpProblem build_minlp(const FeederModel& model, const CandidateSet& candidates, int demand, const CostConfig& cost);

// ---------------------------------------------------------------------------
// Lifted bilinear problem

enum class VarKind { Continuous, Binary, Integer };

enum class VarRole {
  VoltageReal,
  VoltageImag,
  SquareReal,
  SquareImag,
  VoltageSq,
  LoadG,
  LoadB,
  ChargerG,
  ChargerB,
  ChargerP,
  ChargerQ,
  Product,
  Site,
  Chargers,
};

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  VarRole role = VarRole::Product;
  double lower = 0.0;
  double upper = 0.0;
};

struct Term {
  int var = -1;
  double coef = 0.0;
};

struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  double eval(const std::vector<double>& point) const;
};

/// lower <= sum coef * var <= upper
struct LinearConstraint {
  std::vector<Term> terms;
  double lower = 0.0;
  double upper = 0.0;
  std::string tag;
};

/// product = left * right
struct BilinearTerm {
  int product = -1;
  int left = -1;
  int right = -1;
  bool square() const { return left == right; }
};

/// real^2 + imag^2 <= rating^2 for one transformer phase; real/imag are affine in the variables.
struct CurrentLimit {
  AffineExpr real;
  AffineExpr imag;
  double rating = 0.0;
  int transformer = -1;
  Phase phase = Phase::A;
};

struct NodePhaseVars {
  int vr = -1, vi = -1, sq_r = -1, sq_i = -1, vsq = -1;
  int g_load = -1, b_load = -1;
  int candidate = -1;
};

struct CandidateVars {
  int np = -1;
  int x = -1, z = -1, p = -1, q = -1, g = -1, b = -1;
};

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct MiblpProblem {
  std::vector<Variable> vars;
  std::vector<LinearConstraint> constraints;
  std::vector<BilinearTerm> bilinear;
  std::vector<CurrentLimit> current_limits;
  std::vector<Term> objective;  // maximized
  std::vector<NodePhaseVars> np_vars;
  std::vector<CandidateVars> cand_vars;
  std::vector<double> np_load_p, np_load_q;
  double charger_p = 0.0;
  double tan_phi = 0.0;
  std::vector<int> z_min, z_max;
  std::vector<double> weights;

  int add_var(std::string name, VarKind kind, VarRole role, double lower, double upper);
  int add_product(int left, int right, std::string name);
  Box bounds() const;
  int num_vars() const { return static_cast<int>(vars.size()); }
  double objective_value(const std::vector<double>& point) const;

  /// Throws Error(Degenerate) naming the first variable without a finite box or a malformed bilinear entry.
  void validate() const;

  /// Largest violation of bounds, integrality, linear rows, bilinear identities and current limits.
  double max_violation(const std::vector<double>& point, std::string* worst = nullptr) const;
};

struct LiftOptions {
  double deviation = 0.2;  // initial half-width of the rectangular voltage boxes around nominal
};

/// Exact lift: rational load/charger relations become bilinear identities through V^sq, voltage limits
/// become bounds on V^sq and every variable receives a finite box.
MiblpProblem lift_to_miblp(const MinlpProblem& minlp, const LiftOptions& options = {});

/// Lifted image of a rational-formulation point.
std::vector<double> lift_point(const MiblpProblem& miblp, const MinlpProblem& minlp, const MinlpPoint& point);

/// Projection of a lifted point back to the rational formulation.
MinlpPoint project_point(const MiblpProblem& miblp, const MinlpProblem& minlp, const std::vector<double>& point);

// ---------------------------------------------------------------------------
// Nominal + deviation decomposition

/// The lifted problem rewritten in deviation variables. Column indices are shared with the lifted
/// problem: filtered columns hold Delta y_f = y_f - y_f^nom and product columns whose factors are
/// filtered hold the product of the deviation factors.
struct DecomposedProblem {
  MiblpProblem problem;
  std::vector<char> filtered;
  std::vector<double> nominal;
  std::vector<AffineExpr> original_of;  // lifted variable as an affine expression of decomposed columns
  std::vector<int> filtered_vars;

  std::vector<double> to_decomposed(const std::vector<double>& lifted_point) const;
  std::vector<double> to_original(const std::vector<double>& decomposed_point) const;
};

DecomposedProblem filter_and_decompose(const MiblpProblem& miblp, const SlackSource& slack);

/// Interval propagation along the functional chains (Delta V -> V^sq -> G, B; z -> P -> G_ch; factors ->
/// products). Only tightens; returns false when some interval becomes empty.
bool propagate_bounds(const DecomposedProblem& dp, Box& box);

// ---------------------------------------------------------------------------

/// coef_product * s + coef_left * v1 + coef_right * v2 <= rhs
struct EnvelopeCut {
  double coef_product = 0.0;
  double coef_left = 0.0;
  double coef_right = 0.0;
  double rhs = 0.0;
};

/// The four McCormick inequalities for s = v1 * v2 over [l1, u1] x [l2, u2]. For a square (v1 == v2)
/// the two secant rows coincide; one is kept and a tangent at the box midpoint is added instead.
std::vector<EnvelopeCut> mccormick_envelope(bool square, double l1, double u1, double l2, double u2);

}  // namespace gridsite
