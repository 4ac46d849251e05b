#pragma once

#include <vector>

#include "gridsite/acpf.hpp"
#include "gridsite/candidates.hpp"

namespace gridsite {

struct GiConfig {
  double delta_s = 0.0;  // perturbation apparent power, per-unit
  double gamma = 10.0;   // limit-violation penalty factor
  double pf = 0.985;     // power factor of the perturbation draw

  /// One charger (kW at the given power factor) expressed on the feeder's per-phase kVA base.
  static GiConfig from_charger(double charger_kw, double pf, double s_base_kva, double gamma = 10.0);
  void validate() const;
};

/// Per-node-phase deviation term: |v_hat - v| + gamma |min(0, v_hat - v_min) + min(0, v_max - v_hat)|.
double voltage_deviation(double v_hat, double v, double v_min, double v_max, double gamma);

/// Per-transformer deviation term: |i_hat - i| + gamma |min(0, rating - i_hat)|.
double current_deviation(double i_hat, double i, double rating, double gamma);

struct ImpactIndices {
  double f_v = 0.0;
  double f_c = 0.0;
  bool usable = true;
};

/// Both indices from one perturbed solve at node-phase `np`; unusable (and +inf) when it diverges.
ImpactIndices perturbation_impacts(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state,
                                   int np, const GiConfig& cfg, const PowerFlowOptions& pf_options = {});

double voltage_impact(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state, int np,
                      const GiConfig& cfg);
double current_impact(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state, int np,
                      const GiConfig& cfg);

struct GridImpact {
  std::vector<double> f_g;
  std::vector<double> a;  // voltage share
  std::vector<double> b;  // current share
};

/// Max-normalizes both index vectors and blends them with proportional weights. Infinite entries
/// are skipped by the normalization and keep f_g = +inf. An all-zero component gets weight 0.
GridImpact grid_impact(const std::vector<double>& f_v, const std::vector<double>& f_c);

/// Negative softmax of f_g; +inf entries receive weight 0.
std::vector<double> priority_weights(const std::vector<double>& f_g);

/// Runs the perturbation studies (concurrently when workers > 1) and fills f_v, f_c, f_g, weight.
void prioritize(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state,
                CandidateSet& candidates, const GiConfig& cfg, int workers = 1);

}  // namespace gridsite
