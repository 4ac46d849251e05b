#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "gridsite/feeder.hpp"

namespace gridsite {

/// Extra constant-power draws per node-phase (perturbations, charger stations).
class InjectionOverlay {
 public:
  void add(int np, std::complex<double> s);
  void add(const FeederModel& model, std::string_view node, Phase phase, std::complex<double> s);
  const std::vector<std::pair<int, std::complex<double>>>& draws() const { return draws_; }
  bool empty() const { return draws_.empty(); }

  /// Dense per-node-phase totals; throws Error(Reference) on an index outside the model.
  std::vector<std::complex<double>> totals(const FeederModel& model) const;

 private:
  std::vector<std::pair<int, std::complex<double>>> draws_;
};

enum class PowerFlowStatus { Converged, MaxIterations, SingularJacobian, VoltageCollapse };

std::string to_string(PowerFlowStatus status);

/// Rectangular-coordinate network state. Vectors are indexed by node-phase.
/// `residual` is interleaved (real, imaginary) per node-phase; slack entries stay zero.
struct PowerFlowState {
  std::vector<double> v_real;
  std::vector<double> v_imag;
  std::vector<double> g_load;
  std::vector<double> b_load;
  std::vector<double> g_ch;
  std::vector<double> b_ch;
  std::vector<double> i_load_r, i_load_i;
  std::vector<double> i_line_r, i_line_i;
  std::vector<double> i_ch_r, i_ch_i;
  std::vector<double> residual;

  PowerFlowStatus status = PowerFlowStatus::MaxIterations;
  int iterations = 0;
  double residual_norm = 0.0;  // max-norm of `residual`

  bool converged() const { return status == PowerFlowStatus::Converged; }
  double v_sq(int np) const;
  double magnitude(int np) const;
  std::complex<double> voltage(int np) const;
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iter = 50;
};

/// Flat profile: every node-phase at V_k angle(theta_p), no currents evaluated.
PowerFlowState flat_state(const FeederModel& model);

/// Newton iteration on the current-injection residual with step halving.
PowerFlowState solve_powerflow(const FeederModel& model, const Admittance& y, const InjectionOverlay& overlay,
                               const PowerFlowOptions& options = {}, const PowerFlowState* warm_start = nullptr);

/// Recomputes surrogate conductance/susceptance of loads and overlay draws from the state voltages.
void refresh_surrogates(const FeederModel& model, const InjectionOverlay& overlay, PowerFlowState& state);

/// KCL mismatch from the stored voltages and surrogates; also fills the device current fields.
std::vector<double> kcl_residual(const FeederModel& model, const Admittance& y, PowerFlowState& state);

/// Jacobian of the constant-power residual with respect to interleaved (v_real, v_imag).
Eigen::SparseMatrix<double> kcl_jacobian(const FeederModel& model, const Admittance& y,
                                         const InjectionOverlay& overlay, const PowerFlowState& state);

std::complex<double> transformer_current(const FeederModel& model, const Transformer& t, std::size_t slot,
                                         const PowerFlowState& state);

struct VoltageViolation {
  int np = -1;
  double magnitude = 0.0;
  double limit = 0.0;
  double amount = 0.0;  // distance outside the band, pu
};

struct ThermalViolation {
  int transformer = -1;
  Phase phase = Phase::A;
  double current = 0.0;
  double rating = 0.0;
  double amount = 0.0;
};

struct LimitReport {
  std::vector<VoltageViolation> voltage;
  std::vector<ThermalViolation> thermal;
  double worst_voltage_margin = 0.0;  // min over node-phases of distance to the nearer limit (negative if violated)
  double worst_thermal_margin = 0.0;  // min over transformer phases of rating - current
  bool ok() const { return voltage.empty() && thermal.empty(); }
};

/// Lists every voltage-band and transformer-rating violation larger than `tolerance`.
LimitReport check_limits(const FeederModel& model, const PowerFlowState& state, double tolerance = 0.0);

}  // namespace gridsite
