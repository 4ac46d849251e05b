#include "gridsite/acpf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

#include "gridsite/error.hpp"

namespace gridsite {

namespace {

constexpr double kMinVsq = 1e-6;

std::size_t at(int i) { return static_cast<std::size_t>(i); }

// Total constant-power demand (loads plus overlay) per node-phase.
struct Demand {
  std::vector<double> p, q;
};

Demand total_demand(const FeederModel& model, const InjectionOverlay& overlay) {
  const int n = model.num_node_phases();
  Demand d{std::vector<double>(at(n), 0.0), std::vector<double>(at(n), 0.0)};
  for (int k = 0; k < n; ++k) {
    const auto [p, q] = model.load_at(k);
    d.p[at(k)] = p;
    d.q[at(k)] = q;
  }
  const auto extra = overlay.totals(model);
  for (int k = 0; k < n; ++k) {
    d.p[at(k)] += extra[at(k)].real();
    d.q[at(k)] += extra[at(k)].imag();
  }
  return d;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Residual of the constant-power model as a function of the voltages alone.
std::vector<double> residual_of(const FeederModel& model, const Admittance& y, const Demand& d,
                                const std::vector<double>& vr, const std::vector<double>& vi) {
  const int n = model.num_node_phases();
  std::vector<double> r(at(2 * n), 0.0);
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.g, col); it; ++it) {
      const int row = static_cast<int>(it.row());
      r[at(2 * row)] += it.value() * vr[at(col)];
      r[at(2 * row + 1)] += it.value() * vi[at(col)];
    }
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.b, col); it; ++it) {
      const int row = static_cast<int>(it.row());
      r[at(2 * row)] -= it.value() * vi[at(col)];
      r[at(2 * row + 1)] += it.value() * vr[at(col)];
    }
  }
  for (int k = 0; k < n; ++k) {
    if (model.is_slack(k)) {
      r[at(2 * k)] = 0.0;
      r[at(2 * k + 1)] = 0.0;
      continue;
    }
    const double p = d.p[at(k)];
    const double q = d.q[at(k)];
    if (p == 0.0 && q == 0.0) continue;
    const double vsq = vr[at(k)] * vr[at(k)] + vi[at(k)] * vi[at(k)];
    r[at(2 * k)] += (p * vr[at(k)] + q * vi[at(k)]) / vsq;
    r[at(2 * k + 1)] += (p * vi[at(k)] - q * vr[at(k)]) / vsq;
  }
  return r;
}

Eigen::SparseMatrix<double> jacobian_of(const FeederModel& model, const Admittance& y, const Demand& d,
                                        const std::vector<double>& vr, const std::vector<double>& vi) {
  const int n = model.num_node_phases();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(at(8 * (y.g.nonZeros() + n)));
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.g, col); it; ++it) {
      const int row = static_cast<int>(it.row());
      if (model.is_slack(row)) continue;
      trip.emplace_back(2 * row, 2 * col, it.value());
      trip.emplace_back(2 * row + 1, 2 * col + 1, it.value());
    }
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.b, col); it; ++it) {
      const int row = static_cast<int>(it.row());
      if (model.is_slack(row)) continue;
      trip.emplace_back(2 * row, 2 * col + 1, -it.value());
      trip.emplace_back(2 * row + 1, 2 * col, it.value());
    }
  }
  for (int k = 0; k < n; ++k) {
    if (model.is_slack(k)) continue;
    const double p = d.p[at(k)];
    const double q = d.q[at(k)];
    if (p == 0.0 && q == 0.0) continue;
    const double a = vr[at(k)];
    const double b = vi[at(k)];
    const double vsq = a * a + b * b;
    const double v4 = vsq * vsq;
    const double ir_num = p * a + q * b;
    const double ii_num = p * b - q * a;
    trip.emplace_back(2 * k, 2 * k, p / vsq - 2.0 * a * ir_num / v4);
    trip.emplace_back(2 * k, 2 * k + 1, q / vsq - 2.0 * b * ir_num / v4);
    trip.emplace_back(2 * k + 1, 2 * k, -q / vsq - 2.0 * a * ii_num / v4);
    trip.emplace_back(2 * k + 1, 2 * k + 1, p / vsq - 2.0 * b * ii_num / v4);
  }
  Eigen::SparseMatrix<double> j(2 * n, 2 * n);
  j.setFromTriplets(trip.begin(), trip.end());
  return j;
}

}  // namespace

void InjectionOverlay::add(int np, std::complex<double> s) { draws_.emplace_back(np, s); }

void InjectionOverlay::add(const FeederModel& model, std::string_view node, Phase phase, std::complex<double> s) {
  const int np = model.np_index(node, phase);
  if (np < 0) {
    throw Error(ErrorKind::Reference,
                "overlay references absent node-phase " + std::string(node) + "." + phase_letter(phase));
  }
  add(np, s);
}

std::vector<std::complex<double>> InjectionOverlay::totals(const FeederModel& model) const {
  std::vector<std::complex<double>> out(at(model.num_node_phases()));
  for (const auto& [np, s] : draws_) {
    if (np < 0 || np >= model.num_node_phases())
      throw Error(ErrorKind::Reference, "overlay node-phase index out of range");
    out[at(np)] += s;
  }
  return out;
}

std::string to_string(PowerFlowStatus status) {
  switch (status) {
    case PowerFlowStatus::Converged: return "converged";
    case PowerFlowStatus::MaxIterations: return "max-iterations";
    case PowerFlowStatus::SingularJacobian: return "singular-jacobian";
    case PowerFlowStatus::VoltageCollapse: return "voltage-collapse";
  }
  return "unknown";
}

double PowerFlowState::v_sq(int np) const {
  return v_real[at(np)] * v_real[at(np)] + v_imag[at(np)] * v_imag[at(np)];
}

double PowerFlowState::magnitude(int np) const { return std::sqrt(v_sq(np)); }

std::complex<double> PowerFlowState::voltage(int np) const { return {v_real[at(np)], v_imag[at(np)]}; }

PowerFlowState flat_state(const FeederModel& model) {
  const int n = model.num_node_phases();
  PowerFlowState s;
  s.v_real.resize(at(n));
  s.v_imag.resize(at(n));
  for (int k = 0; k < n; ++k) {
    const auto [re, im] = model.nominal_voltage(k);
    s.v_real[at(k)] = re;
    s.v_imag[at(k)] = im;
  }
  s.g_load.assign(at(n), 0.0);
  s.b_load.assign(at(n), 0.0);
  s.g_ch.assign(at(n), 0.0);
  s.b_ch.assign(at(n), 0.0);
  s.residual.assign(at(2 * n), 0.0);
  return s;
}

void refresh_surrogates(const FeederModel& model, const InjectionOverlay& overlay, PowerFlowState& state) {
  const int n = model.num_node_phases();
  const auto extra = overlay.totals(model);
  state.g_load.assign(at(n), 0.0);
  state.b_load.assign(at(n), 0.0);
  state.g_ch.assign(at(n), 0.0);
  state.b_ch.assign(at(n), 0.0);
  for (int k = 0; k < n; ++k) {
    const double vsq = state.v_sq(k);
    const auto [p, q] = model.load_at(k);
    if (p != 0.0 || q != 0.0) {
      state.g_load[at(k)] = p / vsq;
      state.b_load[at(k)] = -q / vsq;
    }
    if (extra[at(k)] != std::complex<double>{}) {
      state.g_ch[at(k)] = extra[at(k)].real() / vsq;
      state.b_ch[at(k)] = -extra[at(k)].imag() / vsq;
    }
  }
}

std::vector<double> kcl_residual(const FeederModel& model, const Admittance& y, PowerFlowState& s) {
  const int n = model.num_node_phases();
  if (s.v_real.size() != at(n) || s.v_imag.size() != at(n) || s.g_load.size() != at(n) || s.b_load.size() != at(n) ||
      s.g_ch.size() != at(n) || s.b_ch.size() != at(n)) {
    throw Error(ErrorKind::Schema, "power-flow state dimensions do not match the feeder");
  }
  s.i_line_r.assign(at(n), 0.0);
  s.i_line_i.assign(at(n), 0.0);
  s.i_load_r.assign(at(n), 0.0);
  s.i_load_i.assign(at(n), 0.0);
  s.i_ch_r.assign(at(n), 0.0);
  s.i_ch_i.assign(at(n), 0.0);
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.g, col); it; ++it) {
      s.i_line_r[at(it.row())] += it.value() * s.v_real[at(col)];
      s.i_line_i[at(it.row())] += it.value() * s.v_imag[at(col)];
    }
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.b, col); it; ++it) {
      s.i_line_r[at(it.row())] -= it.value() * s.v_imag[at(col)];
      s.i_line_i[at(it.row())] += it.value() * s.v_real[at(col)];
    }
  }
  std::vector<double> r(at(2 * n), 0.0);
  for (int k = 0; k < n; ++k) {
    const double a = s.v_real[at(k)];
    const double b = s.v_imag[at(k)];
    s.i_load_r[at(k)] = s.g_load[at(k)] * a - s.b_load[at(k)] * b;
    s.i_load_i[at(k)] = s.g_load[at(k)] * b + s.b_load[at(k)] * a;
    s.i_ch_r[at(k)] = s.g_ch[at(k)] * a - s.b_ch[at(k)] * b;
    s.i_ch_i[at(k)] = s.g_ch[at(k)] * b + s.b_ch[at(k)] * a;
    if (model.is_slack(k)) continue;
    r[at(2 * k)] = s.i_load_r[at(k)] + s.i_line_r[at(k)] + s.i_ch_r[at(k)];
    r[at(2 * k + 1)] = s.i_load_i[at(k)] + s.i_line_i[at(k)] + s.i_ch_i[at(k)];
  }
  s.residual = r;
  s.residual_norm = max_abs(r);
  return r;
}

Eigen::SparseMatrix<double> kcl_jacobian(const FeederModel& model, const Admittance& y,
                                         const InjectionOverlay& overlay, const PowerFlowState& state) {
  return jacobian_of(model, y, total_demand(model, overlay), state.v_real, state.v_imag);
}

PowerFlowState solve_powerflow(const FeederModel& model, const Admittance& y, const InjectionOverlay& overlay,
                               const PowerFlowOptions& options, const PowerFlowState* warm_start) {
  if (!(options.tolerance > 0.0)) throw Error(ErrorKind::Schema, "power-flow tolerance must be positive");
  const int n = model.num_node_phases();
  const Demand demand = total_demand(model, overlay);

  PowerFlowState state = flat_state(model);
  if (warm_start != nullptr && warm_start->v_real.size() == at(n) && warm_start->v_imag.size() == at(n)) {
    for (int k = 0; k < n; ++k) {
      if (model.is_slack(k)) continue;
      state.v_real[at(k)] = warm_start->v_real[at(k)];
      state.v_imag[at(k)] = warm_start->v_imag[at(k)];
    }
  }

  // Unknowns are the interleaved (v_real, v_imag) of every non-slack node-phase.
  std::vector<int> unknown_of(at(2 * n), -1);
  std::vector<int> position;
  for (int k = 0; k < n; ++k) {
    if (model.is_slack(k)) continue;
    unknown_of[at(2 * k)] = static_cast<int>(position.size());
    position.push_back(2 * k);
    unknown_of[at(2 * k + 1)] = static_cast<int>(position.size());
    position.push_back(2 * k + 1);
  }
  const int m = static_cast<int>(position.size());

  auto loaded_collapse = [&](const std::vector<double>& vr, const std::vector<double>& vi) {
    for (int k = 0; k < n; ++k) {
      if (demand.p[at(k)] == 0.0 && demand.q[at(k)] == 0.0) continue;
      if (vr[at(k)] * vr[at(k)] + vi[at(k)] * vi[at(k)] < kMinVsq) return true;
    }
    return false;
  };

  std::vector<double> r = residual_of(model, y, demand, state.v_real, state.v_imag);
  double norm = max_abs(r);
  state.status = PowerFlowStatus::MaxIterations;
  int iter = 0;
  for (; iter <= options.max_iter; ++iter) {
    if (norm <= options.tolerance) {
      state.status = PowerFlowStatus::Converged;
      break;
    }
    if (iter == options.max_iter || m == 0) break;

    const Eigen::SparseMatrix<double> full = jacobian_of(model, y, demand, state.v_real, state.v_imag);
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < full.outerSize(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(full, col); it; ++it) {
        const int rr = unknown_of[at(it.row())];
        const int cc = unknown_of[at(it.col())];
        if (rr >= 0 && cc >= 0) trip.emplace_back(rr, cc, it.value());
      }
    }
    Eigen::SparseMatrix<double> jac(m, m);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success) {
      state.status = PowerFlowStatus::SingularJacobian;
      break;
    }
    Eigen::VectorXd rhs(m);
    for (int i = 0; i < m; ++i) rhs[i] = -r[at(position[at(i)])];
    const Eigen::VectorXd dx = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !dx.allFinite()) {
      state.status = PowerFlowStatus::SingularJacobian;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving, step *= 0.5) {
      std::vector<double> vr = state.v_real;
      std::vector<double> vi = state.v_imag;
      for (int i = 0; i < m; ++i) {
        const int slot = position[at(i)];
        if (slot % 2 == 0) {
          vr[at(slot / 2)] += step * dx[i];
        } else {
          vi[at(slot / 2)] += step * dx[i];
        }
      }
      if (loaded_collapse(vr, vi)) continue;
      std::vector<double> trial = residual_of(model, y, demand, vr, vi);
      const double trial_norm = max_abs(trial);
      if (trial_norm < norm || halving == 29) {
        state.v_real = std::move(vr);
        state.v_imag = std::move(vi);
        r = std::move(trial);
        norm = trial_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      state.status = PowerFlowStatus::VoltageCollapse;
      break;
    }
  }
  state.iterations = iter;

  refresh_surrogates(model, overlay, state);
  kcl_residual(model, y, state);
  return state;
}

std::complex<double> transformer_current(const FeederModel& model, const Transformer& t, std::size_t slot,
                                         const PowerFlowState& state) {
  const Phase p = t.phases[slot];
  const int f = model.np_index(t.from, p);
  const int to = model.np_index(t.to, p);
  const std::complex<double> yser{t.g[slot], t.b[slot]};
  return yser * (state.voltage(f) - state.voltage(to));
}

LimitReport check_limits(const FeederModel& model, const PowerFlowState& state, double tolerance) {
  LimitReport rep;
  rep.worst_voltage_margin = std::numeric_limits<double>::infinity();
  rep.worst_thermal_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < model.num_node_phases(); ++k) {
    const Node& node = model.nodes[at(model.node_phase(k).node)];
    const double v = state.magnitude(k);
    rep.worst_voltage_margin = std::min({rep.worst_voltage_margin, v - node.v_min, node.v_max - v});
    if (node.v_min - v > tolerance) rep.voltage.push_back({k, v, node.v_min, node.v_min - v});
    if (v - node.v_max > tolerance) rep.voltage.push_back({k, v, node.v_max, v - node.v_max});
  }
  for (std::size_t t = 0; t < model.transformers.size(); ++t) {
    const Transformer& tx = model.transformers[t];
    for (std::size_t slot = 0; slot < tx.phases.size(); ++slot) {
      const double i = std::abs(transformer_current(model, tx, slot, state));
      rep.worst_thermal_margin = std::min(rep.worst_thermal_margin, tx.i_rated - i);
      if (i - tx.i_rated > tolerance)
        rep.thermal.push_back({static_cast<int>(t), tx.phases[slot], i, tx.i_rated, i - tx.i_rated});
    }
  }
  return rep;
}

}  // namespace gridsite
