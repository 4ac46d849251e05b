#pragma once

// Exhaustive reference for small siting problems: every (x, z) assignment is checked against the
// discrete rules directly and against an independent power-flow solve.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gridsite/acpf.hpp"
#include "gridsite/feeder.hpp"
#include "gridsite/miblp.hpp"

namespace oracle {

struct Placement {
  std::vector<int> x;
  std::vector<int> z;
  double objective = -std::numeric_limits<double>::infinity();
  long feasible = 0;  // number of admissible assignments seen
};

inline bool discrete_ok(const gridsite::MinlpProblem& p, const std::vector<int>& x, const std::vector<int>& z) {
  const auto& e = p.candidates.entries;
  long total = 0;
  double spend = 0.0;
  for (std::size_t c = 0; c < e.size(); ++c) {
    if (x[c] == 0 && z[c] != 0) return false;
    if (x[c] == 1 && (z[c] < e[c].z_min || z[c] > e[c].z_max)) return false;
    total += z[c];
    spend += x[c] * e[c].land_cost + z[c] * p.cost.charger_cost;
  }
  if (total < p.demand || spend > p.cost.budget) return false;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      if (!x[i] || !x[j] || e[i].node == e[j].node) continue;
      if (gridsite::haversine_distance(e[i].latitude, e[i].longitude, e[j].latitude, e[j].longitude) <=
          2.0 * p.cost.service_radius_m)
        return false;
    }
  }
  return true;
}

inline bool network_ok(const gridsite::MinlpProblem& p, const std::vector<int>& z, double tol) {
  const gridsite::FeederModel& m = *p.model;
  gridsite::InjectionOverlay overlay;
  const double kw = p.cost.charger_kw / m.base.s_base_kva;
  const double tphi = std::sqrt(1.0 - p.cost.pf * p.cost.pf) / p.cost.pf;
  for (std::size_t c = 0; c < z.size(); ++c) {
    if (z[c] > 0) overlay.add(p.candidates.entries[c].np, {kw * z[c], kw * z[c] * tphi});
  }
  const auto y = gridsite::assemble_admittance(m);
  const auto s = gridsite::solve_powerflow(m, y, overlay);
  if (!s.converged()) return false;
  for (int k = 0; k < m.num_node_phases(); ++k) {
    const auto& node = m.nodes[static_cast<std::size_t>(m.node_phase(k).node)];
    const double v = std::abs(s.voltage(k));
    if (v < node.v_min - tol || v > node.v_max + tol) return false;
  }
  for (const auto& tx : m.transformers) {
    for (std::size_t slot = 0; slot < tx.phases.size(); ++slot) {
      const int f = m.np_index(tx.from, tx.phases[slot]);
      const int t = m.np_index(tx.to, tx.phases[slot]);
      const std::complex<double> i = std::complex<double>(tx.g[slot], tx.b[slot]) * (s.voltage(f) - s.voltage(t));
      if (std::abs(i) > tx.i_rated + tol) return false;
    }
  }
  return true;
}

inline Placement enumerate_optimum(const gridsite::MinlpProblem& p, double tol = 1e-6) {
  const auto& e = p.candidates.entries;
  const std::size_t n = e.size();
  Placement best;
  std::vector<int> x(n, 0), z(n, 0);
  // Odometer over per-candidate choices 0 (closed) or z in [max(1, z_min), z_max].
  std::vector<int> choice(n, 0);
  while (true) {
    for (std::size_t c = 0; c < n; ++c) {
      x[c] = choice[c] > 0 ? 1 : 0;
      z[c] = choice[c];
    }
    if (discrete_ok(p, x, z) && network_ok(p, z, tol)) {
      ++best.feasible;
      double f = 0.0;
      for (std::size_t c = 0; c < n; ++c) f += e[c].weight * z[c];
      if (f > best.objective) {
        best.objective = f;
        best.x = x;
        best.z = z;
      }
    }
    std::size_t c = 0;
    for (; c < n; ++c) {
      int next = choice[c] == 0 ? std::max(1, e[c].z_min) : choice[c] + 1;
      if (next <= e[c].z_max) {
        choice[c] = next;
        break;
      }
      choice[c] = 0;
    }
    if (c == n) break;
  }
  return best;
}

}  // namespace oracle
