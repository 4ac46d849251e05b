#include "gridsite/priority.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "gridsite/error.hpp"

namespace gridsite {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

GiConfig GiConfig::from_charger(double charger_kw, double pf, double s_base_kva, double gamma) {
  GiConfig cfg;
  cfg.pf = pf;
  cfg.gamma = gamma;
  cfg.delta_s = charger_kw / pf / s_base_kva;
  cfg.validate();
  return cfg;
}

void GiConfig::validate() const {
  if (!(delta_s > 0.0)) throw Error(ErrorKind::Schema, "perturbation delta_s must be positive");
  if (!(gamma >= 0.0)) throw Error(ErrorKind::Schema, "penalty factor gamma must be non-negative");
  if (!(pf > 0.0 && pf <= 1.0)) throw Error(ErrorKind::Schema, "perturbation power factor must lie in (0, 1]");
}

double voltage_deviation(double v_hat, double v, double v_min, double v_max, double gamma) {
  const double penalty = std::min(0.0, v_hat - v_min) + std::min(0.0, v_max - v_hat);
  return std::abs(v_hat - v) + gamma * std::abs(penalty);
}

double current_deviation(double i_hat, double i, double rating, double gamma) {
  return std::abs(i_hat - i) + gamma * std::abs(std::min(0.0, rating - i_hat));
}

ImpactIndices perturbation_impacts(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state,
                                   int np, const GiConfig& cfg, const PowerFlowOptions& pf_options) {
  cfg.validate();
  if (!base_state.converged()) throw Error(ErrorKind::Numerical, "impact indices need a converged base state");
  InjectionOverlay overlay;
  const double p = cfg.delta_s * cfg.pf;
  const double q = cfg.delta_s * std::sqrt(std::max(0.0, 1.0 - cfg.pf * cfg.pf));
  overlay.add(np, {p, q});
  const PowerFlowState hat = solve_powerflow(model, y, overlay, pf_options, &base_state);
  if (!hat.converged()) return {kInf, kInf, false};

  ImpactIndices out;
  double sum_v = 0.0;
  for (int k = 0; k < model.num_node_phases(); ++k) {
    const Node& node = model.nodes[static_cast<std::size_t>(model.node_phase(k).node)];
    sum_v += voltage_deviation(hat.magnitude(k), base_state.magnitude(k), node.v_min, node.v_max, cfg.gamma);
  }
  double sum_c = 0.0;
  for (const Transformer& tx : model.transformers) {
    for (std::size_t slot = 0; slot < tx.phases.size(); ++slot) {
      const double i_hat = std::abs(transformer_current(model, tx, slot, hat));
      const double i = std::abs(transformer_current(model, tx, slot, base_state));
      sum_c += current_deviation(i_hat, i, tx.i_rated, cfg.gamma);
    }
  }
  out.f_v = sum_v / cfg.delta_s;
  out.f_c = sum_c / cfg.delta_s;
  return out;
}

double voltage_impact(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state, int np,
                      const GiConfig& cfg) {
  return perturbation_impacts(model, y, base_state, np, cfg).f_v;
}

double current_impact(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state, int np,
                      const GiConfig& cfg) {
  return perturbation_impacts(model, y, base_state, np, cfg).f_c;
}

GridImpact grid_impact(const std::vector<double>& f_v, const std::vector<double>& f_c) {
  if (f_v.size() != f_c.size()) throw Error(ErrorKind::Schema, "impact vectors differ in length");
  const std::size_t n = f_v.size();
  double max_v = 0.0;
  double max_c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(f_v[i])) max_v = std::max(max_v, f_v[i]);
    if (std::isfinite(f_c[i])) max_c = std::max(max_c, f_c[i]);
  }
  GridImpact g{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f_v[i]) || !std::isfinite(f_c[i])) {
      g.f_g[i] = kInf;
      continue;
    }
    const double nv = max_v > 0.0 ? f_v[i] / max_v : 0.0;
    const double nc = max_c > 0.0 ? f_c[i] / max_c : 0.0;
    const double sum = nv + nc;
    if (sum > 0.0) {
      g.a[i] = nv / sum;
      g.b[i] = nc / sum;
    }
    g.f_g[i] = g.a[i] * nv + g.b[i] * nc;
  }
  return g;
}

std::vector<double> priority_weights(const std::vector<double>& f_g) {
  if (f_g.empty()) throw Error(ErrorKind::Degenerate, "cannot weight an empty candidate set");
  double lowest = kInf;
  for (double v : f_g) {
    if (std::isnan(v)) throw Error(ErrorKind::Numerical, "grid impact index is NaN");
    lowest = std::min(lowest, v);
  }
  if (!std::isfinite(lowest)) throw Error(ErrorKind::Degenerate, "every candidate has an infinite grid impact");
  std::vector<double> w(f_g.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < f_g.size(); ++i) {
    if (!std::isfinite(f_g[i])) continue;
    w[i] = std::exp(-(f_g[i] - lowest));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

void prioritize(const FeederModel& model, const Admittance& y, const PowerFlowState& base_state,
                CandidateSet& candidates, const GiConfig& cfg, int workers) {
  cfg.validate();
  const std::size_t n = candidates.size();
  if (n == 0) throw Error(ErrorKind::Degenerate, "cannot prioritize an empty candidate set");
  std::vector<ImpactIndices> impacts(n);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      impacts[i] = perturbation_impacts(model, y, base_state, candidates.entries[i].np, cfg);
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  std::vector<double> f_v(n);
  std::vector<double> f_c(n);
  for (std::size_t i = 0; i < n; ++i) {
    f_v[i] = impacts[i].f_v;
    f_c[i] = impacts[i].f_c;
  }
  const GridImpact g = grid_impact(f_v, f_c);
  const std::vector<double> w = priority_weights(g.f_g);
  for (std::size_t i = 0; i < n; ++i) {
    Candidate& c = candidates.entries[i];
    c.f_v = f_v[i];
    c.f_c = f_c[i];
    c.f_g = g.f_g[i];
    c.weight = w[i];
    c.usable = impacts[i].usable;
  }
}

}  // namespace gridsite
