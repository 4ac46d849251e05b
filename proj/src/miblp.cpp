#include "gridsite/miblp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gridsite/error.hpp"
#include "interval.hpp"

namespace gridsite {

using detail::Interval;

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

void track(double v, const std::string& what, double& worst, std::string* name) {
  if (v > worst) {
    worst = v;
    if (name) *name = what;
  }
}

std::string np_label(const FeederModel& model, int np) {
  const NodePhase& ref = model.node_phase(np);
  return model.nodes[at(ref.node)].id + "." + phase_letter(ref.phase);
}

// Merges duplicate columns and drops exact zeros.
std::vector<Term> normalized(std::vector<Term> terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
  std::vector<Term> out;
  for (const Term& t : terms) {
    if (!out.empty() && out.back().var == t.var) {
      out.back().coef += t.coef;
    } else {
      out.push_back(t);
    }
  }
  out.erase(std::remove_if(out.begin(), out.end(), [](const Term& t) { return t.coef == 0.0; }), out.end());
  return out;
}

}  // namespace

void CostConfig::validate() const {
  if (!(charger_kw > 0.0)) throw Error(ErrorKind::Schema, "charger rating must be positive");
  if (!(pf > 0.0 && pf <= 1.0)) throw Error(ErrorKind::Schema, "charger power factor must lie in (0, 1]");
  if (!(charger_cost >= 0.0)) throw Error(ErrorKind::Schema, "charger cost must be non-negative");
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw Error(ErrorKind::Schema, "budget must be finite and non-negative");
  if (!(service_radius_m >= 0.0)) throw Error(ErrorKind::Schema, "service radius must be non-negative");
}

double CostConfig::tan_phi() const { return std::sqrt(std::max(0.0, 1.0 - pf * pf)) / pf; }

std::vector<CandidatePair> anti_clustering_constraints(const CandidateSet& candidates, double service_radius_m) {
  std::vector<CandidatePair> out;
  const auto& e = candidates.entries;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      if (e[i].node == e[j].node) continue;
      const double d = haversine_distance(e[i].latitude, e[i].longitude, e[j].latitude, e[j].longitude);
      if (d <= 2.0 * service_radius_m) out.push_back({static_cast<int>(i), static_cast<int>(j)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double MinlpProblem::objective(const std::vector<int>& x, const std::vector<int>& z) const {
  (void)x;
  double f = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) f += candidates.entries[c].weight * z[c];
  return f;
}

double MinlpProblem::discrete_violation(const std::vector<int>& x, const std::vector<int>& z) const {
  const std::size_t n = candidates.size();
  if (x.size() != n || z.size() != n) throw Error(ErrorKind::Schema, "decision vectors do not match the candidates");
  double worst = -std::numeric_limits<double>::infinity();
  long total = 0;
  double spend = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const Candidate& cand = candidates.entries[c];
    worst = std::max(worst, static_cast<double>(std::abs(x[c] * (x[c] - 1))));
    worst = std::max(worst, static_cast<double>(z[c] - cand.z_max * x[c]));
    worst = std::max(worst, static_cast<double>(cand.z_min * x[c] - z[c]));
    total += z[c];
    spend += cand.land_cost * x[c] + cost.charger_cost * z[c];
  }
  worst = std::max(worst, static_cast<double>(demand - total));
  worst = std::max(worst, (spend - cost.budget) / std::max(1.0, cost.budget));
  for (const CandidatePair& p : separation) {
    worst = std::max(worst, static_cast<double>(x[at(p.first)] + x[at(p.second)] - 1));
  }
  return worst;
}

InjectionOverlay MinlpProblem::charger_overlay(const std::vector<int>& z) const {
  InjectionOverlay overlay;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (z[c] == 0) continue;
    const double p = charger_p * z[c];
    overlay.add(candidates.entries[c].np, {p, tan_phi * p});
  }
  return overlay;
}

MinlpPoint MinlpProblem::point_from_state(const PowerFlowState& state, const std::vector<int>& x,
                                          const std::vector<int>& z) const {
  MinlpPoint pt;
  pt.v_real = state.v_real;
  pt.v_imag = state.v_imag;
  pt.g_load = state.g_load;
  pt.b_load = state.b_load;
  pt.g_ch = state.g_ch;
  pt.b_ch = state.b_ch;
  pt.x = x;
  pt.z = z;
  pt.p_ch.resize(candidates.size());
  pt.q_ch.resize(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    pt.p_ch[c] = charger_p * z[c];
    pt.q_ch[c] = tan_phi * pt.p_ch[c];
  }
  return pt;
}

double MinlpProblem::max_violation(const MinlpPoint& pt, std::string* worst_name) const {
  const FeederModel& m = *model;
  const int n = m.num_node_phases();
  double worst = discrete_violation(pt.x, pt.z);
  if (worst_name) *worst_name = worst > 0.0 ? "discrete" : "";

  std::vector<double> ir(at(n), 0.0), ii(at(n), 0.0);
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(admittance.g, col); it; ++it) {
      ir[at(it.row())] += it.value() * pt.v_real[at(col)];
      ii[at(it.row())] += it.value() * pt.v_imag[at(col)];
    }
    for (Eigen::SparseMatrix<double>::InnerIterator it(admittance.b, col); it; ++it) {
      ir[at(it.row())] -= it.value() * pt.v_imag[at(col)];
      ii[at(it.row())] += it.value() * pt.v_real[at(col)];
    }
  }
  std::vector<int> cand_at(at(n), -1);
  for (std::size_t c = 0; c < candidates.size(); ++c) cand_at[at(candidates.entries[c].np)] = static_cast<int>(c);

  for (int k = 0; k < n; ++k) {
    const double a = pt.v_real[at(k)];
    const double b = pt.v_imag[at(k)];
    const double vsq = a * a + b * b;
    const Node& node = m.nodes[at(m.node_phase(k).node)];
    const std::string label = np_label(m, k);
    if (m.is_slack(k)) {
      const auto nom = m.nominal_voltage(k);
      track(std::max(std::abs(a - nom.first), std::abs(b - nom.second)), "slack " + label, worst, worst_name);
      continue;
    }
    track(node.v_min - std::sqrt(vsq), "vmin " + label, worst, worst_name);
    track(std::sqrt(vsq) - node.v_max, "vmax " + label, worst, worst_name);

    const auto [p, q] = m.load_at(k);
    const double gl = pt.g_load[at(k)], bl = pt.b_load[at(k)];
    track(std::abs(gl * vsq - p), "load_p " + label, worst, worst_name);
    track(std::abs(bl * vsq + q), "load_q " + label, worst, worst_name);

    const double gc = pt.g_ch[at(k)], bc = pt.b_ch[at(k)];
    const int c = cand_at[at(k)];
    const double pc = c >= 0 ? pt.p_ch[at(c)] : 0.0;
    const double qc = c >= 0 ? pt.q_ch[at(c)] : 0.0;
    track(std::abs(gc * vsq - pc), "charger_p " + label, worst, worst_name);
    track(std::abs(bc * vsq + qc), "charger_q " + label, worst, worst_name);
    if (c >= 0) {
      track(std::abs(pc - charger_p * pt.z[at(c)]), "charger_rating " + label, worst, worst_name);
      track(std::abs(qc - tan_phi * pc), "charger_pf " + label, worst, worst_name);
    }

    const double rr = ir[at(k)] + gl * a - bl * b + gc * a - bc * b;
    const double ri = ii[at(k)] + gl * b + bl * a + gc * b + bc * a;
    track(std::max(std::abs(rr), std::abs(ri)), "kcl " + label, worst, worst_name);
  }

  for (const Transformer& tx : m.transformers) {
    for (std::size_t slot = 0; slot < tx.phases.size(); ++slot) {
      const int f = m.np_index(tx.from, tx.phases[slot]);
      const int t = m.np_index(tx.to, tx.phases[slot]);
      const std::complex<double> dv{pt.v_real[at(f)] - pt.v_real[at(t)], pt.v_imag[at(f)] - pt.v_imag[at(t)]};
      const double i = std::abs(std::complex<double>{tx.g[slot], tx.b[slot]} * dv);
      track(i - tx.i_rated, "thermal " + tx.id + "." + phase_letter(tx.phases[slot]), worst, worst_name);
    }
  }
  return worst;
}

MinlpProblem build_minlp(const FeederModel& model, const CandidateSet& candidates, int demand, const CostConfig& cost) {
  cost.validate();
  if (demand < 0) throw Error(ErrorKind::Schema, "charger demand must be non-negative");
  long capacity = 0;
  std::vector<char> taken(at(model.num_node_phases()), 0);
  for (const Candidate& c : candidates.entries) {
    if (c.np < 0 || c.np >= model.num_node_phases())
      throw Error(ErrorKind::Reference, "candidate " + c.node + " has no node-phase index");
    if (model.is_slack(c.np)) throw Error(ErrorKind::Reference, "candidate " + c.node + " sits on the slack bus");
    if (taken[at(c.np)]) throw Error(ErrorKind::Schema, "duplicate candidate at " + np_label(model, c.np));
    taken[at(c.np)] = 1;
    if (c.z_min < 0 || c.z_max < c.z_min)
      throw Error(ErrorKind::Schema, "candidate " + c.node + " needs 0 <= z_min <= z_max");
    if (!std::isfinite(c.weight)) throw Error(ErrorKind::Schema, "candidate " + c.node + " has a non-finite weight");
    capacity += c.z_max;
  }
  if (capacity < demand) {
    throw Error(ErrorKind::Infeasible, "demand of " + std::to_string(demand) + " chargers exceeds the candidate capacity " +
                                           std::to_string(capacity));
  }
  MinlpProblem out;
  out.model = &model;
  out.admittance = assemble_admittance(model);
  out.candidates = candidates;
  out.demand = demand;
  out.cost = cost;
  out.separation = anti_clustering_constraints(candidates, cost.service_radius_m);
  out.charger_p = cost.charger_p_pu(model.base);
  out.tan_phi = cost.tan_phi();
  return out;
}

// ---------------------------------------------------------------------------

double AffineExpr::eval(const std::vector<double>& point) const {
  double v = constant;
  for (const Term& t : terms) v += t.coef * point[at(t.var)];
  return v;
}

int MiblpProblem::add_var(std::string name, VarKind kind, VarRole role, double lower, double upper) {
  vars.push_back({std::move(name), kind, role, lower, upper});
  return static_cast<int>(vars.size()) - 1;
}

int MiblpProblem::add_product(int left, int right, std::string name) {
  const Interval l{vars[at(left)].lower, vars[at(left)].upper};
  const Interval r{vars[at(right)].lower, vars[at(right)].upper};
  const Interval p = left == right ? detail::square(l) : l * r;
  const VarRole role = left == right ? (vars[at(left)].role == VarRole::VoltageImag ? VarRole::SquareImag
                                                                                    : VarRole::SquareReal)
                                     : VarRole::Product;
  const int s = add_var(std::move(name), VarKind::Continuous, role, p.lo, p.hi);
  bilinear.push_back({s, left, right});
  return s;
}

Box MiblpProblem::bounds() const {
  Box box;
  box.lower.reserve(vars.size());
  box.upper.reserve(vars.size());
  for (const Variable& v : vars) {
    box.lower.push_back(v.lower);
    box.upper.push_back(v.upper);
  }
  return box;
}

double MiblpProblem::objective_value(const std::vector<double>& point) const {
  double f = 0.0;
  for (const Term& t : objective) f += t.coef * point[at(t.var)];
  return f;
}

void MiblpProblem::validate() const {
  for (const Variable& v : vars) {
    if (!std::isfinite(v.lower) || !std::isfinite(v.upper))
      throw Error(ErrorKind::Degenerate, "variable " + v.name + " has no finite box");
    if (v.lower > v.upper) throw Error(ErrorKind::Infeasible, "variable " + v.name + " has an empty box");
  }
  const int n = num_vars();
  for (const BilinearTerm& b : bilinear) {
    if (b.product < 0 || b.product >= n || b.left < 0 || b.left >= n || b.right < 0 || b.right >= n)
      throw Error(ErrorKind::Degenerate, "bilinear entry references a missing variable");
  }
  for (const LinearConstraint& row : constraints) {
    for (const Term& t : row.terms) {
      if (t.var < 0 || t.var >= n || !std::isfinite(t.coef))
        throw Error(ErrorKind::Degenerate, "constraint " + row.tag + " has an invalid term");
    }
  }
}

double MiblpProblem::max_violation(const std::vector<double>& y, std::string* worst_name) const {
  double worst = 0.0;
  if (worst_name) worst_name->clear();
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const Variable& v = vars[j];
    track(std::max(v.lower - y[j], y[j] - v.upper), "bound " + v.name, worst, worst_name);
    if (v.kind != VarKind::Continuous) track(std::abs(y[j] - std::round(y[j])), "integrality " + v.name, worst, worst_name);
  }
  for (const LinearConstraint& row : constraints) {
    double a = 0.0;
    for (const Term& t : row.terms) a += t.coef * y[at(t.var)];
    track(std::max(row.lower - a, a - row.upper), row.tag, worst, worst_name);
  }
  for (const BilinearTerm& b : bilinear) {
    track(std::abs(y[at(b.product)] - y[at(b.left)] * y[at(b.right)]), "bilinear " + vars[at(b.product)].name, worst,
          worst_name);
  }
  for (const CurrentLimit& lim : current_limits) {
    const double re = lim.real.eval(y);
    const double im = lim.imag.eval(y);
    track(std::hypot(re, im) - lim.rating, "thermal", worst, worst_name);
  }
  return worst;
}

MiblpProblem lift_to_miblp(const MinlpProblem& minlp, const LiftOptions& options) {
  if (!(options.deviation > 0.0) || !std::isfinite(options.deviation))
    throw Error(ErrorKind::Degenerate, "voltage deviation box must be finite and positive");
  const FeederModel& m = *minlp.model;
  const int n = m.num_node_phases();
  MiblpProblem lp;
  lp.np_vars.resize(at(n));
  lp.np_load_p.assign(at(n), 0.0);
  lp.np_load_q.assign(at(n), 0.0);
  lp.charger_p = minlp.charger_p;
  lp.tan_phi = minlp.tan_phi;

  // Voltages and squared magnitudes.
  for (int k = 0; k < n; ++k) {
    const std::string label = np_label(m, k);
    const auto [nr, ni] = m.nominal_voltage(k);
    NodePhaseVars& v = lp.np_vars[at(k)];
    const double w = m.is_slack(k) ? 0.0 : options.deviation;
    v.vr = lp.add_var("vr[" + label + "]", VarKind::Continuous, VarRole::VoltageReal, nr - w, nr + w);
    v.vi = lp.add_var("vi[" + label + "]", VarKind::Continuous, VarRole::VoltageImag, ni - w, ni + w);
    v.sq_r = lp.add_product(v.vr, v.vr, "sqr[" + label + "]");
    v.sq_i = lp.add_product(v.vi, v.vi, "sqi[" + label + "]");
    const Node& node = m.nodes[at(m.node_phase(k).node)];
    Interval range = Interval{lp.vars[at(v.sq_r)].lower, lp.vars[at(v.sq_r)].upper} +
                     Interval{lp.vars[at(v.sq_i)].lower, lp.vars[at(v.sq_i)].upper};
    if (m.is_slack(k)) {
      const double vs = nr * nr + ni * ni;
      range = {vs, vs};
    } else {
      range = detail::intersect(range, {node.v_min * node.v_min, node.v_max * node.v_max});
    }
    if (range.empty(1e-12))
      throw Error(ErrorKind::Infeasible, "voltage band at " + label + " lies outside the deviation box");
    v.vsq = lp.add_var("vsq[" + label + "]", VarKind::Continuous, VarRole::VoltageSq, range.lo, std::max(range.lo, range.hi));
    lp.constraints.push_back({{{v.vsq, 1.0}, {v.sq_r, -1.0}, {v.sq_i, -1.0}}, 0.0, 0.0, "vsq " + label});
  }

  // Constant-power loads as surrogate admittances.
  std::vector<std::vector<Term>> kcl_r(at(n)), kcl_i(at(n));
  auto attach = [&](int k, int g, int b, const std::string& label) {
    const NodePhaseVars& v = lp.np_vars[at(k)];
    const int gvr = lp.add_product(g, v.vr, "g*vr[" + label + "]");
    const int bvi = lp.add_product(b, v.vi, "b*vi[" + label + "]");
    const int gvi = lp.add_product(g, v.vi, "g*vi[" + label + "]");
    const int bvr = lp.add_product(b, v.vr, "b*vr[" + label + "]");
    kcl_r[at(k)].push_back({gvr, 1.0});
    kcl_r[at(k)].push_back({bvi, -1.0});
    kcl_i[at(k)].push_back({gvi, 1.0});
    kcl_i[at(k)].push_back({bvr, 1.0});
    return std::pair{lp.add_product(g, v.vsq, "g*vsq[" + label + "]"), lp.add_product(b, v.vsq, "b*vsq[" + label + "]")};
  };

  for (int k = 0; k < n; ++k) {
    if (m.is_slack(k)) continue;
    const auto [p, q] = m.load_at(k);
    lp.np_load_p[at(k)] = p;
    lp.np_load_q[at(k)] = q;
    if (p == 0.0 && q == 0.0) continue;
    const std::string label = np_label(m, k);
    NodePhaseVars& v = lp.np_vars[at(k)];
    const Interval vsq{lp.vars[at(v.vsq)].lower, lp.vars[at(v.vsq)].upper};
    const Interval g = detail::divide({p, p}, vsq);
    const Interval b = detail::divide({-q, -q}, vsq);
    v.g_load = lp.add_var("gl[" + label + "]", VarKind::Continuous, VarRole::LoadG, g.lo, g.hi);
    v.b_load = lp.add_var("bl[" + label + "]", VarKind::Continuous, VarRole::LoadB, b.lo, b.hi);
    const auto [gvsq, bvsq] = attach(k, v.g_load, v.b_load, label);
    lp.constraints.push_back({{{gvsq, 1.0}}, p, p, "load_p " + label});
    lp.constraints.push_back({{{bvsq, 1.0}}, -q, -q, "load_q " + label});
  }

  // Charging stations.
  const double budget_scale = 1.0 / std::max(1.0, minlp.cost.budget);
  LinearConstraint demand_row{{}, static_cast<double>(minlp.demand), std::numeric_limits<double>::infinity(), "demand"};
  LinearConstraint budget_row{{}, -std::numeric_limits<double>::infinity(), minlp.cost.budget * budget_scale, "budget"};
  for (std::size_t c = 0; c < minlp.candidates.size(); ++c) {
    const Candidate& cand = minlp.candidates.entries[c];
    const int k = cand.np;
    const std::string label = np_label(m, k);
    NodePhaseVars& v = lp.np_vars[at(k)];
    v.candidate = static_cast<int>(c);
    CandidateVars cv;
    cv.np = k;
    const double p_max = minlp.charger_p * cand.z_max;
    const double vsq_lo = lp.vars[at(v.vsq)].lower;
    cv.x = lp.add_var("x[" + label + "]", VarKind::Binary, VarRole::Site, 0.0, 1.0);
    cv.z = lp.add_var("z[" + label + "]", VarKind::Integer, VarRole::Chargers, 0.0, cand.z_max);
    cv.p = lp.add_var("pch[" + label + "]", VarKind::Continuous, VarRole::ChargerP, 0.0, p_max);
    cv.q = lp.add_var("qch[" + label + "]", VarKind::Continuous, VarRole::ChargerQ, 0.0, minlp.tan_phi * p_max);
    cv.g = lp.add_var("gch[" + label + "]", VarKind::Continuous, VarRole::ChargerG, 0.0, p_max / vsq_lo);
    cv.b = lp.add_var("bch[" + label + "]", VarKind::Continuous, VarRole::ChargerB, -minlp.tan_phi * p_max / vsq_lo, 0.0);
    const auto [gvsq, bvsq] = attach(k, cv.g, cv.b, label);
    lp.constraints.push_back({{{gvsq, 1.0}, {cv.p, -1.0}}, 0.0, 0.0, "charger_p " + label});
    lp.constraints.push_back({{{bvsq, 1.0}, {cv.q, 1.0}}, 0.0, 0.0, "charger_q " + label});
    lp.constraints.push_back({{{cv.p, 1.0}, {cv.z, -minlp.charger_p}}, 0.0, 0.0, "charger_rating " + label});
    lp.constraints.push_back({{{cv.q, 1.0}, {cv.p, -minlp.tan_phi}}, 0.0, 0.0, "charger_pf " + label});
    lp.constraints.push_back(
        {{{cv.z, 1.0}, {cv.x, -static_cast<double>(cand.z_max)}}, -std::numeric_limits<double>::infinity(), 0.0,
         "link_upper " + label});
    lp.constraints.push_back(
        {{{cv.x, static_cast<double>(cand.z_min)}, {cv.z, -1.0}}, -std::numeric_limits<double>::infinity(), 0.0,
         "link_lower " + label});
    demand_row.terms.push_back({cv.z, 1.0});
    budget_row.terms.push_back({cv.x, cand.land_cost * budget_scale});
    budget_row.terms.push_back({cv.z, minlp.cost.charger_cost * budget_scale});
    lp.objective.push_back({cv.z, cand.weight});
    lp.cand_vars.push_back(cv);
    lp.z_min.push_back(cand.z_min);
    lp.z_max.push_back(cand.z_max);
    lp.weights.push_back(cand.weight);
  }
  lp.constraints.push_back(std::move(demand_row));
  budget_row.terms = normalized(std::move(budget_row.terms));
  lp.constraints.push_back(std::move(budget_row));
  for (const CandidatePair& pr : minlp.separation) {
    lp.constraints.push_back({{{lp.cand_vars[at(pr.first)].x, 1.0}, {lp.cand_vars[at(pr.second)].x, 1.0}},
                              -std::numeric_limits<double>::infinity(),
                              1.0,
                              "separation " + minlp.candidates.entries[at(pr.first)].node + "/" +
                                  minlp.candidates.entries[at(pr.second)].node});
  }

  // Current balance with the line currents written in the voltages directly.
  const Admittance& y = minlp.admittance;
  for (int col = 0; col < n; ++col) {
    const NodePhaseVars& vc = lp.np_vars[at(col)];
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.g, col); it; ++it) {
      kcl_r[at(it.row())].push_back({vc.vr, it.value()});
      kcl_i[at(it.row())].push_back({vc.vi, it.value()});
    }
    for (Eigen::SparseMatrix<double>::InnerIterator it(y.b, col); it; ++it) {
      kcl_r[at(it.row())].push_back({vc.vi, -it.value()});
      kcl_i[at(it.row())].push_back({vc.vr, it.value()});
    }
  }
  for (int k = 0; k < n; ++k) {
    if (m.is_slack(k)) continue;
    const std::string label = np_label(m, k);
    lp.constraints.push_back({normalized(std::move(kcl_r[at(k)])), 0.0, 0.0, "kcl_r " + label});
    lp.constraints.push_back({normalized(std::move(kcl_i[at(k)])), 0.0, 0.0, "kcl_i " + label});
  }

  for (std::size_t t = 0; t < m.transformers.size(); ++t) {
    const Transformer& tx = m.transformers[t];
    for (std::size_t slot = 0; slot < tx.phases.size(); ++slot) {
      const NodePhaseVars& f = lp.np_vars[at(m.np_index(tx.from, tx.phases[slot]))];
      const NodePhaseVars& to = lp.np_vars[at(m.np_index(tx.to, tx.phases[slot]))];
      const auto [g, b] = transformer_admittance(tx, slot);
      CurrentLimit lim;
      lim.real.terms = {{f.vr, g}, {to.vr, -g}, {f.vi, -b}, {to.vi, b}};
      lim.imag.terms = {{f.vi, g}, {to.vi, -g}, {f.vr, b}, {to.vr, -b}};
      lim.rating = tx.i_rated;
      lim.transformer = static_cast<int>(t);
      lim.phase = tx.phases[slot];
      lp.current_limits.push_back(std::move(lim));
    }
  }

  lp.validate();
  return lp;
}

std::vector<double> lift_point(const MiblpProblem& lp, const MinlpProblem& minlp, const MinlpPoint& pt) {
  std::vector<double> y(lp.vars.size(), 0.0);
  for (std::size_t k = 0; k < lp.np_vars.size(); ++k) {
    const NodePhaseVars& v = lp.np_vars[k];
    y[at(v.vr)] = pt.v_real[k];
    y[at(v.vi)] = pt.v_imag[k];
    y[at(v.vsq)] = pt.v_real[k] * pt.v_real[k] + pt.v_imag[k] * pt.v_imag[k];
    if (v.g_load >= 0) {
      y[at(v.g_load)] = pt.g_load[k];
      y[at(v.b_load)] = pt.b_load[k];
    }
  }
  for (std::size_t c = 0; c < lp.cand_vars.size(); ++c) {
    const CandidateVars& cv = lp.cand_vars[c];
    const int k = minlp.candidates.entries[c].np;
    y[at(cv.x)] = pt.x[c];
    y[at(cv.z)] = pt.z[c];
    y[at(cv.p)] = pt.p_ch[c];
    y[at(cv.q)] = pt.q_ch[c];
    y[at(cv.g)] = pt.g_ch[at(k)];
    y[at(cv.b)] = pt.b_ch[at(k)];
  }
  for (const BilinearTerm& b : lp.bilinear) y[at(b.product)] = y[at(b.left)] * y[at(b.right)];
  return y;
}

MinlpPoint project_point(const MiblpProblem& lp, const MinlpProblem& minlp, const std::vector<double>& y) {
  const std::size_t n = lp.np_vars.size();
  MinlpPoint pt;
  pt.v_real.resize(n);
  pt.v_imag.resize(n);
  pt.g_load.assign(n, 0.0);
  pt.b_load.assign(n, 0.0);
  pt.g_ch.assign(n, 0.0);
  pt.b_ch.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const NodePhaseVars& v = lp.np_vars[k];
    pt.v_real[k] = y[at(v.vr)];
    pt.v_imag[k] = y[at(v.vi)];
    if (v.g_load >= 0) {
      pt.g_load[k] = y[at(v.g_load)];
      pt.b_load[k] = y[at(v.b_load)];
    }
  }
  for (std::size_t c = 0; c < lp.cand_vars.size(); ++c) {
    const CandidateVars& cv = lp.cand_vars[c];
    const int k = minlp.candidates.entries[c].np;
    pt.x.push_back(static_cast<int>(std::lround(y[at(cv.x)])));
    pt.z.push_back(static_cast<int>(std::lround(y[at(cv.z)])));
    pt.p_ch.push_back(y[at(cv.p)]);
    pt.q_ch.push_back(y[at(cv.q)]);
    pt.g_ch[at(k)] = y[at(cv.g)];
    pt.b_ch[at(k)] = y[at(cv.b)];
  }
  return pt;
}

// ---------------------------------------------------------------------------

std::vector<double> DecomposedProblem::to_decomposed(const std::vector<double>& y) const {
  std::vector<double> d(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) d[j] = filtered[j] ? y[j] - nominal[j] : y[j];
  for (const BilinearTerm& b : problem.bilinear) d[at(b.product)] = d[at(b.left)] * d[at(b.right)];
  return d;
}

std::vector<double> DecomposedProblem::to_original(const std::vector<double>& d) const {
  std::vector<double> y(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) y[j] = original_of[j].eval(d);
  return y;
}

DecomposedProblem filter_and_decompose(const MiblpProblem& lifted, const SlackSource& slack) {
  (void)slack;  // nominal values are carried by the voltage boxes: the slack is fixed at nominal
  DecomposedProblem dp;
  const std::size_t nv = lifted.vars.size();
  dp.problem = lifted;
  dp.filtered.assign(nv, 0);
  dp.nominal.assign(nv, 0.0);
  dp.original_of.resize(nv);

  for (const NodePhaseVars& v : lifted.np_vars) {
    for (int j : {v.vr, v.vi}) {
      dp.filtered[at(j)] = 1;
      dp.filtered_vars.push_back(j);
      const Variable& var = lifted.vars[at(j)];
      dp.nominal[at(j)] = 0.5 * (var.lower + var.upper);
    }
  }
  std::sort(dp.filtered_vars.begin(), dp.filtered_vars.end());

  for (std::size_t j = 0; j < nv; ++j) {
    if (dp.filtered[j]) {
      dp.original_of[j] = {{{static_cast<int>(j), 1.0}}, dp.nominal[j]};
    } else {
      dp.original_of[j] = {{{static_cast<int>(j), 1.0}}, 0.0};
    }
  }
  // Products of filtered factors: A B = (A0 + dA)(B0 + dB) = dA dB + B0 dA + A0 dB + A0 B0.
  for (const BilinearTerm& b : lifted.bilinear) {
    const bool fl = dp.filtered[at(b.left)];
    const bool fr = dp.filtered[at(b.right)];
    if (!fl && !fr) continue;
    AffineExpr e;
    e.terms.push_back({b.product, 1.0});
    const double a0 = fl ? dp.nominal[at(b.left)] : 0.0;
    const double b0 = fr ? dp.nominal[at(b.right)] : 0.0;
    if (fr) e.terms.push_back({b.left, b0});
    if (fl) e.terms.push_back({b.right, a0});
    e.terms = normalized(std::move(e.terms));
    e.constant = a0 * b0;
    dp.original_of[at(b.product)] = std::move(e);
  }

  auto rewrite = [&](const std::vector<Term>& terms, double& constant) {
    std::vector<Term> out;
    for (const Term& t : terms) {
      const AffineExpr& e = dp.original_of[at(t.var)];
      for (const Term& s : e.terms) out.push_back({s.var, t.coef * s.coef});
      constant += t.coef * e.constant;
    }
    return normalized(std::move(out));
  };

  for (LinearConstraint& row : dp.problem.constraints) {
    double c = 0.0;
    row.terms = rewrite(row.terms, c);
    row.lower -= c;
    row.upper -= c;
  }
  for (CurrentLimit& lim : dp.problem.current_limits) {
    lim.real.terms = rewrite(lim.real.terms, lim.real.constant);
    lim.imag.terms = rewrite(lim.imag.terms, lim.imag.constant);
  }
  {
    double c = 0.0;
    dp.problem.objective = rewrite(dp.problem.objective, c);
  }

  for (int j : dp.filtered_vars) {
    Variable& var = dp.problem.vars[at(j)];
    var.lower -= dp.nominal[at(j)];
    var.upper -= dp.nominal[at(j)];
  }
  for (const BilinearTerm& b : dp.problem.bilinear) {
    if (!dp.filtered[at(b.left)] && !dp.filtered[at(b.right)]) continue;
    const Variable& l = dp.problem.vars[at(b.left)];
    const Variable& r = dp.problem.vars[at(b.right)];
    const Interval p = b.square() ? detail::square({l.lower, l.upper}) : Interval{l.lower, l.upper} * Interval{r.lower, r.upper};
    dp.problem.vars[at(b.product)].lower = p.lo;
    dp.problem.vars[at(b.product)].upper = p.hi;
  }
  return dp;
}

bool propagate_bounds(const DecomposedProblem& dp, Box& box) {
  const MiblpProblem& pb = dp.problem;
  auto get = [&](int j) { return Interval{box.lower[at(j)], box.upper[at(j)]}; };
  bool ok = true;
  auto set = [&](int j, Interval iv) {
    const Interval r = detail::intersect(get(j), iv);
    if (r.lo > r.hi) {
      if (r.lo - r.hi > 1e-9 * (1.0 + std::abs(r.lo))) ok = false;
      const double mid = 0.5 * (r.lo + r.hi);
      box.lower[at(j)] = box.upper[at(j)] = mid;
      return;
    }
    box.lower[at(j)] = r.lo;
    box.upper[at(j)] = r.hi;
  };

  for (std::size_t k = 0; k < pb.np_vars.size(); ++k) {
    const NodePhaseVars& v = pb.np_vars[k];
    const Interval vr = get(v.vr) + dp.nominal[at(v.vr)];
    const Interval vi = get(v.vi) + dp.nominal[at(v.vi)];
    set(v.vsq, detail::square(vr) + detail::square(vi));
    const Interval vsq = get(v.vsq);
    if (vsq.lo <= 0.0) continue;
    if (v.g_load >= 0) {
      const double p = pb.np_load_p[k], q = pb.np_load_q[k];
      set(v.g_load, detail::divide({p, p}, vsq));
      set(v.b_load, detail::divide({-q, -q}, vsq));
    }
  }

  for (std::size_t c = 0; c < pb.cand_vars.size(); ++c) {
    const CandidateVars& cv = pb.cand_vars[c];
    const int zmin = pb.z_min[c], zmax = pb.z_max[c];
    Interval x = get(cv.x);
    x = {std::ceil(x.lo - 1e-9), std::floor(x.hi + 1e-9)};
    set(cv.x, x);
    x = get(cv.x);
    if (x.hi < 0.5) set(cv.z, {0.0, 0.0});
    if (x.lo > 0.5) set(cv.z, {static_cast<double>(zmin), static_cast<double>(zmax)});
    Interval z = get(cv.z);
    z = {std::ceil(z.lo - 1e-9), std::floor(z.hi + 1e-9)};
    set(cv.z, z);
    z = get(cv.z);
    if (z.lo >= 0.5) set(cv.x, {1.0, 1.0});
    if (z.hi < zmin - 0.5) set(cv.x, {0.0, 0.0});
    if (z.hi < 0.5) set(cv.x, {0.0, 0.0});
    set(cv.p, pb.charger_p * get(cv.z));
    set(cv.q, pb.tan_phi * get(cv.p));
    const Interval vsq = get(pb.np_vars[at(cv.np)].vsq);
    if (vsq.lo > 0.0) {
      set(cv.g, detail::divide(get(cv.p), vsq));
      set(cv.b, detail::divide(-1.0 * get(cv.q), vsq));
    }
  }

  for (const BilinearTerm& b : pb.bilinear) {
    set(b.product, b.square() ? detail::square(get(b.left)) : get(b.left) * get(b.right));
  }
  return ok;
}

// ---------------------------------------------------------------------------

std::vector<EnvelopeCut> mccormick_envelope(bool square, double l1, double u1, double l2, double u2) {
  if (!(l1 <= u1) || !(l2 <= u2) || !std::isfinite(l1) || !std::isfinite(u1) || !std::isfinite(l2) || !std::isfinite(u2))
    throw Error(ErrorKind::Degenerate, "McCormick envelope needs finite, non-empty boxes");
  if (square) {
    const double m = 0.5 * (l1 + u1);
    return {
        {-1.0, 2.0 * u1, 0.0, u1 * u1},
        {-1.0, 2.0 * l1, 0.0, l1 * l1},
        {1.0, -(l1 + u1), 0.0, -l1 * u1},
        {-1.0, 2.0 * m, 0.0, m * m},
    };
  }
  return {
      {-1.0, u2, u1, u1 * u2},
      {-1.0, l2, l1, l1 * l2},
      {1.0, -l2, -u1, -u1 * l2},
      {1.0, -u2, -l1, -l1 * u2},
  };
}

}  // namespace gridsite
