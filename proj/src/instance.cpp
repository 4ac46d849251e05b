#include "gridsite/instance.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridsite/error.hpp"
#include "gridsite/solver.hpp"

namespace gridsite {

using nlohmann::json;

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

template <typename T>
T get(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw Error(ErrorKind::Schema, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Schema, where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

}  // namespace

SitingInstance instance_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::Schema, "instance must be a JSON object");
  SitingInstance inst;
  inst.name = get_or<std::string>(doc, "name", "", "instance");
  if (!doc.contains("feeder")) throw Error(ErrorKind::Schema, "instance: missing 'feeder'");
  inst.feeder = feeder_from_json(doc.at("feeder"));
  inst.demand = get<int>(doc, "demand", "instance");
  if (inst.demand < 0) throw Error(ErrorKind::Schema, "instance: demand must be non-negative");
  inst.headroom_threshold = get_or<double>(doc, "headroom_threshold", 0.0, "instance");
  inst.gamma = get_or<double>(doc, "gamma", 10.0, "instance");
  inst.delta_s = get_or<double>(doc, "delta_s", 0.0, "instance");
  if (inst.delta_s < 0.0) throw Error(ErrorKind::Schema, "instance: delta_s must be non-negative");
  if (doc.contains("cost")) {
    const json& c = doc.at("cost");
    inst.cost.charger_kw = get_or<double>(c, "charger_kw", inst.cost.charger_kw, "cost");
    inst.cost.pf = get_or<double>(c, "pf", inst.cost.pf, "cost");
    inst.cost.charger_cost = get_or<double>(c, "charger_cost", inst.cost.charger_cost, "cost");
    inst.cost.budget = get<double>(c, "budget", "cost");
    inst.cost.service_radius_m = get_or<double>(c, "service_radius_m", inst.cost.service_radius_m, "cost");
  }
  inst.cost.validate();
  if (doc.contains("sites")) {
    inst.sites.listed_only = true;
    for (const json& s : doc.at("sites")) {
      SiteSpec spec;
      spec.node = get<std::string>(s, "node", "site");
      spec.phase = parse_phase(get<std::string>(s, "phase", "site " + spec.node));
      spec.land_cost = get_or<double>(s, "land_cost", 0.0, "site " + spec.node);
      spec.z_min = get_or<int>(s, "z_min", 1, "site " + spec.node);
      spec.z_max = get<int>(s, "z_max", "site " + spec.node);
      if (spec.z_min < 0 || spec.z_max < spec.z_min)
        throw Error(ErrorKind::Schema, "site " + spec.node + " needs 0 <= z_min <= z_max");
      inst.sites.sites.push_back(std::move(spec));
    }
  }
  return inst;
}

json instance_to_json(const SitingInstance& inst) {
  json doc;
  doc["version"] = 1;
  doc["name"] = inst.name;
  doc["demand"] = inst.demand;
  doc["headroom_threshold"] = inst.headroom_threshold;
  doc["gamma"] = inst.gamma;
  if (inst.delta_s > 0.0) doc["delta_s"] = inst.delta_s;
  doc["cost"] = {{"charger_kw", inst.cost.charger_kw},
                 {"pf", inst.cost.pf},
                 {"charger_cost", inst.cost.charger_cost},
                 {"budget", inst.cost.budget},
                 {"service_radius_m", inst.cost.service_radius_m}};
  json sites = json::array();
  for (const SiteSpec& s : inst.sites.sites) {
    sites.push_back({{"node", s.node},
                     {"phase", std::string(1, phase_letter(s.phase))},
                     {"land_cost", s.land_cost},
                     {"z_min", s.z_min},
                     {"z_max", s.z_max}});
  }
  doc["sites"] = sites;
  doc["feeder"] = feeder_to_json(inst.feeder);
  return doc;
}

SitingInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
  SitingInstance inst = instance_from_json(doc);
  if (inst.name.empty()) inst.name = path.stem().string();
  return inst;
}

void save_instance(const SitingInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << instance_to_json(inst).dump(2) << '\n';
}

GiConfig instance_gi(const SitingInstance& inst) {
  GiConfig gi = GiConfig::from_charger(inst.cost.charger_kw, inst.cost.pf, inst.feeder.base.s_base_kva, inst.gamma);
  if (inst.delta_s > 0.0) gi.delta_s = inst.delta_s;
  return gi;
}

PreparedInstance prepare_instance(const SitingInstance& inst, int workers) {
  PreparedInstance prep;
  const Admittance y = assemble_admittance(inst.feeder);
  prep.base_state = solve_powerflow(inst.feeder, y, {});
  if (!prep.base_state.converged())
    throw Error(ErrorKind::Numerical, "base power flow " + to_string(prep.base_state.status));
  CandidateSelection sel = select_candidates(inst.feeder, prep.base_state, inst.headroom_threshold, inst.sites);
  if (sel.status == SelectionStatus::Empty) throw Error(ErrorKind::Infeasible, "no candidate site qualifies");
  prioritize(inst.feeder, y, prep.base_state, sel.set, instance_gi(inst), workers);
  prep.candidates = sel.set.usable_only();
  prep.dropped = sel.set.size() - prep.candidates.size();
  if (prep.candidates.empty()) throw Error(ErrorKind::Infeasible, "every candidate perturbation diverged");
  return prep;
}

MinlpProblem instance_problem(const SitingInstance& inst, const PreparedInstance& prepared) {
  return build_minlp(inst.feeder, prepared.candidates, inst.demand, inst.cost);
}

// ---------------------------------------------------------------------------

namespace {

using Cplx = std::complex<double>;

// Series admittance block of a line with self impedance zs and mutual zm between its phases.
void line_admittance(Line& line, Cplx zs, Cplx zm) {
  const int n = static_cast<int>(line.phases.size());
  Eigen::MatrixXcd z(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) z(r, c) = r == c ? zs : zm;
  const Eigen::MatrixXcd yb = z.inverse();
  line.g.assign(at(n), std::vector<double>(at(n)));
  line.b.assign(at(n), std::vector<double>(at(n)));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      // Average the mirrored entries so the block is symmetric to the last bit.
      const Cplx v = 0.5 * (yb(r, c) + yb(c, r));
      line.g[at(r)][at(c)] = v.real();
      line.b[at(r)][at(c)] = v.imag();
    }
  }
}

void offset_position(double lat, double lon, double meters, double bearing, double& lat2, double& lon2) {
  const double d = meters / kEarthRadiusMeters;
  const double phi = lat * std::numbers::pi / 180.0;
  lat2 = lat + d * std::cos(bearing) * 180.0 / std::numbers::pi;
  lon2 = lon + d * std::sin(bearing) / std::cos(phi) * 180.0 / std::numbers::pi;
}

bool try_generate(std::mt19937& rng, const SuiteOptions& opt, SitingInstance& inst) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  FeederModel m;
  m.base = {100.0, 7.2};
  const int n_nodes = pick(opt.min_nodes, opt.max_nodes);
  const std::vector<Phase> three{Phase::A, Phase::B, Phase::C};
  m.nodes.push_back({"src", three, 47.6062, -122.3321, 0.95, 1.05});
  double lat, lon;
  offset_position(47.6062, -122.3321, uni(100, 300), uni(0, 2 * std::numbers::pi), lat, lon);
  m.nodes.push_back({"n1", three, lat, lon, 0.95, 1.05});
  Transformer sub;
  sub.id = "t1";
  sub.from = "src";
  sub.to = "n1";
  sub.phases = three;
  for (int k = 0; k < 3; ++k) {
    const Cplx y = 1.0 / Cplx(uni(0.004, 0.008), uni(0.015, 0.03));
    sub.g.push_back(y.real());
    sub.b.push_back(y.imag());
  }
  m.transformers.push_back(sub);

  for (int i = 2; i < n_nodes; ++i) {
    const int parent = pick(1, i - 1);
    const Node& par = m.nodes[at(parent)];
    std::vector<Phase> phases = par.phases;
    if (phases.size() == 3 && u01(rng) < 0.35) {
      if (u01(rng) < 0.5) {
        phases = {three[at(pick(0, 2))]};
      } else {
        const int drop = pick(0, 2);
        phases.clear();
        for (int k = 0; k < 3; ++k)
          if (k != drop) phases.push_back(three[at(k)]);
      }
    }
    offset_position(par.latitude, par.longitude, uni(100, 500), uni(0, 2 * std::numbers::pi), lat, lon);
    const std::string id = "n" + std::to_string(i);
    m.nodes.push_back({id, phases, lat, lon, 0.95, 1.05});
    if (u01(rng) < 0.2) {
      Transformer tx;
      tx.id = "t" + std::to_string(m.transformers.size() + 1);
      tx.from = par.id;
      tx.to = id;
      tx.phases = phases;
      for (std::size_t k = 0; k < phases.size(); ++k) {
        const Cplx y = 1.0 / Cplx(uni(0.006, 0.012), uni(0.02, 0.04));
        tx.g.push_back(y.real());
        tx.b.push_back(y.imag());
      }
      m.transformers.push_back(tx);
    } else {
      Line line;
      line.id = "l" + std::to_string(m.lines.size() + 1);
      line.from = par.id;
      line.to = id;
      line.phases = phases;
      const double r = uni(0.004, 0.012), x = uni(0.008, 0.025);
      line_admittance(line, {r, x}, {0.3 * r, 0.35 * x});
      m.lines.push_back(line);
    }
  }
  for (std::size_t i = 1; i < m.nodes.size(); ++i) {
    for (Phase p : m.nodes[i].phases) {
      if (u01(rng) < 0.8) {
        const double p_load = uni(0.03, 0.15);
        m.loads.push_back({m.nodes[i].id, p, p_load, p_load * uni(0.2, 0.4)});
      }
    }
  }
  m.slack.node = "src";
  m.slack.v_nominal = uni(1.0, 1.03);
  for (auto& tx : m.transformers) tx.i_rated = 1e3;  // provisional, reset from the base flow below
  m.finalize();

  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  if (!base.converged() || !check_limits(m, base, 0.0).ok()) return false;
  if (check_limits(m, base).worst_voltage_margin < 0.005) return false;
  for (auto& tx : m.transformers) {
    double worst = 0.0;
    for (std::size_t s = 0; s < tx.phases.size(); ++s) worst = std::max(worst, std::abs(transformer_current(m, tx, s, base)));
    tx.i_rated = worst + uni(0.08, 0.35);
  }

  // Sites on loaded node-phases.
  std::vector<int> loaded;
  for (int np = 0; np < m.num_node_phases(); ++np) {
    if (!m.is_slack(np) && m.load_at(np).first > 0.0) loaded.push_back(np);
  }
  if (static_cast<int>(loaded.size()) < opt.min_sites) return false;
  std::shuffle(loaded.begin(), loaded.end(), rng);
  const int n_sites = std::min<int>(static_cast<int>(loaded.size()), pick(opt.min_sites, opt.max_sites));

  SitingInstance out;
  out.feeder = m;
  out.sites.listed_only = true;
  for (int k = 0; k < n_sites; ++k) {
    const NodePhase& ref = m.node_phase(loaded[at(k)]);
    SiteSpec s;
    s.node = m.nodes[at(ref.node)].id;
    s.phase = ref.phase;
    s.land_cost = std::round(uni(1000, 5000));
    s.z_max = pick(1, opt.max_chargers);
    s.z_min = s.z_max >= 2 && u01(rng) < 0.25 ? 2 : 1;
    out.sites.sites.push_back(s);
  }
  out.cost.service_radius_m = u01(rng) < 0.5 ? 100.0 : 200.0;
  out.cost.budget = 1e9;
  out.demand = 0;

  // A random network-feasible placement fixes the demand and the budget.
  const PreparedInstance prep = prepare_instance(out);
  MinlpProblem probe = instance_problem(out, prep);
  const std::size_t nc = probe.candidates.size();
  for (int attempt = 0; attempt < 60; ++attempt) {
    std::vector<int> x(nc, 0), z(nc, 0);
    for (std::size_t c = 0; c < nc; ++c) {
      if (u01(rng) < 0.6) {
        x[c] = 1;
        z[c] = pick(probe.candidates.entries[c].z_min, probe.candidates.entries[c].z_max);
      }
    }
    int total = 0;
    double spend = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      total += z[c];
      spend += x[c] * probe.candidates.entries[c].land_cost + out.cost.charger_cost * z[c];
    }
    if (total == 0) continue;
    if (probe.discrete_violation(x, z) > 0.0) continue;
    if (!verify_ac_feasibility(probe, x, z).ok) continue;
    out.demand = pick(1, total);
    out.cost.budget = std::round(spend * uni(1.0, 1.5));
    return (inst = std::move(out)), true;
  }
  return false;
}

}  // namespace

std::vector<SitingInstance> generate_suite(const SuiteOptions& options) {
  if (options.count < 0 || options.min_nodes < 2 || options.max_nodes < options.min_nodes || options.min_sites < 1 ||
      options.max_sites < options.min_sites || options.max_chargers < 1)
    throw Error(ErrorKind::Schema, "invalid suite options");
  std::vector<SitingInstance> out;
  std::mt19937 rng(options.seed);
  int failures = 0;
  while (static_cast<int>(out.size()) < options.count) {
    SitingInstance inst;
    bool ok = false;
    try {
      ok = try_generate(rng, options, inst);
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) {
      if (++failures > 50 * std::max(1, options.count)) throw Error(ErrorKind::Numerical, "suite generation keeps failing");
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof name, "inst%02zu", out.size() + 1);
    inst.name = name;
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace gridsite
