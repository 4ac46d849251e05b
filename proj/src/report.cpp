#include "gridsite/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gridsite/error.hpp"

namespace gridsite {

using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::size_t> by_weight(const CandidateSet& candidates) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates.entries[a].weight > candidates.entries[b].weight;
  });
  return order;
}

const char* kind_name(VarKind k) {
  switch (k) {
    case VarKind::Continuous:
      return "continuous";
    case VarKind::Binary:
      return "binary";
    case VarKind::Integer:
      return "integer";
  }
  return "?";
}

json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string candidates_csv(const CandidateSet& candidates) {
  std::string out = "node,phase,f_v,f_c,f_g,weight\n";
  for (std::size_t i : by_weight(candidates)) {
    const Candidate& c = candidates.entries[i];
    out += c.node + ',' + phase_letter(c.phase) + ',' + num(c.f_v) + ',' + num(c.f_c) + ',' + num(c.f_g) + ',' +
           num(c.weight) + '\n';
  }
  return out;
}

json candidates_geojson(const CandidateSet& candidates, const std::vector<int>& x, const std::vector<int>& z) {
  json features = json::array();
  for (std::size_t i : by_weight(candidates)) {
    const Candidate& c = candidates.entries[i];
    const bool selected = i < x.size() && x[i] != 0;
    const int chargers = i < z.size() ? z[i] : 0;
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {c.longitude, c.latitude}}}},
                        {"properties",
                         {{"node", c.node},
                          {"phase", std::string(1, phase_letter(c.phase))},
                          {"weight", c.weight},
                          {"selected", selected},
                          {"chargers", chargers}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

json problem_dump(const MiblpProblem& p) {
  json vars = json::array();
  for (const Variable& v : p.vars)
    vars.push_back({{"name", v.name}, {"kind", kind_name(v.kind)}, {"lower", v.lower}, {"upper", v.upper}});
  json triplets = json::array(), rows = json::array();
  for (std::size_t r = 0; r < p.constraints.size(); ++r) {
    const LinearConstraint& c = p.constraints[r];
    rows.push_back({{"tag", c.tag}, {"lower", bound_json(c.lower)}, {"upper", bound_json(c.upper)}});
    for (const Term& t : c.terms) triplets.push_back({r, t.var, t.coef});
  }
  json bilinear = json::array();
  for (const BilinearTerm& b : p.bilinear) bilinear.push_back({b.product, b.left, b.right});
  auto affine = [](const AffineExpr& e) {
    json terms = json::array();
    for (const Term& t : e.terms) terms.push_back({t.var, t.coef});
    return json{{"terms", terms}, {"constant", e.constant}};
  };
  json limits = json::array();
  for (const CurrentLimit& l : p.current_limits)
    limits.push_back({{"transformer", l.transformer},
                      {"phase", std::string(1, phase_letter(l.phase))},
                      {"rating", l.rating},
                      {"real", affine(l.real)},
                      {"imag", affine(l.imag)}});
  json objective = json::array();
  for (const Term& t : p.objective) objective.push_back({t.var, t.coef});
  return {{"sense", "maximize"},
          {"variables", vars},
          {"rows", rows},
          {"triplets", triplets},
          {"bilinear", bilinear},
          {"current_limits", limits},
          {"objective", objective}};
}

std::vector<SitePlacement> placement_from_json(const json& solution) {
  std::vector<SitePlacement> out;
  if (!solution.is_object()) throw Error(ErrorKind::Schema, "solution must be a JSON object");
  if (!solution.contains("sites") || solution.at("sites").is_null()) return out;
  const json& sites = solution.at("sites");
  if (!sites.is_array()) throw Error(ErrorKind::Schema, "solution 'sites' must be an array");
  for (const json& s : sites) {
    try {
      SitePlacement p;
      p.node = s.at("node").get<std::string>();
      p.phase = parse_phase(s.at("phase").get<std::string>());
      p.chargers = s.at("chargers").get<int>();
      out.push_back(p);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Schema, std::string("malformed site entry: ") + e.what());
    }
  }
  return out;
}

void placement_vectors(const MinlpProblem& minlp, const std::vector<SitePlacement>& sites, std::vector<int>& x,
                       std::vector<int>& z) {
  const std::size_t nc = minlp.candidates.size();
  x.assign(nc, 0);
  z.assign(nc, 0);
  for (const SitePlacement& s : sites) {
    std::size_t c = 0;
    while (c < nc && !(minlp.candidates.entries[c].node == s.node && minlp.candidates.entries[c].phase == s.phase))
      ++c;
    if (c == nc)
      throw Error(ErrorKind::Reference,
                  "site " + s.node + "/" + std::string(1, phase_letter(s.phase)) + " is not a candidate");
    if (x[c] != 0)
      throw Error(ErrorKind::Schema, "site " + s.node + "/" + std::string(1, phase_letter(s.phase)) + " listed twice");
    x[c] = 1;
    z[c] = s.chargers;
  }
}

std::vector<BenchRow> bench_instance(const SitingInstance& inst, const SolverConfig& config, int workers) {
  std::vector<BenchRow> rows;
  const std::pair<const char*, PresolveMode> approaches[] = {{"MIBLP", PresolveMode::None},
                                                             {"S-MIBLP", PresolveMode::Sbt}};
  std::optional<PreparedInstance> prep;
  std::optional<MinlpProblem> minlp;
  std::string setup_error;
  try {
    prep = prepare_instance(inst, workers);
    minlp = instance_problem(inst, *prep);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  for (const auto& [name, mode] : approaches) {
    BenchRow row;
    row.instance = inst.name;
    row.approach = name;
    if (!minlp) {
      row.status = "error";
      row.error = setup_error;
      rows.push_back(row);
      continue;
    }
    try {
      SolverConfig cfg = config;
      cfg.presolve = mode;
      cfg.sbt.threads = workers;
      const PlacementSolution sol = solve_placement(*minlp, cfg);
      row.status = to_string(sol.status);
      row.bound = sol.bound;
      row.gap = sol.gap;
      row.nodes = sol.nodes;
      row.lp_solves = sol.lp_solves;
      row.seconds = sol.seconds;
      row.limit = sol.status == SolveStatus::LimitWithIncumbent || sol.status == SolveStatus::LimitWithoutIncumbent;
      if (sol.sbt) row.sbt_sweeps = static_cast<int>(sol.sbt->sweeps.size());
      if (sol.best) {
        row.objective = sol.best->objective;
        row.verified = sol.verification.ok;
        for (std::size_t c = 0; c < sol.best->x.size(); ++c) {
          row.stations += sol.best->x[c];
          row.chargers += sol.best->z[c];
        }
      }
    } catch (const std::exception& e) {
      row.status = "error";
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out =
      "case,approach,objective,time_s,sbnb_nodes,gap_pct,total_evcs,total_chargers,status,limit,verified,bound,"
      "lp_solves,sbt_sweeps,error\n";
  for (const BenchRow& r : rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    const bool solved = r.status != "error";
    out += r.instance + ',' + r.approach + ',' + (r.objective ? num(*r.objective) : "") + ',' + fixed(r.seconds, 3) +
           ',' + std::to_string(r.nodes) + ',' + (solved && std::isfinite(r.gap) ? fixed(100.0 * r.gap, 4) : "") +
           ',' + std::to_string(r.stations) + ',' + std::to_string(r.chargers) + ',' + r.status + ',' +
           (r.limit ? "1" : "0") + ',' + (r.verified ? "1" : "0") + ',' + (solved ? num(r.bound) : "") + ',' +
           std::to_string(r.lp_solves) + ',' + std::to_string(r.sbt_sweeps) + ',' + error + '\n';
  }
  return out;
}

NodeRatioSummary node_ratios(const std::vector<BenchRow>& rows) {
  NodeRatioSummary s;
  for (const BenchRow& raw : rows) {
    if (raw.approach != "MIBLP" || raw.status != "optimal") continue;
    for (const BenchRow& pre : rows) {
      if (pre.approach != "S-MIBLP" || pre.instance != raw.instance || pre.status != "optimal") continue;
      // A presolve that proves optimality explores no node at all.
      const double ratio = static_cast<double>(pre.nodes) / static_cast<double>(std::max(1L, raw.nodes));
      s.ratios.push_back(ratio);
      s.best_reduction = std::max(s.best_reduction, 1.0 - ratio);
    }
  }
  if (!s.ratios.empty()) {
    std::vector<double> v = s.ratios;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace gridsite
