#include "gridsite/config.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gridsite/demand.hpp"
#include "gridsite/error.hpp"

namespace gridsite {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Schema, where + ": field '" + key + "' has the wrong type");
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& into, const std::filesystem::path& base) {
  std::string text;
  read(obj, key, text, "paths");
  if (text.empty()) return;
  std::filesystem::path p(text);
  into = p.is_absolute() || base.empty() ? p : base / p;
}

std::string path_text(const std::filesystem::path& p) { return p.empty() ? std::string() : p.string(); }

}  // namespace

void RunConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Schema, "alpha must lie in [0, 1]");
  if (budget_ports < 0) throw Error(ErrorKind::Schema, "budget_ports must be non-negative");
  if (demand && *demand < 0) throw Error(ErrorKind::Schema, "demand must be non-negative");
  if (!(gamma >= 0.0)) throw Error(ErrorKind::Schema, "gamma must be non-negative");
  if (!(delta_s >= 0.0)) throw Error(ErrorKind::Schema, "delta_s must be non-negative");
  if (!std::isfinite(headroom_threshold)) throw Error(ErrorKind::Schema, "headroom_threshold must be finite");
  cost.validate();
  const BnbConfig& b = solver.bnb;
  if (!(b.gap_tol >= 0.0)) throw Error(ErrorKind::Schema, "gap_tol must be non-negative");
  if (b.node_limit < 1) throw Error(ErrorKind::Schema, "node_limit must be positive");
  if (!(b.time_limit > 0.0)) throw Error(ErrorKind::Schema, "time_limit must be positive");
  if (!(solver.sbt.epsilon > 0.0)) throw Error(ErrorKind::Schema, "epsilon must be positive");
  if (solver.sbt.max_sweeps < 1) throw Error(ErrorKind::Schema, "max_sweeps must be positive");
  if (workers < 1) throw Error(ErrorKind::Schema, "workers must be at least 1");
}

PresolveMode parse_presolve(const std::string& text) {
  if (text == "sbt") return PresolveMode::Sbt;
  if (text == "none") return PresolveMode::None;
  throw Error(ErrorKind::Schema, "presolve must be 'sbt' or 'none', got '" + text + "'");
}

IntegralityMode parse_integrality(const std::string& text) {
  if (text == "relaxed") return IntegralityMode::Relaxed;
  if (text == "exact") return IntegralityMode::Exact;
  throw Error(ErrorKind::Schema, "integrality must be 'relaxed' or 'exact', got '" + text + "'");
}

std::string to_string(PresolveMode mode) { return mode == PresolveMode::Sbt ? "sbt" : "none"; }
std::string to_string(IntegralityMode mode) { return mode == IntegralityMode::Exact ? "exact" : "relaxed"; }

RunConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorKind::Schema, "config must be a JSON object");
  RunConfig c;
  read(doc, "alpha", c.alpha, "config");
  read(doc, "budget_ports", c.budget_ports, "config");
  if (doc.contains("demand") && !doc.at("demand").is_null()) {
    int d = 0;
    read(doc, "demand", d, "config");
    c.demand = d;
  }
  read(doc, "headroom_threshold", c.headroom_threshold, "config");
  read(doc, "seed", c.seed, "config");
  if (doc.contains("gi")) {
    const json& g = doc.at("gi");
    read(g, "gamma", c.gamma, "gi");
    read(g, "delta_s", c.delta_s, "gi");
  }
  if (doc.contains("cost")) {
    const json& k = doc.at("cost");
    read(k, "charger_kw", c.cost.charger_kw, "cost");
    read(k, "pf", c.cost.pf, "cost");
    read(k, "charger_cost", c.cost.charger_cost, "cost");
    read(k, "budget", c.cost.budget, "cost");
    read(k, "service_radius_m", c.cost.service_radius_m, "cost");
  }
  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    std::string presolve = to_string(c.solver.presolve), integrality = to_string(c.solver.sbt.integrality);
    read(s, "presolve", presolve, "solver");
    read(s, "integrality", integrality, "solver");
    c.solver.presolve = parse_presolve(presolve);
    c.solver.sbt.integrality = parse_integrality(integrality);
    read(s, "gap_tol", c.solver.bnb.gap_tol, "solver");
    read(s, "epsilon", c.solver.sbt.epsilon, "solver");
    read(s, "max_sweeps", c.solver.sbt.max_sweeps, "solver");
    read(s, "node_limit", c.solver.bnb.node_limit, "solver");
    read(s, "time_limit", c.solver.bnb.time_limit, "solver");
    read(s, "workers", c.workers, "solver");
  }
  if (doc.contains("paths")) {
    const json& p = doc.at("paths");
    read_path(p, "feeder", c.feeder, base_dir);
    read_path(p, "blocks", c.blocks, base_dir);
    read_path(p, "sites", c.sites, base_dir);
    read_path(p, "instance", c.instance, base_dir);
    read_path(p, "out", c.out, base_dir);
  }
  c.solver.sbt.threads = c.workers;
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json doc;
  doc["alpha"] = c.alpha;
  doc["budget_ports"] = c.budget_ports;
  doc["demand"] = c.demand ? json(*c.demand) : json(nullptr);
  doc["headroom_threshold"] = c.headroom_threshold;
  doc["seed"] = c.seed;
  doc["gi"] = {{"gamma", c.gamma}, {"delta_s", c.delta_s}};
  doc["cost"] = {{"charger_kw", c.cost.charger_kw},
                 {"pf", c.cost.pf},
                 {"charger_cost", c.cost.charger_cost},
                 {"budget", c.cost.budget},
                 {"service_radius_m", c.cost.service_radius_m}};
  doc["solver"] = {{"presolve", to_string(c.solver.presolve)},
                   {"integrality", to_string(c.solver.sbt.integrality)},
                   {"gap_tol", c.solver.bnb.gap_tol},
                   {"epsilon", c.solver.sbt.epsilon},
                   {"max_sweeps", c.solver.sbt.max_sweeps},
                   {"node_limit", c.solver.bnb.node_limit},
                   {"time_limit", c.solver.bnb.time_limit},
                   {"workers", c.workers}};
  doc["paths"] = {{"feeder", path_text(c.feeder)},
                  {"blocks", path_text(c.blocks)},
                  {"sites", path_text(c.sites)},
                  {"instance", path_text(c.instance)},
                  {"out", path_text(c.out)}};
  return doc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

SitingInstance instance_from_config(const RunConfig& c, bool need_demand) {
  if (!c.instance.empty()) {
    SitingInstance inst = load_instance(c.instance);
    if (c.demand) inst.demand = *c.demand;
    return inst;
  }
  if (c.feeder.empty()) throw Error(ErrorKind::Schema, "no feeder or instance file given");
  SitingInstance inst;
  inst.feeder = load_feeder(c.feeder);
  inst.name = c.feeder.stem().string();
  if (!c.sites.empty()) inst.sites = load_sites_csv(c.sites);
  inst.cost = c.cost;
  inst.headroom_threshold = c.headroom_threshold;
  inst.gamma = c.gamma;
  inst.delta_s = c.delta_s;
  if (c.demand) {
    inst.demand = *c.demand;
  } else if (!need_demand && c.blocks.empty()) {
    inst.demand = 0;
  } else {
    if (c.blocks.empty()) throw Error(ErrorKind::Schema, "demand needs either a value or a blocks file");
    const auto blocks = load_blocks_csv(c.blocks);
    inst.demand = feeder_demand(allocate_ports(blocks, c.alpha, c.budget_ports), blocks);
  }
  return inst;
}

}  // namespace gridsite
