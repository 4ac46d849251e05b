#include "gridsite/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

#include "gridsite/error.hpp"

namespace gridsite {

using nlohmann::json;

char phase_letter(Phase p) { return static_cast<char>('A' + static_cast<int>(p)); }

Phase parse_phase(std::string_view text) {
  if (text == "A" || text == "a") return Phase::A;
  if (text == "B" || text == "b") return Phase::B;
  if (text == "C" || text == "c") return Phase::C;
  throw Error(ErrorKind::Schema, "unknown phase '" + std::string(text) + "'");
}

double haversine_distance(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = lat1 * deg;
  const double phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg;
  const double dlambda = (lon2 - lon1) * deg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  a = std::clamp(a, 0.0, 1.0);
  const double c = 2.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
  return kEarthRadiusMeters * c;
}

bool Node::has_phase(Phase p) const {
  return std::find(phases.begin(), phases.end(), p) != phases.end();
}

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

bool finite(double v) { return std::isfinite(v); }

void check_phase_list(const std::vector<Phase>& phases, const std::string& what) {
  if (phases.empty() || phases.size() > 3) fail(ErrorKind::Schema, what + ": phase list must hold 1..3 phases");
  std::set<Phase> seen(phases.begin(), phases.end());
  if (seen.size() != phases.size()) fail(ErrorKind::Schema, what + ": duplicate phase");
}

}  // namespace

void FeederModel::finalize() {
  node_lookup_.clear();
  np_of_node_.assign(nodes.size(), {-1, -1, -1});
  np_list_.clear();

  if (nodes.empty()) fail(ErrorKind::Schema, "feeder has no nodes");
  if (!(base.s_base_kva > 0.0) || !(base.v_base_kv > 0.0)) fail(ErrorKind::Schema, "base values must be positive");

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (n.id.empty()) fail(ErrorKind::Schema, "node with empty id");
    if (!node_lookup_.emplace(n.id, static_cast<int>(i)).second) fail(ErrorKind::Schema, "duplicate node id " + n.id);
    check_phase_list(n.phases, "node " + n.id);
    if (!(n.v_min > 0.0) || !(n.v_min < n.v_max) || !finite(n.v_max))
      fail(ErrorKind::Schema, "node " + n.id + ": requires 0 < v_min < v_max");
    if (!(n.latitude >= -90.0 && n.latitude <= 90.0) || !(n.longitude >= -180.0 && n.longitude <= 180.0))
      fail(ErrorKind::Schema, "node " + n.id + ": coordinates out of range");
    for (Phase p : kAllPhases) {
      if (n.has_phase(p)) {
        np_of_node_[i][static_cast<int>(p)] = static_cast<int>(np_list_.size());
        np_list_.push_back({static_cast<int>(i), p});
      }
    }
  }

  auto resolve = [&](const std::string& id, const std::string& what) {
    auto it = node_lookup_.find(id);
    if (it == node_lookup_.end()) fail(ErrorKind::Reference, what + " references unknown node '" + id + "'");
    return it->second;
  };

  // Adjacency for the connectivity check and upstream-transformer search.
  struct Edge {
    int to;
    int transformer;
  };
  std::vector<std::vector<Edge>> adj(nodes.size());

  for (const Line& l : lines) {
    const std::string what = "line " + l.id;
    check_phase_list(l.phases, what);
    const int f = resolve(l.from, what);
    const int t = resolve(l.to, what);
    if (f == t) fail(ErrorKind::Topology, what + " is a self loop");
    const std::size_t n = l.phases.size();
    if (l.g.size() != n || l.b.size() != n) fail(ErrorKind::Schema, what + ": admittance block size mismatch");
    for (std::size_t r = 0; r < n; ++r) {
      if (l.g[r].size() != n || l.b[r].size() != n) fail(ErrorKind::Schema, what + ": admittance block size mismatch");
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        if (!finite(l.g[r][c]) || !finite(l.b[r][c])) fail(ErrorKind::Schema, what + ": non-finite admittance");
        const double tol = 1e-12 * (1.0 + std::abs(l.g[r][c]) + std::abs(l.b[r][c]));
        if (std::abs(l.g[r][c] - l.g[c][r]) > tol || std::abs(l.b[r][c] - l.b[c][r]) > tol)
          fail(ErrorKind::Schema, what + ": admittance block is not symmetric");
        norm += std::abs(l.g[r][c]) + std::abs(l.b[r][c]);
      }
    }
    if (norm == 0.0) fail(ErrorKind::Degenerate, what + ": zero admittance");
    for (Phase p : l.phases) {
      if (!nodes[static_cast<std::size_t>(f)].has_phase(p) || !nodes[static_cast<std::size_t>(t)].has_phase(p))
        fail(ErrorKind::Reference, what + ": phase " + phase_letter(p) + " absent at a terminal");
    }
    adj[static_cast<std::size_t>(f)].push_back({t, -1});
    adj[static_cast<std::size_t>(t)].push_back({f, -1});
  }

  for (std::size_t k = 0; k < transformers.size(); ++k) {
    const Transformer& tx = transformers[k];
    const std::string what = "transformer " + tx.id;
    check_phase_list(tx.phases, what);
    const int f = resolve(tx.from, what);
    const int t = resolve(tx.to, what);
    if (f == t) fail(ErrorKind::Topology, what + " is a self loop");
    if (tx.g.size() != tx.phases.size() || tx.b.size() != tx.phases.size())
      fail(ErrorKind::Schema, what + ": per-phase admittance size mismatch");
    for (std::size_t i = 0; i < tx.phases.size(); ++i) {
      if (!finite(tx.g[i]) || !finite(tx.b[i])) fail(ErrorKind::Schema, what + ": non-finite admittance");
      if (tx.g[i] == 0.0 && tx.b[i] == 0.0) fail(ErrorKind::Degenerate, what + ": zero admittance");
    }
    if (!(tx.i_rated > 0.0) || !finite(tx.i_rated)) fail(ErrorKind::Schema, what + ": i_rated must be positive");
    for (Phase p : tx.phases) {
      if (!nodes[static_cast<std::size_t>(f)].has_phase(p) || !nodes[static_cast<std::size_t>(t)].has_phase(p))
        fail(ErrorKind::Reference, what + ": phase " + phase_letter(p) + " absent at a terminal");
    }
    adj[static_cast<std::size_t>(f)].push_back({t, static_cast<int>(k)});
    adj[static_cast<std::size_t>(t)].push_back({f, static_cast<int>(k)});
  }

  if (slack.node.empty()) fail(ErrorKind::Topology, "feeder has no slack source");
  slack_node_ = resolve(slack.node, "slack");
  if (nodes[static_cast<std::size_t>(slack_node_)].phases.size() != 3)
    fail(ErrorKind::Topology, "slack node must carry all three phases");
  if (!(slack.v_nominal > 0.0)) fail(ErrorKind::Schema, "slack v_nominal must be positive");
  {
    constexpr double third = 2.0 * std::numbers::pi / 3.0;
    auto wrap = [](double a) { return std::remainder(a, 2.0 * std::numbers::pi); };
    const double ab = wrap(slack.angles[0] - slack.angles[1]);
    const double bc = wrap(slack.angles[1] - slack.angles[2]);
    const double ca = wrap(slack.angles[2] - slack.angles[0]);
    if (std::abs(std::abs(ab) - third) > 1e-9 || std::abs(std::abs(bc) - third) > 1e-9 ||
        std::abs(std::abs(ca) - third) > 1e-9)
      fail(ErrorKind::Schema, "slack phase angles must be mutually 2*pi/3 apart");
  }

  // Breadth-first search from the slack: connectivity and nearest upstream transformer.
  upstream_tx_.assign(nodes.size(), -1);
  std::vector<char> seen(nodes.size(), 0);
  std::queue<int> frontier;
  frontier.push(slack_node_);
  seen[static_cast<std::size_t>(slack_node_)] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (const Edge& e : adj[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(e.to)]) continue;
      seen[static_cast<std::size_t>(e.to)] = 1;
      upstream_tx_[static_cast<std::size_t>(e.to)] =
          e.transformer >= 0 ? e.transformer : upstream_tx_[static_cast<std::size_t>(u)];
      frontier.push(e.to);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!seen[i]) fail(ErrorKind::Topology, "node " + nodes[i].id + " is not connected to the slack");
  }

  load_p_.assign(np_list_.size(), 0.0);
  load_q_.assign(np_list_.size(), 0.0);
  for (const Load& ld : loads) {
    const int n = resolve(ld.node, "load");
    const int np = np_of_node_[static_cast<std::size_t>(n)][static_cast<int>(ld.phase)];
    if (np < 0) fail(ErrorKind::Reference, "load at node " + ld.node + " uses absent phase " + phase_letter(ld.phase));
    if (!finite(ld.p) || !finite(ld.q)) fail(ErrorKind::Schema, "load at node " + ld.node + " is not finite");
    if (ld.p < 0.0) fail(ErrorKind::Schema, "load at node " + ld.node + " has negative active power");
    load_p_[static_cast<std::size_t>(np)] += ld.p;
    load_q_[static_cast<std::size_t>(np)] += ld.q;
  }
}

int FeederModel::node_index(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  return it == node_lookup_.end() ? -1 : it->second;
}

int FeederModel::np_index(int node, Phase p) const {
  if (node < 0 || static_cast<std::size_t>(node) >= np_of_node_.size()) return -1;
  return np_of_node_[static_cast<std::size_t>(node)][static_cast<int>(p)];
}

int FeederModel::np_index(std::string_view node_id, Phase p) const { return np_index(node_index(node_id), p); }

std::pair<double, double> FeederModel::load_at(int np) const {
  return {load_p_[static_cast<std::size_t>(np)], load_q_[static_cast<std::size_t>(np)]};
}

std::pair<double, double> FeederModel::nominal_voltage(int np) const {
  const double theta = slack.angles[static_cast<int>(node_phase(np).phase)];
  return {slack.v_nominal * std::cos(theta), slack.v_nominal * std::sin(theta)};
}

// ---------------------------------------------------------------------------
// JSON schema (version 1)

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail(ErrorKind::Schema, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Schema, where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return field<T>(obj, key, where);
}

std::vector<Phase> phases_from(const json& obj, const std::string& where) {
  std::vector<Phase> out;
  for (const auto& s : field<std::vector<std::string>>(obj, "phases", where)) out.push_back(parse_phase(s));
  return out;
}

json phases_to(const std::vector<Phase>& phases) {
  json arr = json::array();
  for (Phase p : phases) arr.push_back(std::string(1, phase_letter(p)));
  return arr;
}

const json& array_at(const json& doc, const char* key) {
  if (!doc.contains(key)) fail(ErrorKind::Schema, std::string("feeder: missing top-level key '") + key + "'");
  const json& a = doc.at(key);
  if (!a.is_array()) fail(ErrorKind::Schema, std::string("feeder: '") + key + "' must be an array");
  return a;
}

}  // namespace

FeederModel feeder_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Schema, "feeder document must be a JSON object");
  FeederModel m;
  const int version = field_or<int>(doc, "version", 1, "feeder");
  if (version != 1) fail(ErrorKind::Schema, "unsupported feeder schema version " + std::to_string(version));

  if (!doc.contains("base")) fail(ErrorKind::Schema, "feeder: missing top-level key 'base'");
  m.base.s_base_kva = field<double>(doc["base"], "s_base_kva", "base");
  m.base.v_base_kv = field<double>(doc["base"], "v_base_kv", "base");

  for (const json& n : array_at(doc, "nodes")) {
    Node node;
    node.id = field<std::string>(n, "id", "node");
    const std::string where = "node " + node.id;
    node.phases = phases_from(n, where);
    node.latitude = field<double>(n, "lat", where);
    node.longitude = field<double>(n, "lon", where);
    node.v_min = field_or<double>(n, "v_min", 0.95, where);
    node.v_max = field_or<double>(n, "v_max", 1.05, where);
    m.nodes.push_back(std::move(node));
  }
  for (const json& l : array_at(doc, "lines")) {
    Line line;
    line.id = field<std::string>(l, "id", "line");
    const std::string where = "line " + line.id;
    line.from = field<std::string>(l, "from", where);
    line.to = field<std::string>(l, "to", where);
    line.phases = phases_from(l, where);
    line.g = field<std::vector<std::vector<double>>>(l, "g", where);
    line.b = field<std::vector<std::vector<double>>>(l, "b", where);
    m.lines.push_back(std::move(line));
  }
  for (const json& t : array_at(doc, "transformers")) {
    Transformer tx;
    tx.id = field<std::string>(t, "id", "transformer");
    const std::string where = "transformer " + tx.id;
    tx.from = field<std::string>(t, "from", where);
    tx.to = field<std::string>(t, "to", where);
    tx.phases = phases_from(t, where);
    tx.g = field<std::vector<double>>(t, "g", where);
    tx.b = field<std::vector<double>>(t, "b", where);
    tx.i_rated = field<double>(t, "i_rated", where);
    m.transformers.push_back(std::move(tx));
  }
  for (const json& l : array_at(doc, "loads")) {
    Load load;
    load.node = field<std::string>(l, "node", "load");
    load.phase = parse_phase(field<std::string>(l, "phase", "load at " + load.node));
    load.p = field<double>(l, "p", "load at " + load.node);
    load.q = field<double>(l, "q", "load at " + load.node);
    m.loads.push_back(std::move(load));
  }
  if (!doc.contains("slack")) fail(ErrorKind::Topology, "feeder has no slack source");
  const json& s = doc["slack"];
  m.slack.node = field<std::string>(s, "node", "slack");
  m.slack.v_nominal = field<double>(s, "v_nominal", "slack");
  if (s.contains("angles")) {
    const auto a = field<std::vector<double>>(s, "angles", "slack");
    if (a.size() != 3) fail(ErrorKind::Schema, "slack: exactly three phase angles required");
    m.slack.angles = {a[0], a[1], a[2]};
  }
  m.finalize();
  return m;
}

json feeder_to_json(const FeederModel& m) {
  json doc;
  doc["version"] = 1;
  doc["base"] = {{"s_base_kva", m.base.s_base_kva}, {"v_base_kv", m.base.v_base_kv}};
  json nodes = json::array();
  for (const Node& n : m.nodes) {
    nodes.push_back({{"id", n.id},
                     {"phases", phases_to(n.phases)},
                     {"lat", n.latitude},
                     {"lon", n.longitude},
                     {"v_min", n.v_min},
                     {"v_max", n.v_max}});
  }
  doc["nodes"] = std::move(nodes);
  json lines = json::array();
  for (const Line& l : m.lines) {
    lines.push_back(
        {{"id", l.id}, {"from", l.from}, {"to", l.to}, {"phases", phases_to(l.phases)}, {"g", l.g}, {"b", l.b}});
  }
  doc["lines"] = std::move(lines);
  json txs = json::array();
  for (const Transformer& t : m.transformers) {
    txs.push_back({{"id", t.id},
                   {"from", t.from},
                   {"to", t.to},
                   {"phases", phases_to(t.phases)},
                   {"g", t.g},
                   {"b", t.b},
                   {"i_rated", t.i_rated}});
  }
  doc["transformers"] = std::move(txs);
  json loads = json::array();
  for (const Load& l : m.loads) {
    loads.push_back({{"node", l.node}, {"phase", std::string(1, phase_letter(l.phase))}, {"p", l.p}, {"q", l.q}});
  }
  doc["loads"] = std::move(loads);
  doc["slack"] = {{"node", m.slack.node},
                  {"v_nominal", m.slack.v_nominal},
                  {"angles", {m.slack.angles[0], m.slack.angles[1], m.slack.angles[2]}}};
  return doc;
}

FeederModel load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open feeder file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, "feeder file " + path.string() + " is not valid JSON: " + e.what());
  }
  return feeder_from_json(doc);
}

void save_feeder(const FeederModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write feeder file " + path.string());
  out << feeder_to_json(model).dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::pair<double, double> transformer_admittance(const Transformer& t, std::size_t k) { return {t.g[k], t.b[k]}; }

Admittance assemble_admittance(const FeederModel& model) {
  const int n = model.num_node_phases();
  std::vector<Eigen::Triplet<double>> tg;
  std::vector<Eigen::Triplet<double>> tb;

  auto stamp = [&](int fi, int ti, const std::vector<Phase>& phases, auto&& gval, auto&& bval) {
    for (std::size_t r = 0; r < phases.size(); ++r) {
      const int fr = model.np_index(fi, phases[r]);
      const int tr = model.np_index(ti, phases[r]);
      for (std::size_t c = 0; c < phases.size(); ++c) {
        const int fc = model.np_index(fi, phases[c]);
        const int tc = model.np_index(ti, phases[c]);
        const double g = gval(r, c);
        const double b = bval(r, c);
        if (g == 0.0 && b == 0.0) continue;
        tg.emplace_back(fr, fc, g);
        tg.emplace_back(tr, tc, g);
        tg.emplace_back(fr, tc, -g);
        tg.emplace_back(tr, fc, -g);
        tb.emplace_back(fr, fc, b);
        tb.emplace_back(tr, tc, b);
        tb.emplace_back(fr, tc, -b);
        tb.emplace_back(tr, fc, -b);
      }
    }
  };

  for (const Line& l : model.lines) {
    stamp(model.node_index(l.from), model.node_index(l.to), l.phases,
          [&](std::size_t r, std::size_t c) { return l.g[r][c]; },
          [&](std::size_t r, std::size_t c) { return l.b[r][c]; });
  }
  for (const Transformer& t : model.transformers) {
    stamp(model.node_index(t.from), model.node_index(t.to), t.phases,
          [&](std::size_t r, std::size_t c) { return r == c ? t.g[r] : 0.0; },
          [&](std::size_t r, std::size_t c) { return r == c ? t.b[r] : 0.0; });
  }

  Admittance y;
  y.g.resize(n, n);
  y.b.resize(n, n);
  y.g.setFromTriplets(tg.begin(), tg.end());
  y.b.setFromTriplets(tb.begin(), tb.end());
  y.g.makeCompressed();
  y.b.makeCompressed();
  return y;
}

}  // namespace gridsite
