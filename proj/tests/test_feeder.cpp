#include <doctest.h>

#include <cmath>
#include <map>
#include <queue>

#include <Eigen/Dense>

#include "gridsite/acpf.hpp"
#include "gridsite/candidates.hpp"
#include "gridsite/feeder.hpp"
#include "support/fixtures.hpp"

using namespace gridsite;
using nlohmann::json;

namespace {

FeederModel parse(const json& doc) { return feeder_from_json(doc); }

// Dense nodal admittance stamped straight from the branch lists.
Eigen::MatrixXcd dense_admittance(const FeederModel& m) {
  const int n = m.num_node_phases();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const Line& l : m.lines) {
    for (std::size_t r = 0; r < l.phases.size(); ++r) {
      for (std::size_t c = 0; c < l.phases.size(); ++c) {
        const std::complex<double> v(l.g[r][c], l.b[r][c]);
        const int fr = m.np_index(l.from, l.phases[r]), fc = m.np_index(l.from, l.phases[c]);
        const int tr = m.np_index(l.to, l.phases[r]), tc = m.np_index(l.to, l.phases[c]);
        y(fr, fc) += v;
        y(tr, tc) += v;
        y(fr, tc) -= v;
        y(tr, fc) -= v;
      }
    }
  }
  for (const Transformer& t : m.transformers) {
    for (std::size_t k = 0; k < t.phases.size(); ++k) {
      const std::complex<double> v(t.g[k], t.b[k]);
      const int f = m.np_index(t.from, t.phases[k]), to = m.np_index(t.to, t.phases[k]);
      y(f, f) += v;
      y(to, to) += v;
      y(f, to) -= v;
      y(to, f) -= v;
    }
  }
  return y;
}

}  // namespace

TEST_CASE("feeder: minimal two-node file") {
  const FeederModel m = fixture::feeder("two_bus.json");
  CHECK(m.nodes.size() == 2);
  CHECK(m.lines.size() == 1);
  CHECK(m.loads.size() == 1);
  CHECK(m.node_index("n1") == 1);
  CHECK(m.np_index("n1", Phase::B) == -1);
}

TEST_CASE("feeder: input errors are classified") {
  CHECK(fixture::error_kind([] { fixture::feeder("absent_phase.json"); }) == ErrorKind::Reference);
  CHECK(fixture::error_kind([] { fixture::feeder("does_not_exist.json"); }) == ErrorKind::Io);

  json doc = fixture::json_of("two_bus.json");
  SUBCASE("missing base") {
    doc.erase("base");
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Schema);
  }
  SUBCASE("mistyped field") {
    doc["nodes"][1]["lat"] = "north";
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Schema);
  }
  SUBCASE("no slack") {
    doc.erase("slack");
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Topology);
  }
  SUBCASE("island") {
    doc["nodes"].push_back({{"id", "far"}, {"phases", {"A"}}, {"lat", 47.0}, {"lon", -122.0}});
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Topology);
  }
  SUBCASE("dangling line end") {
    doc["lines"][0]["to"] = "nowhere";
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Reference);
  }
  SUBCASE("zero admittance") {
    doc["lines"][0]["g"] = {{0.0}};
    CHECK(fixture::error_kind([&] { parse(doc); }) == ErrorKind::Degenerate);
  }
  SUBCASE("asymmetric block") {
    json f = fixture::json_of("balanced.json");
    f["lines"][0]["g"][0][1] = 1.0;
    CHECK(fixture::error_kind([&] { parse(f); }).has_value());
  }
  SUBCASE("inverted voltage band") {
    doc["nodes"][1]["v_min"] = 1.1;
    CHECK(fixture::error_kind([&] { parse(doc); }).has_value());
  }
  SUBCASE("non-positive rating") {
    json f = fixture::json_of("balanced.json");
    f["transformers"][0]["i_rated"] = 0.0;
    CHECK(fixture::error_kind([&] { parse(f); }).has_value());
  }
}

TEST_CASE("feeder: serialization round trip") {
  for (const char* name : {"two_bus.json", "feeder12.json", "balanced.json"}) {
    const FeederModel m = fixture::feeder(name);
    const json once = feeder_to_json(m);
    const json twice = feeder_to_json(feeder_from_json(json::parse(once.dump())));
    CHECK(once == twice);
  }
}

TEST_CASE("feeder: two-node stamp") {
  const FeederModel m = fixture::feeder("two_bus.json");
  const Admittance y = assemble_admittance(m);
  const int a = m.np_index("src", Phase::A), b = m.np_index("n1", Phase::A);
  CHECK(y.g.coeff(a, a) == doctest::Approx(10.0));
  CHECK(y.g.coeff(b, b) == doctest::Approx(10.0));
  CHECK(y.g.coeff(a, b) == doctest::Approx(-10.0));
  CHECK(y.g.coeff(b, a) == doctest::Approx(-10.0));
  CHECK(y.b.norm() == 0.0);
}

TEST_CASE("feeder: parallel lines add") {
  json doc = fixture::json_of("two_bus.json");
  json twin = doc["lines"][0];
  twin["id"] = "l1b";
  twin["g"] = {{4.0}};
  twin["b"] = {{-2.0}};
  doc["lines"].push_back(twin);
  const FeederModel m = parse(doc);
  const Admittance y = assemble_admittance(m);
  const int a = m.np_index("src", Phase::A), b = m.np_index("n1", Phase::A);
  CHECK(y.g.coeff(a, b) == doctest::Approx(-14.0));
  CHECK(y.b.coeff(a, b) == doctest::Approx(2.0));
  CHECK(y.b.coeff(b, b) == doctest::Approx(-2.0));
}

TEST_CASE("feeder: 12-node assembly matches a dense stamp") {
  const FeederModel m = fixture::feeder("feeder12.json");
  CHECK(m.nodes.size() == 12);
  const Admittance y = assemble_admittance(m);
  const Eigen::MatrixXcd dense = dense_admittance(m);
  const int n = m.num_node_phases();
  Eigen::MatrixXcd sparse(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) sparse(r, c) = {y.g.coeff(r, c), y.b.coeff(r, c)};
  CHECK((sparse - dense).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sparse - sparse.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  // Flat voltages drive no current anywhere: every branch sees equal terminal voltages.
  Eigen::VectorXcd v(n);
  for (int k = 0; k < n; ++k) {
    const auto [re, im] = m.nominal_voltage(k);
    v(k) = {re, im};
  }
  CHECK((dense * v).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((sparse * v).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("haversine: reference values") {
  CHECK(kEarthRadiusMeters == 6371000.0);
  CHECK(haversine_distance(47.6, -122.3, 47.6, -122.3) == 0.0);
  const double arc = kEarthRadiusMeters * 0.001 * M_PI / 180.0;
  CHECK(std::abs(haversine_distance(0.0, 0.0, 0.001, 0.0) - arc) < 1e-6);
  CHECK(std::abs(haversine_distance(0.0, 0.0, 0.001, 0.0) - 111.19) < 0.01);
  const double d1 = haversine_distance(47.61, -122.33, 47.62, -122.35);
  const double d2 = haversine_distance(47.62, -122.35, 47.61, -122.33);
  CHECK(d1 == doctest::Approx(d2).epsilon(1e-15));
  CHECK(d1 > 0.0);
}

TEST_CASE("candidates: headroom filter") {
  const FeederModel m = fixture::feeder("feeder12.json");
  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  REQUIRE(base.converged());
  SiteCatalog open;

  SUBCASE("threshold 0 keeps every loaded node-phase") {
    const CandidateSelection sel = select_candidates(m, base, 0.0, open);
    std::size_t loaded = 0;
    for (int k = 0; k < m.num_node_phases(); ++k) {
      const auto [p, q] = m.load_at(k);
      if (p != 0.0 || q != 0.0) ++loaded;
    }
    CHECK(sel.status == SelectionStatus::Ok);
    CHECK(sel.set.size() == loaded);
  }

  SUBCASE("loaded lateral is excluded") {
    // Upstream transformer of every node by a walk from the slack, then Ohm's law on the base state.
    std::map<std::string, std::string> upstream;
    std::queue<std::string> open_nodes;
    open_nodes.push(m.slack.node);
    upstream[m.slack.node] = "";
    while (!open_nodes.empty()) {
      const std::string at = open_nodes.front();
      open_nodes.pop();
      auto visit = [&](const std::string& next, const std::string& tx) {
        if (upstream.count(next)) return;
        upstream[next] = tx.empty() ? upstream[at] : tx;
        open_nodes.push(next);
      };
      for (const Line& l : m.lines) {
        if (l.from == at) visit(l.to, "");
        if (l.to == at) visit(l.from, "");
      }
      for (const Transformer& t : m.transformers) {
        if (t.from == at) visit(t.to, t.id);
        if (t.to == at) visit(t.from, t.id);
      }
    }
    auto headroom = [&](const std::string& tx_id, Phase p) {
      for (const Transformer& t : m.transformers) {
        if (t.id != tx_id) continue;
        for (std::size_t k = 0; k < t.phases.size(); ++k) {
          if (t.phases[k] != p) continue;
          const std::complex<double> i =
              std::complex<double>(t.g[k], t.b[k]) *
              (base.voltage(m.np_index(t.from, p)) - base.voltage(m.np_index(t.to, p)));
          return t.i_rated - std::abs(i);
        }
      }
      return -1.0;
    };

    const double threshold = 0.05;
    const CandidateSelection sel = select_candidates(m, base, threshold, open);
    std::vector<std::string> expected, got;
    for (int k = 0; k < m.num_node_phases(); ++k) {
      const auto [p, q] = m.load_at(k);
      if (p == 0.0 && q == 0.0) continue;
      const NodePhase np = m.node_phase(k);
      const std::string id = m.nodes[static_cast<std::size_t>(np.node)].id;
      const std::string tx = upstream.at(id);
      const double h = tx.empty() ? 1e9 : headroom(tx, np.phase);
      if (h >= threshold && h > 0.0) expected.push_back(id + phase_letter(np.phase));
    }
    for (const Candidate& c : sel.set.entries) got.push_back(c.node + phase_letter(c.phase));
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    CHECK(got == expected);
    // The phase-C lateral sits behind a nearly full transformer.
    for (const std::string& s : got) {
      CHECK(s != "n9C");
      CHECK(s != "n10C");
      CHECK(s != "n11C");
    }
  }

  SUBCASE("no headroom anywhere") {
    json doc = fixture::json_of("balanced.json");
    doc["transformers"][0]["i_rated"] = 0.18;  // base current is about 0.187 on every phase
    const FeederModel full = feeder_from_json(doc);
    const PowerFlowState s = solve_powerflow(full, assemble_admittance(full), {});
    const CandidateSelection sel = select_candidates(full, s, 0.0, open);
    CHECK(sel.status == SelectionStatus::Empty);
    CHECK(sel.set.empty());
  }

  SUBCASE("catalog restricts and annotates") {
    const SiteCatalog cat = load_sites_csv(fixture::path("../../data/sites.csv"));
    const CandidateSelection sel = select_candidates(m, base, 0.0, cat);
    for (const Candidate& c : sel.set.entries) {
      const SiteSpec* spec = cat.find(c.node, c.phase);
      REQUIRE(spec != nullptr);
      CHECK(c.land_cost == spec->land_cost);
      CHECK(c.z_max == spec->z_max);
    }
  }
}
