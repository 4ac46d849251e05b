#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gridsite/instance.hpp"
#include "gridsite/priority.hpp"
#include "gridsite/report.hpp"
#include "support/fixtures.hpp"

using namespace gridsite;
using nlohmann::json;

TEST_CASE("priority: voltage deviation term") {
  CHECK(voltage_deviation(0.94, 0.96, 0.95, 1.05, 10.0) == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(voltage_deviation(1.00, 0.99, 0.95, 1.05, 10.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(voltage_deviation(1.06, 1.04, 0.95, 1.05, 10.0) == doctest::Approx(0.02 + 0.1).epsilon(1e-12));
}

TEST_CASE("priority: current deviation term") {
  CHECK(current_deviation(1.2, 1.0, 1.1, 10.0) == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(current_deviation(0.5, 0.4, 1.1, 10.0) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("priority: grid impact blend") {
  SUBCASE("reference point") {
    const GridImpact g = grid_impact({0.6, 1.0}, {0.3, 1.0});
    CHECK(g.a[0] == doctest::Approx(2.0 / 3.0));
    CHECK(g.b[0] == doctest::Approx(1.0 / 3.0));
    CHECK(g.f_g[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.f_g[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("equal components") {
    const std::vector<double> f = {0.2, 0.5, 0.8};
    const GridImpact g = grid_impact(f, f);
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(g.a[i] == doctest::Approx(0.5));
      CHECK(g.b[i] == doctest::Approx(0.5));
      CHECK(g.f_g[i] == doctest::Approx(f[i] / 0.8).epsilon(1e-12));
    }
  }
  SUBCASE("all-zero current component") {
    const GridImpact g = grid_impact({0.2, 0.4}, {0.0, 0.0});
    CHECK(g.b[0] == 0.0);
    CHECK(g.b[1] == 0.0);
    CHECK(g.f_g[1] == doctest::Approx(1.0));
  }
  SUBCASE("shares sum to one") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0.01, 3.0);
    std::vector<double> fv(30), fc(30);
    for (std::size_t i = 0; i < 30; ++i) fv[i] = u(rng), fc[i] = u(rng);
    const GridImpact g = grid_impact(fv, fc);
    for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(g.a[i] + g.b[i] - 1.0) < 1e-12);
  }
}

TEST_CASE("priority: softmax weights") {
  SUBCASE("constants") {
    const auto w = priority_weights({0.3, 0.3, 0.3, 0.3});
    for (double x : w) CHECK(x == doctest::Approx(0.25));
  }
  SUBCASE("log two apart") {
    const auto w = priority_weights({0.0, std::log(2.0)});
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("shift invariance and order") {
    const std::vector<double> f = {0.1, 0.7, 0.4, 1.0};
    std::vector<double> g = f;
    for (double& x : g) x += 3.5;
    const auto a = priority_weights(f), b = priority_weights(g);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-15);
    CHECK(a[0] > a[2]);
    CHECK(a[2] > a[1]);
    CHECK(a[1] > a[3]);
    std::vector<double> h = f;
    h[2] += 0.1;
    CHECK(priority_weights(h)[2] < a[2]);
  }
  SUBCASE("diverged entries") {
    const auto w = priority_weights({0.2, std::numeric_limits<double>::infinity(), 0.2});
    CHECK(w[1] == 0.0);
    CHECK(w[0] == doctest::Approx(0.5));
  }
  CHECK(fixture::error_kind([] { priority_weights({}); }).has_value());
}

TEST_CASE("priority: zero perturbation is rejected") {
  GiConfig cfg;
  cfg.delta_s = 0.0;
  CHECK(fixture::error_kind([&] { cfg.validate(); }).has_value());
  cfg.delta_s = 0.07;
  cfg.gamma = -1.0;
  CHECK(fixture::error_kind([&] { cfg.validate(); }).has_value());
}

TEST_CASE("priority: no transformer means no current impact") {
  const FeederModel m = fixture::feeder("two_bus.json");
  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  const GiConfig cfg = GiConfig::from_charger(7.2, 0.985, m.base.s_base_kva);
  CHECK(current_impact(m, y, base, m.np_index("n1", Phase::A), cfg) == 0.0);
  CHECK(voltage_impact(m, y, base, m.np_index("n1", Phase::A), cfg) > 0.0);
}

TEST_CASE("priority: symmetric candidates tie") {
  const SitingInstance inst = fixture::instance("symmetric2.json");
  const PreparedInstance prep = prepare_instance(inst);
  REQUIRE(prep.candidates.size() == 2);
  const Candidate& a = prep.candidates.entries[0];
  const Candidate& b = prep.candidates.entries[1];
  CHECK(std::abs(a.f_v - b.f_v) < 1e-9);
  CHECK(std::abs(a.weight - 0.5) < 1e-9);
  CHECK(std::abs(b.weight - 0.5) < 1e-9);
}

TEST_CASE("priority: downstream candidate loads the transformer more") {
  // Candidate behind t2 against one on the trunk above it: only the first moves t2's current.
  const FeederModel m = fixture::feeder("feeder12.json");
  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  const GiConfig cfg = GiConfig::from_charger(7.2, 0.985, m.base.s_base_kva);
  const double below = current_impact(m, y, base, m.np_index("n9", Phase::A), cfg);
  const double trunk = current_impact(m, y, base, m.np_index("n2", Phase::A), cfg);
  CHECK(below > trunk);
}

TEST_CASE("priority: feeder invariants") {
  const SitingInstance inst = [] {
    SitingInstance s;
    s.feeder = fixture::feeder("feeder12.json");
    return s;
  }();
  const PreparedInstance prep = prepare_instance(inst);
  const CandidateSet& c = prep.candidates;
  REQUIRE(c.size() > 3);
  std::vector<double> fv, fc, fg, w;
  for (const Candidate& e : c.entries) {
    fv.push_back(e.f_v), fc.push_back(e.f_c), fg.push_back(e.f_g), w.push_back(e.weight);
    CHECK(e.f_v >= 0.0);
    CHECK(e.f_c >= 0.0);
    CHECK(e.weight > 0.0);
    CHECK(e.weight < 1.0);
  }
  CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-12);
  const GridImpact g = grid_impact(fv, fc);
  for (std::size_t i = 0; i < g.a.size(); ++i) CHECK(std::abs(g.a[i] + g.b[i] - 1.0) < 1e-12);
  CHECK(std::max_element(w.begin(), w.end()) - w.begin() == std::min_element(fg.begin(), fg.end()) - fg.begin());

  // Serial and threaded studies agree exactly.
  const PreparedInstance threaded = prepare_instance(inst, 4);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(threaded.candidates.entries[i].weight == c.entries[i].weight);
}

TEST_CASE("priority: node labels do not matter") {
  // Same network with every node renamed and listed in reverse.
  json doc = fixture::json_of("feeder12.json");
  auto rename = [](const std::string& id) { return id == "src" ? id : "z" + id; };
  std::reverse(doc["nodes"].begin(), doc["nodes"].end());
  for (json& n : doc["nodes"]) n["id"] = rename(n["id"]);
  for (json& l : doc["lines"]) l["from"] = rename(l["from"]), l["to"] = rename(l["to"]);
  for (json& t : doc["transformers"]) t["from"] = rename(t["from"]), t["to"] = rename(t["to"]);
  for (json& l : doc["loads"]) l["node"] = rename(l["node"]);
  SitingInstance a, b;
  a.feeder = fixture::feeder("feeder12.json");
  b.feeder = feeder_from_json(doc);
  const PreparedInstance pa = prepare_instance(a), pb = prepare_instance(b);
  REQUIRE(pa.candidates.size() == pb.candidates.size());
  for (const Candidate& ca : pa.candidates.entries) {
    bool found = false;
    for (const Candidate& cb : pb.candidates.entries) {
      if (cb.node != "z" + ca.node || cb.phase != ca.phase) continue;
      found = true;
      CHECK(std::abs(ca.f_v - cb.f_v) < 1e-9);
      CHECK(std::abs(ca.f_c - cb.f_c) < 1e-9);
    }
    CHECK(found);
  }
}

TEST_CASE("priority: ranking matches a scripted perturbation study") {
  // Standalone study: perturb each candidate, solve, sum deviations per the index definitions.
  SitingInstance inst;
  inst.feeder = fixture::feeder("feeder12.json");
  const FeederModel& m = inst.feeder;
  const PreparedInstance prep = prepare_instance(inst);
  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  const GiConfig cfg = instance_gi(inst);
  const double qs = std::sqrt(1.0 - cfg.pf * cfg.pf);
  std::vector<double> fv, fc;
  for (const Candidate& c : prep.candidates.entries) {
    InjectionOverlay o;
    o.add(c.np, {cfg.delta_s * cfg.pf, cfg.delta_s * qs});
    const PowerFlowState s = solve_powerflow(m, y, o);
    double v = 0.0, i = 0.0;
    for (int k = 0; k < m.num_node_phases(); ++k) {
      const Node& node = m.nodes[static_cast<std::size_t>(m.node_phase(k).node)];
      const double vh = s.magnitude(k), v0 = base.magnitude(k);
      v += std::abs(vh - v0) + cfg.gamma * std::abs(std::min(0.0, vh - node.v_min) + std::min(0.0, node.v_max - vh));
    }
    for (const Transformer& t : m.transformers) {
      for (std::size_t k = 0; k < t.phases.size(); ++k) {
        const std::complex<double> yt(t.g[k], t.b[k]);
        const int f = m.np_index(t.from, t.phases[k]), to = m.np_index(t.to, t.phases[k]);
        const double ih = std::abs(yt * (s.voltage(f) - s.voltage(to)));
        const double i0 = std::abs(yt * (base.voltage(f) - base.voltage(to)));
        i += std::abs(ih - i0) + cfg.gamma * std::abs(std::min(0.0, t.i_rated - ih));
      }
    }
    fv.push_back(v / cfg.delta_s);
    fc.push_back(i / cfg.delta_s);
  }
  for (std::size_t k = 0; k < fv.size(); ++k) {
    CHECK(prep.candidates.entries[k].f_v == doctest::Approx(fv[k]).epsilon(1e-6));
    CHECK(prep.candidates.entries[k].f_c == doctest::Approx(fc[k]).epsilon(1e-6));
  }
  const std::vector<double> w = priority_weights(grid_impact(fv, fc).f_g);
  std::vector<std::size_t> ours(w.size()), theirs(w.size());
  std::iota(ours.begin(), ours.end(), 0);
  std::iota(theirs.begin(), theirs.end(), 0);
  std::stable_sort(ours.begin(), ours.end(),
                   [&](auto a, auto b) { return prep.candidates.entries[a].weight > prep.candidates.entries[b].weight; });
  std::stable_sort(theirs.begin(), theirs.end(), [&](auto a, auto b) { return w[a] > w[b]; });
  CHECK(ours == theirs);
}

TEST_CASE("priority: candidate CSV is deterministic") {
  SitingInstance inst;
  inst.feeder = fixture::feeder("feeder12.json");
  const std::string a = candidates_csv(prepare_instance(inst).candidates);
  const std::string b = candidates_csv(prepare_instance(inst, 3).candidates);
  CHECK(a == b);
  CHECK(a.rfind("node,phase,f_v,f_c,f_g,weight\n", 0) == 0);
}
