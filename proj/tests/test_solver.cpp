#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gridsite/instance.hpp"
#include "gridsite/relaxation.hpp"
#include "gridsite/solver.hpp"
#include "support/enumerate.hpp"
#include "support/fixtures.hpp"

using namespace gridsite;

namespace {

// Lifted, decomposed and propagated form of a posed instance, as the solver builds it.
struct Presolvable {
  MiblpProblem lifted;
  DecomposedProblem dp;
  Box box;
};

std::unique_ptr<Presolvable> presolvable(const MinlpProblem& minlp) {
  auto p = std::make_unique<Presolvable>();
  p->lifted = lift_to_miblp(minlp);
  p->dp = filter_and_decompose(p->lifted, minlp.model->slack);
  p->box = p->dp.problem.bounds();
  REQUIRE(propagate_bounds(p->dp, p->box));
  return p;
}

// Every admissible (x, z) with objective at least `floor`, as points of the decomposed space.
std::vector<std::vector<double>> admissible_points(const MinlpProblem& minlp, const Presolvable& ps, double floor) {
  std::vector<std::vector<double>> out;
  const auto& e = minlp.candidates.entries;
  const std::size_t n = e.size();
  std::vector<int> choice(n, 0), x(n), z(n);
  while (true) {
    double f = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      x[c] = choice[c] > 0;
      z[c] = choice[c];
      f += e[c].weight * z[c];
    }
    if (f >= floor - 1e-9 && oracle::discrete_ok(minlp, x, z) && oracle::network_ok(minlp, z, 0.0)) {
      const PowerFlowState s =
          solve_powerflow(*minlp.model, minlp.admittance, minlp.charger_overlay(z), PowerFlowOptions{1e-12, 50});
      out.push_back(ps.dp.to_decomposed(lift_point(ps.lifted, minlp, minlp.point_from_state(s, x, z))));
    }
    std::size_t c = 0;
    for (; c < n; ++c) {
      const int next = choice[c] == 0 ? std::max(1, e[c].z_min) : choice[c] + 1;
      if (next <= e[c].z_max) {
        choice[c] = next;
        break;
      }
      choice[c] = 0;
    }
    if (c == n) break;
  }
  return out;
}

SolverConfig config(PresolveMode mode) {
  SolverConfig c;
  c.presolve = mode;
  return c;
}

}  // namespace

TEST_CASE("solve: zero demand and zero budget") {
  auto p = fixture::pose(fixture::instance("zero_demand.json"));
  for (PresolveMode mode : {PresolveMode::None, PresolveMode::Sbt}) {
    const PlacementSolution sol = solve_placement(p->minlp, config(mode));
    REQUIRE(sol.best);
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK(sol.best->objective == 0.0);
    CHECK(sol.gap == 0.0);
    CHECK(sol.nodes <= 1);
    CHECK(format_gap(sol.gap) == "0.0000");
    for (int v : sol.best->z) CHECK(v == 0);
    CHECK(sol.verification.ok);
  }
}

TEST_CASE("solve: small fixtures match enumeration") {
  for (const char* name : {"toy2.json", "symmetric2.json"}) {
    CAPTURE(name);
    auto p = fixture::pose(fixture::instance(name));
    const oracle::Placement ref = oracle::enumerate_optimum(p->minlp);
    REQUIRE(ref.feasible > 0);
    for (PresolveMode mode : {PresolveMode::None, PresolveMode::Sbt}) {
      const PlacementSolution sol = solve_placement(p->minlp, config(mode));
      REQUIRE(sol.best);
      CHECK(sol.status == SolveStatus::Optimal);
      CHECK(std::abs(sol.best->objective - ref.objective) <= 1e-6 * std::max(1.0, ref.objective));
      CHECK(sol.gap <= 1e-6);
      CHECK(sol.verification.ok);
      CHECK(oracle::discrete_ok(p->minlp, sol.best->x, sol.best->z));
      CHECK(oracle::network_ok(p->minlp, sol.best->z, 1e-6));
      CHECK(sol.best->objective == doctest::Approx(p->minlp.objective(sol.best->x, sol.best->z)).epsilon(1e-12));
      // True optimum inside [incumbent, incumbent + gap * max(1, |incumbent|)].
      CHECK(ref.objective >= sol.best->objective - 1e-9);
      CHECK(ref.objective <= sol.best->objective + sol.gap * std::max(1.0, std::abs(sol.best->objective)) + 1e-9);
      CHECK(sol.bound >= ref.objective - 1e-7);
    }
  }
}

TEST_CASE("solve: every charger overloads the transformer") {
  auto p = fixture::pose(fixture::instance("overloaded.json"));
  const oracle::Placement ref = oracle::enumerate_optimum(p->minlp);
  CHECK(ref.feasible == 0);
  auto ps = presolvable(p->minlp);
  Relaxation rel(ps->dp);
  CHECK_FALSE(local_incumbent(p->minlp, rel, ps->box).has_value());
  for (PresolveMode mode : {PresolveMode::None, PresolveMode::Sbt}) {
    const PlacementSolution sol = solve_placement(p->minlp, config(mode));
    CHECK(sol.status == SolveStatus::Infeasible);
    CHECK_FALSE(sol.best);
  }
}

TEST_CASE("solve: local incumbent is admissible") {
  auto p = fixture::pose(fixture::instance("toy2.json"));
  auto ps = presolvable(p->minlp);
  Relaxation rel(ps->dp);
  const auto inc = local_incumbent(p->minlp, rel, ps->box);
  REQUIRE(inc);
  CHECK(oracle::discrete_ok(p->minlp, inc->x, inc->z));
  CHECK(oracle::network_ok(p->minlp, inc->z, 1e-6));
  CHECK(inc->objective <= oracle::enumerate_optimum(p->minlp).objective + 1e-12);
}

TEST_CASE("solve: identical runs give identical reports") {
  auto p = fixture::pose(fixture::instance("toy2.json"));
  for (PresolveMode mode : {PresolveMode::None, PresolveMode::Sbt}) {
    std::vector<std::string> logs[2];
    std::string reports[2];
    for (int run = 0; run < 2; ++run) {
      SolverConfig cfg = config(mode);
      cfg.bnb.on_node = [&](const NodeLogEntry& e) {
        logs[run].push_back(std::to_string(e.node) + " " + std::to_string(e.depth) + " " + std::to_string(e.bound) +
                            " " + e.action);
      };
      reports[run] = solution_to_json(p->minlp, solve_placement(p->minlp, cfg)).dump();
    }
    CHECK(reports[0] == reports[1]);
    CHECK(logs[0] == logs[1]);
  }
}

TEST_CASE("solve: node bounds dominate the optimum") {
  auto p = fixture::pose(fixture::instance("toy2.json"));
  const double opt = oracle::enumerate_optimum(p->minlp).objective;
  SolverConfig cfg = config(PresolveMode::None);
  std::vector<NodeLogEntry> log;
  cfg.bnb.on_node = [&](const NodeLogEntry& e) { log.push_back(e); };
  solve_placement(p->minlp, cfg);
  REQUIRE_FALSE(log.empty());
  CHECK(log.front().depth == 0);
  CHECK(log.front().bound >= opt - 1e-7);
}

TEST_CASE("verify: placements against the network") {
  SUBCASE("no chargers on a healthy feeder") {
    auto p = fixture::pose(fixture::instance("zero_demand.json"));
    const std::size_t n = p->minlp.candidates.size();
    const AcVerification v = verify_ac_feasibility(p->minlp, std::vector<int>(n, 0), std::vector<int>(n, 0));
    CHECK(v.ok);
    CHECK(v.limits.thermal.empty());
    CHECK(v.limits.voltage.empty());
    CHECK(v.limits.worst_thermal_margin > 0.0);
    CHECK(v.state.residual_norm <= 1e-8);
  }
  SUBCASE("unmet demand is a siting failure, not a network one") {
    auto p = fixture::pose(fixture::instance("toy2.json"));
    const std::size_t n = p->minlp.candidates.size();
    const AcVerification v = verify_ac_feasibility(p->minlp, std::vector<int>(n, 0), std::vector<int>(n, 0));
    CHECK(v.network_ok);
    CHECK_FALSE(v.ok);
    CHECK(v.discrete_violation > 0.0);
  }
  SUBCASE("overload names the transformer") {
    auto p = fixture::pose(fixture::instance("overloaded.json"));
    const std::size_t n = p->minlp.candidates.size();
    std::vector<int> x(n, 0), z(n, 0);
    x[0] = 1;
    z[0] = p->minlp.candidates.entries[0].z_max;
    const AcVerification v = verify_ac_feasibility(p->minlp, x, z);
    CHECK_FALSE(v.ok);
    CHECK_FALSE(v.network_ok);
    REQUIRE_FALSE(v.limits.thermal.empty());
    const ThermalViolation& t = v.limits.thermal.front();
    CHECK(p->inst.feeder.transformers[static_cast<std::size_t>(t.transformer)].id == "t1");
    // Independent current from the converged voltages.
    const Transformer& tx = p->inst.feeder.transformers[static_cast<std::size_t>(t.transformer)];
    const FeederModel& m = p->inst.feeder;
    const std::size_t slot = static_cast<std::size_t>(
        std::find(tx.phases.begin(), tx.phases.end(), t.phase) - tx.phases.begin());
    const std::complex<double> i =
        std::complex<double>(tx.g[slot], tx.b[slot]) *
        (v.state.voltage(m.np_index(tx.from, t.phase)) - v.state.voltage(m.np_index(tx.to, t.phase)));
    CHECK(std::abs(i) == doctest::Approx(t.current).epsilon(1e-9));
    CHECK(std::abs(i) > tx.i_rated);
    const std::string text = verification_to_json(p->minlp, v).dump();
    CHECK(text.find("\"t1\"") != std::string::npos);
  }
}

TEST_CASE("sbt: tightened boxes keep every good admissible point") {
  SuiteOptions so;
  so.count = 6;
  const std::vector<SitingInstance> suite = generate_suite(so);
  int checked = 0;
  for (const SitingInstance& inst : suite) {
    CAPTURE(inst.name);
    const PreparedInstance prep = prepare_instance(inst);
    const MinlpProblem minlp = instance_problem(inst, prep);
    auto ps = presolvable(minlp);
    Relaxation rel(ps->dp);
    const auto inc = local_incumbent(minlp, rel, ps->box);
    const double floor = inc ? inc->objective : -INFINITY;
    const SbtResult r = sbt_presolve(rel, ps->box, floor);
    REQUIRE(r.outcome != SbtOutcome::EmptyRegion);
    CHECK(r.sweeps.size() <= 25u);
    CHECK(r.outcome == SbtOutcome::Converged);

    // Nested boxes, sweep by sweep, then the final integer pass.
    for (std::size_t h = 1; h < r.history.size(); ++h) {
      for (std::size_t j = 0; j < r.box.lower.size(); ++j) {
        CHECK(r.history[h].lower[j] >= r.history[h - 1].lower[j]);
        CHECK(r.history[h].upper[j] <= r.history[h - 1].upper[j]);
      }
    }
    for (std::size_t j = 0; j < r.box.lower.size(); ++j) {
      CHECK(r.box.lower[j] >= r.history.back().lower[j]);
      CHECK(r.box.upper[j] <= r.history.back().upper[j]);
    }
    const SbtSweep& last = r.sweeps.back();
    CHECK(last.lower_change <= 1e-4);
    CHECK(last.upper_change <= 1e-4);

    for (const std::vector<double>& d : admissible_points(minlp, *ps, floor)) {
      ++checked;
      for (std::size_t j = 0; j < d.size(); ++j) {
        const double tol = 1e-7 * (1.0 + std::abs(d[j]));
        CHECK(d[j] >= r.box.lower[j] - tol);
        CHECK(d[j] <= r.box.upper[j] + tol);
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("sbt: integer mode is at least as tight as relaxed mode") {
  auto p = fixture::pose(fixture::instance("toy2.json"));
  auto ps = presolvable(p->minlp);
  Relaxation rel(ps->dp);
  const auto inc = local_incumbent(p->minlp, rel, ps->box);
  REQUIRE(inc);
  SbtOptions relaxed, exact;
  exact.integrality = IntegralityMode::Exact;
  const SbtResult a = sbt_presolve(rel, ps->box, inc->objective, relaxed);
  const SbtResult b = sbt_presolve(rel, ps->box, inc->objective, exact);
  REQUIRE(a.outcome != SbtOutcome::EmptyRegion);
  if (b.outcome == SbtOutcome::EmptyRegion) return;
  // Both are sound supersets of the same set, so they must overlap on every column.
  for (int f : ps->dp.filtered_vars) {
    const std::size_t j = static_cast<std::size_t>(f);
    CHECK(std::max(a.box.lower[j], b.box.lower[j]) <= std::min(a.box.upper[j], b.box.upper[j]) + 1e-7);
  }
}

TEST_CASE("gap: relative convention and four-decimal text") {
  CHECK(relative_gap(10.0, 10.0) == 0.0);
  CHECK(relative_gap(11.0, 10.0) == doctest::Approx(0.1));
  CHECK(relative_gap(0.5, 0.0) == doctest::Approx(0.5));
  CHECK(relative_gap(9.0, 10.0) == 0.0);
  CHECK(format_gap(0.0) == "0.0000");
  CHECK(format_gap(1e-7) == "0.0000");
  CHECK(format_gap(0.12345) == "0.1235");
}
