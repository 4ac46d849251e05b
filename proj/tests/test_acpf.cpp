#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "gridsite/acpf.hpp"
#include "support/fixtures.hpp"

using namespace gridsite;
using nlohmann::json;

namespace {

// Residual as a function of the interleaved voltage vector; surrogates follow the voltages.
std::vector<double> residual_at(const FeederModel& m, const Admittance& y, const InjectionOverlay& overlay,
                                const std::vector<double>& v) {
  PowerFlowState s = flat_state(m);
  for (int k = 0; k < m.num_node_phases(); ++k) {
    s.v_real[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(2 * k)];
    s.v_imag[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(2 * k + 1)];
  }
  refresh_surrogates(m, overlay, s);
  return kcl_residual(m, y, s);
}

}  // namespace

TEST_CASE("acpf: two-bus closed form") {
  const FeederModel m = fixture::feeder("two_bus.json");
  const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
  REQUIRE(s.converged());
  // V^2 - V + P/g = 0 with the larger root.
  const double v = 0.5 * (1.0 + std::sqrt(1.0 - 4.0 * 0.1 / 10.0));
  CHECK(std::abs(s.magnitude(m.np_index("n1", Phase::A)) - v) < 1e-6);
  CHECK(std::abs(v - 0.98990) < 1e-5);
  CHECK(s.residual_norm <= 1e-8);
}

TEST_CASE("acpf: no load gives the flat profile") {
  json doc = fixture::json_of("feeder12.json");
  doc["loads"] = json::array();
  const FeederModel m = feeder_from_json(doc);
  const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
  REQUIRE(s.converged());
  for (int k = 0; k < m.num_node_phases(); ++k) {
    const auto [re, im] = m.nominal_voltage(k);
    CHECK(std::abs(s.v_real[static_cast<std::size_t>(k)] - re) < 1e-12);
    CHECK(std::abs(s.v_imag[static_cast<std::size_t>(k)] - im) < 1e-12);
  }
  CHECK(s.residual_norm < 1e-12);
}

TEST_CASE("acpf: converged states satisfy the surrogate identities") {
  const FeederModel m = fixture::feeder("feeder12.json");
  const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
  REQUIRE(s.converged());
  CHECK(s.residual_norm <= 1e-8);
  for (int k = 0; k < m.num_node_phases(); ++k) {
    const auto [p, q] = m.load_at(k);
    CHECK(std::abs(s.g_load[static_cast<std::size_t>(k)] * s.v_sq(k) - p) < 1e-12);
    CHECK(std::abs(s.b_load[static_cast<std::size_t>(k)] * s.v_sq(k) + q) < 1e-12);
  }
}

TEST_CASE("acpf: flat profile residual under load") {
  const FeederModel m = fixture::feeder("two_bus.json");
  const Admittance y = assemble_admittance(m);
  PowerFlowState s = flat_state(m);
  refresh_surrogates(m, {}, s);
  const std::vector<double> r = kcl_residual(m, y, s);
  const int k = m.np_index("n1", Phase::A);
  // No line current at equal voltages; what remains is the load current P/V at V = 1.
  CHECK(std::hypot(r[static_cast<std::size_t>(2 * k)], r[static_cast<std::size_t>(2 * k + 1)]) ==
        doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("acpf: analytic Jacobian matches central differences") {
  const FeederModel m = fixture::feeder("feeder12.json");
  const Admittance y = assemble_admittance(m);
  InjectionOverlay overlay;
  overlay.add(m, "n4", Phase::B, {0.07, 0.012});
  overlay.add(m, "n7", Phase::A, {0.05, 0.01});
  const int n = m.num_node_phases();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-0.15, 0.15);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(2 * n));
    PowerFlowState s = flat_state(m);
    for (int k = 0; k < n; ++k) {
      const auto [re, im] = m.nominal_voltage(k);
      const std::complex<double> z = std::polar(mag(rng), ang(rng)) * std::complex<double>(re, im);
      v[static_cast<std::size_t>(2 * k)] = s.v_real[static_cast<std::size_t>(k)] = z.real();
      v[static_cast<std::size_t>(2 * k + 1)] = s.v_imag[static_cast<std::size_t>(k)] = z.imag();
    }
    const Eigen::MatrixXd jac = Eigen::MatrixXd(kcl_jacobian(m, y, overlay, s));
    Eigen::MatrixXd fd(2 * n, 2 * n);
    const double h = 1e-6;
    for (int c = 0; c < 2 * n; ++c) {
      std::vector<double> up = v, dn = v;
      up[static_cast<std::size_t>(c)] += h;
      dn[static_cast<std::size_t>(c)] -= h;
      const auto ru = residual_at(m, y, overlay, up), rd = residual_at(m, y, overlay, dn);
      for (int r = 0; r < 2 * n; ++r) fd(r, c) = (ru[static_cast<std::size_t>(r)] - rd[static_cast<std::size_t>(r)]) / (2 * h);
    }
    worst = std::max(worst, (jac - fd).cwiseAbs().maxCoeff() / std::max(1.0, jac.cwiseAbs().maxCoeff()));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("acpf: first-order response to a small voltage step") {
  const FeederModel m = fixture::feeder("feeder12.json");
  const Admittance y = assemble_admittance(m);
  const PowerFlowState base = solve_powerflow(m, y, {});
  const int n = m.num_node_phases();
  std::vector<double> v(static_cast<std::size_t>(2 * n));
  for (int k = 0; k < n; ++k) {
    v[static_cast<std::size_t>(2 * k)] = base.v_real[static_cast<std::size_t>(k)];
    v[static_cast<std::size_t>(2 * k + 1)] = base.v_imag[static_cast<std::size_t>(k)];
  }
  const Eigen::MatrixXd jac = Eigen::MatrixXd(kcl_jacobian(m, y, {}, base));
  const int col = 2 * m.np_index("n5", Phase::B);
  std::vector<double> stepped = v;
  stepped[static_cast<std::size_t>(col)] += 1e-3;
  const auto r0 = residual_at(m, y, {}, v), r1 = residual_at(m, y, {}, stepped);
  for (int r = 0; r < 2 * n; ++r) {
    const double predicted = jac(r, col) * 1e-3;
    CHECK(std::abs(r1[static_cast<std::size_t>(r)] - r0[static_cast<std::size_t>(r)] - predicted) < 1e-5);
  }
}

TEST_CASE("acpf: balanced feeder keeps exact phase symmetry") {
  const FeederModel m = fixture::feeder("balanced.json");
  const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
  REQUIRE(s.converged());
  const std::complex<double> shift = std::polar(1.0, -2.0 * M_PI / 3.0);
  for (const Node& node : m.nodes) {
    const auto va = s.voltage(m.np_index(node.id, Phase::A));
    const auto vb = s.voltage(m.np_index(node.id, Phase::B));
    const auto vc = s.voltage(m.np_index(node.id, Phase::C));
    CHECK(std::abs(vb - va * shift) < 1e-10);
    CHECK(std::abs(vc - vb * shift) < 1e-10);
    CHECK(std::abs(std::abs(va) - std::abs(vb)) < 1e-10);
  }
}

TEST_CASE("acpf: rotating the slack angles permutes the solution") {
  json doc = fixture::json_of("balanced.json");
  const FeederModel m = feeder_from_json(doc);
  const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
  doc["slack"]["angles"] = {2.0943951023931957, 0.0, -2.0943951023931957};
  const FeederModel r = feeder_from_json(doc);
  const PowerFlowState t = solve_powerflow(r, assemble_admittance(r), {});
  for (const Node& node : m.nodes) {
    CHECK(std::abs(t.voltage(r.np_index(node.id, Phase::B)) - s.voltage(m.np_index(node.id, Phase::A))) < 1e-10);
  }
}

TEST_CASE("acpf: heavier load lowers the local voltage") {
  json doc = fixture::json_of("two_bus.json");
  double last = 2.0;
  for (double p : {0.05, 0.1, 0.15, 0.2}) {
    doc["loads"][0]["p"] = p;
    const FeederModel m = feeder_from_json(doc);
    const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
    const double v = s.magnitude(m.np_index("n1", Phase::A));
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("acpf: per-unit scale invariance") {
  json doc = fixture::json_of("two_bus.json");
  const FeederModel a = feeder_from_json(doc);
  doc["loads"][0]["p"] = 0.3;
  doc["lines"][0]["g"] = {{30.0}};
  const FeederModel b = feeder_from_json(doc);
  const double va = solve_powerflow(a, assemble_admittance(a), {}).magnitude(1);
  const double vb = solve_powerflow(b, assemble_admittance(b), {}).magnitude(1);
  CHECK(std::abs(va - vb) < 1e-12);
}

TEST_CASE("acpf: limit report") {
  SUBCASE("within band") {
    const FeederModel m = fixture::feeder("balanced.json");
    const LimitReport r = check_limits(m, flat_state(m));
    CHECK(r.voltage.empty());
  }
  SUBCASE("undervoltage by 0.01") {
    // Load sized so that the two-bus voltage settles at 0.94: P = g (V - V^2).
    json doc = fixture::json_of("two_bus.json");
    doc["loads"][0]["p"] = 10.0 * (0.94 - 0.94 * 0.94);
    const FeederModel m = feeder_from_json(doc);
    const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
    REQUIRE(s.converged());
    const LimitReport r = check_limits(m, s);
    REQUIRE(r.voltage.size() == 1);
    CHECK(r.voltage[0].np == m.np_index("n1", Phase::A));
    CHECK(r.voltage[0].amount == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(r.thermal.empty());
  }
  SUBCASE("transformer at 1.1 times rating") {
    json doc = fixture::json_of("balanced.json");
    const FeederModel m0 = feeder_from_json(doc);
    const PowerFlowState s0 = solve_powerflow(m0, assemble_admittance(m0), {});
    const Transformer& t = m0.transformers[0];
    const int f = m0.np_index(t.from, Phase::B), to = m0.np_index(t.to, Phase::B);
    const double i = std::abs(std::complex<double>(t.g[1], t.b[1]) * (s0.voltage(f) - s0.voltage(to)));
    doc["transformers"][0]["i_rated"] = i / 1.1;
    const FeederModel m = feeder_from_json(doc);
    const PowerFlowState s = solve_powerflow(m, assemble_admittance(m), {});
    const LimitReport r = check_limits(m, s);
    CHECK(r.thermal.size() == 3);  // balanced: every phase carries the same current
    for (const ThermalViolation& v : r.thermal) CHECK(v.current / v.rating == doctest::Approx(1.1).epsilon(1e-9));
  }
}

TEST_CASE("acpf: overlay on an absent phase is rejected") {
  const FeederModel m = fixture::feeder("two_bus.json");
  InjectionOverlay overlay;
  CHECK(fixture::error_kind([&] { overlay.add(m, "n1", Phase::C, {0.1, 0.0}); }) == ErrorKind::Reference);
}
