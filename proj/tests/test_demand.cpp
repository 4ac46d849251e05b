#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include "gridsite/demand.hpp"
#include "gridsite/error.hpp"
#include "support/fixtures.hpp"

using namespace gridsite;

namespace {

CensusBlock block(std::string id, double mu, double eps, int cap, bool in_feeder = false) {
  CensusBlock b;
  b.id = std::move(id);
  b.mu = mu;
  b.eps = eps;
  b.cap = cap;
  b.in_feeder = in_feeder;
  return b;
}

double value(const std::vector<CensusBlock>& blocks, const std::vector<int>& d, double alpha) {
  double v = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) v += d[i] * ((1.0 - alpha) * blocks[i].mu + alpha * blocks[i].eps);
  return v;
}

// Best objective over every integer d with sum d = b and 0 <= d <= cap.
double brute_force(const std::vector<CensusBlock>& blocks, double alpha, int b) {
  double best = -1e300;
  std::vector<int> d(blocks.size(), 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i == blocks.size()) {
      if (left == 0) best = std::max(best, value(blocks, d, alpha));
      return;
    }
    for (int k = 0; k <= std::min(left, blocks[i].cap); ++k) {
      d[i] = k;
      rec(i + 1, left - k);
    }
    d[i] = 0;
  };
  rec(0, b);
  return best;
}

}  // namespace

TEST_CASE("demand: single dominant coefficient") {
  const std::vector<CensusBlock> blocks = {block("1", 1.0, 0.0, 5), block("2", 0.5, 0.0, 5)};
  const DemandAllocation a = allocate_ports(blocks, 0.0, 5);
  CHECK(a.d == std::vector<int>{5, 0});
}

TEST_CASE("demand: three-block reference") {
  const std::vector<CensusBlock> blocks = {block("1", 0.2, 0.8, 3), block("2", 0.9, 0.1, 4), block("3", 0.5, 0.5, 2)};
  const DemandAllocation a = allocate_ports(blocks, 0.85, 6);
  CHECK(a.d == std::vector<int>{3, 1, 2});
  CHECK(a.objective_value == doctest::Approx(brute_force(blocks, 0.85, 6)).epsilon(1e-12));
  CHECK(a.objective_value == doctest::Approx(3.35).epsilon(1e-9));
}

TEST_CASE("demand: equals brute force on random instances") {
  std::mt19937 rng(3085);
  std::uniform_int_distribution<int> nb(1, 6), cap(0, 5);
  std::uniform_real_distribution<double> score(0.0, 1.0), alpha_d(0.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    std::vector<CensusBlock> blocks;
    const int n = nb(rng);
    int total = 0;
    for (int i = 0; i < n; ++i) {
      // Coarse scores so ties occur.
      blocks.push_back(block(std::to_string(i + 1), std::round(score(rng) * 4) / 4, std::round(score(rng) * 4) / 4,
                             cap(rng)));
      total += blocks.back().cap;
    }
    const int b = std::uniform_int_distribution<int>(0, std::min(12, total))(rng);
    const double alpha = std::round(alpha_d(rng) * 20) / 20;
    const DemandAllocation a = allocate_ports(blocks, alpha, b);
    CHECK(a.objective_value == doctest::Approx(brute_force(blocks, alpha, b)).epsilon(1e-12));
    long sum = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      CHECK(a.d[i] >= 0);
      CHECK(a.d[i] <= blocks[i].cap);
      sum += a.d[i];
    }
    CHECK(sum == b);
    CHECK(value(blocks, a.d, alpha) == doctest::Approx(a.objective_value).epsilon(1e-12));
    ++checked;
  }
}

TEST_CASE("demand: ties go to the smaller id") {
  const std::vector<CensusBlock> blocks = {block("10", 0.5, 0.5, 3), block("9", 0.5, 0.5, 3), block("2", 0.5, 0.5, 3)};
  const DemandAllocation a = allocate_ports(blocks, 0.5, 4);
  CHECK(a.d == std::vector<int>{0, 1, 3});
  CHECK(block_id_less("9", "10"));
  CHECK(block_id_less("a", "b"));
}

TEST_CASE("demand: equity share grows with alpha") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::vector<CensusBlock> blocks;
  for (int i = 0; i < 8; ++i) blocks.push_back(block(std::to_string(i), score(rng), score(rng), 4));
  double last = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const DemandAllocation a = allocate_ports(blocks, k / 20.0, 13);
    double eq = 0.0;
    for (std::size_t i = 0; i < blocks.size(); ++i) eq += a.d[i] * blocks[i].eps;
    CHECK(eq >= last - 1e-12);
    last = eq;
  }
}

TEST_CASE("demand: shortfall is reported") {
  const std::vector<CensusBlock> blocks = {block("1", 1.0, 1.0, 2), block("2", 1.0, 1.0, 1)};
  try {
    allocate_ports(blocks, 0.5, 5);
    FAIL("expected an infeasibility error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Infeasible);
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
  CHECK(fixture::error_kind([&] { allocate_ports(blocks, 1.5, 1); }).has_value());
}

TEST_CASE("demand: feeder sum") {
  std::vector<CensusBlock> blocks = {block("1", 0.2, 0.8, 3, true), block("2", 0.9, 0.1, 4, false),
                                     block("3", 0.5, 0.5, 2, true)};
  const DemandAllocation a = allocate_ports(blocks, 0.85, 6);
  CHECK(feeder_demand(a, blocks) == 5);
  for (CensusBlock& b : blocks) b.in_feeder = false;
  CHECK(feeder_demand(a, blocks) == 0);
}

TEST_CASE("demand: city-wide budget of 3085 ports") {
  const std::vector<CensusBlock> blocks = load_blocks_csv(fixture::path("../../data/blocks.csv"));
  const DemandAllocation a = allocate_ports(blocks, 0.85, 3085);
  long sum = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    CHECK(a.d[i] <= blocks[i].cap);
    sum += a.d[i];
  }
  CHECK(sum == 3085);
}

TEST_CASE("demand: CSV round trip") {
  const std::vector<CensusBlock> blocks = {block("1", 0.2, 0.8, 3), block("2", 0.9, 0.1, 4)};
  const DemandAllocation a = allocate_ports(blocks, 0.85, 5);
  const auto path = std::filesystem::temp_directory_path() / "gridsite_alloc_test.csv";
  write_allocation_csv(path, blocks, a);
  std::ifstream in(path);
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  CHECK(header == "id,d");
  CHECK(r1 == "1,3");
  CHECK(r2 == "2,2");
  std::filesystem::remove(path);
  CHECK(fixture::error_kind([] { load_blocks_csv("/nonexistent/blocks.csv"); }) == ErrorKind::Io);
}
