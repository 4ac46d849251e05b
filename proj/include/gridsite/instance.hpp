#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridsite/acpf.hpp"
#include "gridsite/candidates.hpp"
#include "gridsite/feeder.hpp"
#include "gridsite/miblp.hpp"
#include "gridsite/priority.hpp"

namespace gridsite {

/// Everything needed to pose one siting problem.
struct SitingInstance {
  std::string name;
  FeederModel feeder;
  SiteCatalog sites;
  int demand = 0;
  CostConfig cost;
  double headroom_threshold = 0.0;
  double gamma = 10.0;
  double delta_s = 0.0;  // perturbation size in pu; 0 means one charger
};

/// Perturbation settings of an instance.
GiConfig instance_gi(const SitingInstance& inst);

SitingInstance instance_from_json(const nlohmann::json& doc);
nlohmann::json instance_to_json(const SitingInstance& inst);
SitingInstance load_instance(const std::filesystem::path& path);
void save_instance(const SitingInstance& inst, const std::filesystem::path& path);

struct PreparedInstance {
  PowerFlowState base_state;
  CandidateSet candidates;  // prioritized, unusable entries removed
  std::size_t dropped = 0;  // candidates removed for a diverged perturbation study
};

/// Base power flow, candidate selection and prioritization. Throws Error(Numerical) when the base
/// case does not converge and Error(Infeasible) when no candidate qualifies.
PreparedInstance prepare_instance(const SitingInstance& inst, int workers = 1);

/// The siting model over the prepared candidates; `inst` must outlive the result.
MinlpProblem instance_problem(const SitingInstance& inst, const PreparedInstance& prepared);

struct SuiteOptions {
  int count = 20;
  std::uint32_t seed = 20240611;
  int min_nodes = 4;
  int max_nodes = 7;
  int min_sites = 2;
  int max_sites = 4;
  int max_chargers = 3;
};

/// Random radial feeders behind a service transformer, each with a siting problem that is known to
/// admit at least one network-feasible placement.
std::vector<SitingInstance> generate_suite(const SuiteOptions& options);

}  // namespace gridsite
