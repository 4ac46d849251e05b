#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridsite/acpf.hpp"
#include "gridsite/feeder.hpp"

namespace gridsite {

/// One (node, phase) siting option with its cost data, charger bounds and impact indices.
struct Candidate {
  std::string node;
  Phase phase = Phase::A;
  int np = -1;
  double land_cost = 0.0;
  int z_min = 1;
  int z_max = 1;
  double latitude = 0.0;
  double longitude = 0.0;
  double f_v = 0.0;
  double f_c = 0.0;
  double f_g = 0.0;
  double weight = 0.0;
  bool usable = true;  // false when the perturbation power flow diverged
};

struct CandidateSet {
  std::vector<Candidate> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  /// Drops entries flagged unusable.
  CandidateSet usable_only() const;
};

struct SiteSpec {
  std::string node;
  Phase phase = Phase::A;
  double land_cost = 0.0;
  int z_min = 1;
  int z_max = 1;
};

/// Land costs and charger bounds per site, with defaults for unlisted sites.
struct SiteCatalog {
  double default_land_cost = 0.0;
  int default_z_min = 1;
  int default_z_max = 3;
  bool listed_only = false;  // restrict candidates to the listed sites
  std::vector<SiteSpec> sites;

  const SiteSpec* find(const std::string& node, Phase phase) const;
};

/// Site CSV with header `node,phase,land_cost,z_min,z_max`; listed_only is set.
SiteCatalog load_sites_csv(const std::filesystem::path& path);

enum class SelectionStatus { Ok, Empty };

struct CandidateSelection {
  CandidateSet set;
  SelectionStatus status = SelectionStatus::Ok;
};

/// Load-bearing node-phases whose nearest upstream transformer still has at least `headroom_threshold`
/// (and strictly positive) current margin on that phase in the base state.
CandidateSelection select_candidates(const FeederModel& model, const PowerFlowState& base_state,
                                     double headroom_threshold, const SiteCatalog& catalog);

}  // namespace gridsite
