#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gridsite {

struct CensusBlock {
  std::string id;
  double mu = 0.0;   // near-term demand score
  double eps = 0.0;  // equity need score
  int cap = 0;       // port capacity
  double latitude = 0.0;
  double longitude = 0.0;
  bool in_feeder = false;
};

struct DemandAllocation {
  std::vector<int> d;  // ports per block, same order as the input blocks
  double objective_value = 0.0;
  double alpha = 0.0;
  int budget_ports = 0;
};

/// Maximizes sum d_i [(1 - alpha) mu_i + alpha eps_i] subject to d_i <= cap_i and sum d_i = b.
/// Greedy fill in descending coefficient order is exact for this box-plus-cardinality structure;
/// ties go to the smaller block id. Throws Error(Infeasible) carrying the shortfall when sum cap < b.
DemandAllocation allocate_ports(const std::vector<CensusBlock>& blocks, double alpha, int budget_ports);

/// Sum of allocated ports over blocks flagged as inside the feeder.
int feeder_demand(const DemandAllocation& allocation, const std::vector<CensusBlock>& blocks);

/// Block CSV with header `id,mu,eps,cap,lat,lon,in_feeder`.
std::vector<CensusBlock> load_blocks_csv(const std::filesystem::path& path);
void write_allocation_csv(const std::filesystem::path& path, const std::vector<CensusBlock>& blocks,
                          const DemandAllocation& allocation);

/// Orders ids numerically when both parse as integers, lexicographically otherwise.
bool block_id_less(const std::string& a, const std::string& b);

}  // namespace gridsite
