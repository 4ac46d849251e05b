#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "gridsite/instance.hpp"
#include "gridsite/miblp.hpp"
#include "gridsite/solver.hpp"

namespace gridsite {

/// Settings shared by every command. Paths in a config file resolve against the file's directory.
struct RunConfig {
  double alpha = 0.85;
  int budget_ports = 0;
  std::optional<int> demand;  // D; taken from the block allocation when unset
  double gamma = 10.0;
  double delta_s = 0.0;  // 0: one charger
  double headroom_threshold = 0.0;
  CostConfig cost;
  SolverConfig solver;
  int workers = 1;
  std::uint32_t seed = 20240611;
  std::filesystem::path feeder, blocks, sites, instance;
  std::filesystem::path out = ".";

  /// Range checks; throws Error(Schema).
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

PresolveMode parse_presolve(const std::string& text);
IntegralityMode parse_integrality(const std::string& text);
std::string to_string(PresolveMode mode);
std::string to_string(IntegralityMode mode);

/// The siting instance a config describes: the instance file when one is named, otherwise feeder,
/// sites and demand (D from the block allocation when not given). Without `need_demand` a missing
/// demand source leaves D = 0.
SitingInstance instance_from_config(const RunConfig& config, bool need_demand = true);

}  // namespace gridsite
