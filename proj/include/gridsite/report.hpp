#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridsite/candidates.hpp"
#include "gridsite/instance.hpp"
#include "gridsite/solver.hpp"

namespace gridsite {

/// Candidates ranked by weight (ties keep feeder order), header `node,phase,f_v,f_c,f_g,weight`.
std::string candidates_csv(const CandidateSet& candidates);

/// Variable table, linear rows as (row, col, coef) triplets, bilinear registry, current limits and
/// objective of a lifted problem.
nlohmann::json problem_dump(const MiblpProblem& problem);

/// Point features with properties {node, phase, weight, selected, chargers}. `x` and `z` may be
/// empty when nothing is placed.
nlohmann::json candidates_geojson(const CandidateSet& candidates, const std::vector<int>& x, const std::vector<int>& z);

struct SitePlacement {
  std::string node;
  Phase phase = Phase::A;
  int chargers = 0;
};

/// Sites listed in a solution report; a report without sites is the empty placement.
std::vector<SitePlacement> placement_from_json(const nlohmann::json& solution);

/// (x, z) over the problem's candidates. Throws Error(Reference) for a site that is not a candidate.
void placement_vectors(const MinlpProblem& minlp, const std::vector<SitePlacement>& sites, std::vector<int>& x,
                       std::vector<int>& z);

struct BenchRow {
  std::string instance;
  std::string approach;  // "MIBLP" (raw) or "S-MIBLP" (presolved)
  std::string status;
  std::optional<double> objective;
  double bound = 0.0;
  double gap = 0.0;
  long nodes = 0;
  long lp_solves = 0;
  double seconds = 0.0;
  int stations = 0;
  int chargers = 0;
  int sbt_sweeps = 0;
  bool verified = false;
  bool limit = false;
  std::string error;
};

/// Solves `inst` raw and presolved under the same limits. Failures become rows with `error` set.
std::vector<BenchRow> bench_instance(const SitingInstance& inst, const SolverConfig& config, int workers = 1);

/// Header `case,approach,objective,time_s,sbnb_nodes,gap_pct,total_evcs,total_chargers` followed by
/// `status,limit,verified,bound,lp_solves,sbt_sweeps,error`.
std::string bench_csv(const std::vector<BenchRow>& rows);

struct NodeRatioSummary {
  std::vector<double> ratios;  // presolved / raw node counts, one per instance with both rows optimal
  double median = 0.0;
  double best_reduction = 0.0;  // largest 1 - ratio
};

NodeRatioSummary node_ratios(const std::vector<BenchRow>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gridsite
