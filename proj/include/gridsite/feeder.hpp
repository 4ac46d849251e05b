#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json_fwd.hpp>

namespace gridsite {

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

char phase_letter(Phase p);
Phase parse_phase(std::string_view text);

/// Earth mean radius used by all great-circle computations, in meters.
inline constexpr double kEarthRadiusMeters = 6371000.0;

/// Great-circle distance between two points given in decimal degrees (haversine form).
double haversine_distance(double lat1, double lon1, double lat2, double lon2);

struct BaseValues {
  double s_base_kva = 100.0;  // per-phase apparent power base
  double v_base_kv = 7.2;     // line-to-neutral voltage base
};

struct Node {
  std::string id;
  std::vector<Phase> phases;
  double latitude = 0.0;
  double longitude = 0.0;
  double v_min = 0.95;
  double v_max = 1.05;

  bool has_phase(Phase p) const;
};

/// Series branch with a phase-coupled admittance block; g/b are indexed in `phases` order.
struct Line {
  std::string id;
  std::string from;
  std::string to;
  std::vector<Phase> phases;
  std::vector<std::vector<double>> g;
  std::vector<std::vector<double>> b;
};

/// Per-phase series admittance with a thermal current limit.
struct Transformer {
  std::string id;
  std::string from;
  std::string to;
  std::vector<Phase> phases;
  std::vector<double> g;
  std::vector<double> b;
  double i_rated = 0.0;
};

struct Load {
  std::string node;
  Phase phase = Phase::A;
  double p = 0.0;
  double q = 0.0;
};

struct SlackSource {
  std::string node;
  double v_nominal = 1.0;
  std::array<double, 3> angles{0.0, -2.0943951023931957, 2.0943951023931957};
};

/// (node, phase) pair resolved to a dense index.
struct NodePhase {
  int node = -1;
  Phase phase = Phase::A;
};

class FeederModel {
 public:
  BaseValues base;
  std::vector<Node> nodes;
  std::vector<Line> lines;
  std::vector<Transformer> transformers;
  std::vector<Load> loads;
  SlackSource slack;

  /// Checks every invariant and builds the lookup tables. Throws gridsite::Error.
  void finalize();

  int node_index(std::string_view id) const;  // -1 if absent
  /// Dense index of (node, phase), or -1 if the phase is not present at that node.
  int np_index(int node, Phase p) const;
  int np_index(std::string_view node_id, Phase p) const;
  int num_node_phases() const { return static_cast<int>(np_list_.size()); }
  const NodePhase& node_phase(int idx) const { return np_list_[static_cast<std::size_t>(idx)]; }
  int slack_node() const { return slack_node_; }
  bool is_slack(int np) const { return np_list_[static_cast<std::size_t>(np)].node == slack_node_; }

  /// Nearest transformer on the path from the slack bus, or -1 when the node is fed directly.
  int upstream_transformer(int node) const { return upstream_tx_[static_cast<std::size_t>(node)]; }

  /// Aggregate constant-power demand (p, q) at a node-phase.
  std::pair<double, double> load_at(int np) const;

  /// Nominal complex voltage V_k angle(theta_p) used for flat starts and deviation splitting.
  std::pair<double, double> nominal_voltage(int np) const;

 private:
  std::unordered_map<std::string, int> node_lookup_;
  std::vector<std::array<int, 3>> np_of_node_;
  std::vector<NodePhase> np_list_;
  std::vector<int> upstream_tx_;
  std::vector<double> load_p_;
  std::vector<double> load_q_;
  int slack_node_ = -1;
};

FeederModel feeder_from_json(const nlohmann::json& doc);
nlohmann::json feeder_to_json(const FeederModel& model);
FeederModel load_feeder(const std::filesystem::path& path);
void save_feeder(const FeederModel& model, const std::filesystem::path& path);

/// Nodal admittance over node-phase indices: I_line = (G + jB) V.
struct Admittance {
  Eigen::SparseMatrix<double> g;
  Eigen::SparseMatrix<double> b;
};

Admittance assemble_admittance(const FeederModel& model);

/// Per-phase series admittance of transformer `t` on phase slot `k` as (g, b).
std::pair<double, double> transformer_admittance(const Transformer& t, std::size_t k);

}  // namespace gridsite
