#include "gridsite/candidates.hpp"

#include <algorithm>
#include <cmath>

#include "csv.hpp"
#include "gridsite/error.hpp"

namespace gridsite {

CandidateSet CandidateSet::usable_only() const {
  CandidateSet out;
  for (const Candidate& c : entries) {
    if (c.usable) out.entries.push_back(c);
  }
  return out;
}

const SiteSpec* SiteCatalog::find(const std::string& node, Phase phase) const {
  for (const SiteSpec& s : sites) {
    if (s.node == node && s.phase == phase) return &s;
  }
  return nullptr;
}

SiteCatalog load_sites_csv(const std::filesystem::path& path) {
  const auto table = detail::CsvTable::read(path);
  SiteCatalog cat;
  cat.listed_only = true;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    SiteSpec s;
    s.node = table.cell(r, "node");
    s.phase = parse_phase(table.cell(r, "phase"));
    s.land_cost = table.number(r, "land_cost");
    s.z_min = table.has_column("z_min") ? static_cast<int>(table.integer(r, "z_min")) : 1;
    s.z_max = static_cast<int>(table.integer(r, "z_max"));
    if (s.z_min < 0 || s.z_max < s.z_min) {
      throw Error(ErrorKind::Schema, path.string() + ": site " + s.node + " needs 0 <= z_min <= z_max");
    }
    if (s.land_cost < 0.0) throw Error(ErrorKind::Schema, path.string() + ": negative land cost");
    cat.sites.push_back(std::move(s));
  }
  return cat;
}

CandidateSelection select_candidates(const FeederModel& model, const PowerFlowState& base_state,
                                     double headroom_threshold, const SiteCatalog& catalog) {
  if (!base_state.converged()) throw Error(ErrorKind::Numerical, "candidate selection needs a converged base state");
  for (const SiteSpec& s : catalog.sites) {
    if (model.np_index(s.node, s.phase) < 0) {
      throw Error(ErrorKind::Reference, "site " + s.node + "." + phase_letter(s.phase) + " is not in the feeder");
    }
  }

  CandidateSelection out;
  for (int np = 0; np < model.num_node_phases(); ++np) {
    const NodePhase& ref = model.node_phase(np);
    const Node& node = model.nodes[static_cast<std::size_t>(ref.node)];
    const SiteSpec* spec = catalog.find(node.id, ref.phase);
    if (catalog.listed_only && spec == nullptr) continue;
    if (model.load_at(np).first <= 0.0) continue;

    const int t = model.upstream_transformer(ref.node);
    if (t < 0) continue;
    const Transformer& tx = model.transformers[static_cast<std::size_t>(t)];
    const auto slot = std::find(tx.phases.begin(), tx.phases.end(), ref.phase);
    if (slot == tx.phases.end()) continue;
    const double loading =
        std::abs(transformer_current(model, tx, static_cast<std::size_t>(slot - tx.phases.begin()), base_state));
    const double headroom = tx.i_rated - loading;
    if (!(headroom > 0.0) || headroom < headroom_threshold) continue;

    Candidate c;
    c.node = node.id;
    c.phase = ref.phase;
    c.np = np;
    c.latitude = node.latitude;
    c.longitude = node.longitude;
    c.land_cost = spec ? spec->land_cost : catalog.default_land_cost;
    c.z_min = spec ? spec->z_min : catalog.default_z_min;
    c.z_max = spec ? spec->z_max : catalog.default_z_max;
    out.set.entries.push_back(std::move(c));
  }
  out.status = out.set.empty() ? SelectionStatus::Empty : SelectionStatus::Ok;
  return out;
}

}  // namespace gridsite
