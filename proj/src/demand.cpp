#include "gridsite/demand.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "csv.hpp"
#include "gridsite/error.hpp"

namespace gridsite {

bool block_id_less(const std::string& a, const std::string& b) {
  long ia = 0;
  long ib = 0;
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), ia);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), ib);
  const bool na = ra.ec == std::errc{} && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc{} && rb.ptr == b.data() + b.size();
  if (na && nb && ia != ib) return ia < ib;
  return a < b;
}

DemandAllocation allocate_ports(const std::vector<CensusBlock>& blocks, double alpha, int budget_ports) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Schema, "alpha must lie in [0, 1]");
  if (budget_ports < 0) throw Error(ErrorKind::Schema, "port budget must be non-negative");
  long total_cap = 0;
  for (const CensusBlock& b : blocks) {
    if (b.cap < 0) throw Error(ErrorKind::Schema, "block " + b.id + " has negative capacity");
    if (!(b.mu >= 0.0 && b.mu <= 1.0) || !(b.eps >= 0.0 && b.eps <= 1.0))
      throw Error(ErrorKind::Schema, "block " + b.id + " has a score outside [0, 1]");
    total_cap += b.cap;
  }
  if (total_cap < budget_ports) {
    throw Error(ErrorKind::Infeasible, "port budget exceeds total block capacity by " +
                                           std::to_string(budget_ports - total_cap) + " ports");
  }

  std::vector<double> coef(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) coef[i] = (1.0 - alpha) * blocks[i].mu + alpha * blocks[i].eps;
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (coef[a] != coef[b]) return coef[a] > coef[b];
    return block_id_less(blocks[a].id, blocks[b].id);
  });

  DemandAllocation out;
  out.alpha = alpha;
  out.budget_ports = budget_ports;
  out.d.assign(blocks.size(), 0);
  int remaining = budget_ports;
  for (std::size_t i : order) {
    if (remaining == 0) break;
    const int take = std::min(remaining, blocks[i].cap);
    out.d[i] = take;
    remaining -= take;
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) out.objective_value += out.d[i] * coef[i];
  return out;
}

int feeder_demand(const DemandAllocation& allocation, const std::vector<CensusBlock>& blocks) {
  if (allocation.d.size() != blocks.size()) throw Error(ErrorKind::Schema, "allocation does not match block list");
  int total = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].in_feeder) total += allocation.d[i];
  }
  return total;
}

std::vector<CensusBlock> load_blocks_csv(const std::filesystem::path& path) {
  const auto table = detail::CsvTable::read(path);
  std::vector<CensusBlock> blocks;
  blocks.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    CensusBlock b;
    b.id = table.cell(r, "id");
    b.mu = table.number(r, "mu");
    b.eps = table.number(r, "eps");
    b.cap = static_cast<int>(table.integer(r, "cap"));
    b.latitude = table.number(r, "lat");
    b.longitude = table.number(r, "lon");
    const std::string& flag = table.cell(r, "in_feeder");
    if (flag == "1" || flag == "true") {
      b.in_feeder = true;
    } else if (flag == "0" || flag == "false") {
      b.in_feeder = false;
    } else {
      throw Error(ErrorKind::Schema, path.string() + ": in_feeder must be 0/1 or true/false");
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

void write_allocation_csv(const std::filesystem::path& path, const std::vector<CensusBlock>& blocks,
                          const DemandAllocation& allocation) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "id,d\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) out << blocks[i].id << ',' << allocation.d[i] << '\n';
}

}  // namespace gridsite
