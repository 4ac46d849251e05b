#include "gridsite/solver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <queue>
#include <thread>

#include <nlohmann/json.hpp>

#include "gridsite/error.hpp"

namespace gridsite {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t at(int i) { return static_cast<std::size_t>(i); }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------

AcVerification verify_ac_feasibility(const MinlpProblem& minlp, const std::vector<int>& x, const std::vector<int>& z,
                                     double tol) {
  AcVerification out;
  std::vector<std::string> reasons;
  out.discrete_violation = minlp.discrete_violation(x, z);
  if (out.discrete_violation > 0.0) reasons.push_back("discrete constraints violated");
  out.state = solve_powerflow(*minlp.model, minlp.admittance, minlp.charger_overlay(z));
  if (!out.state.converged()) {
    reasons.push_back("power flow " + to_string(out.state.status));
  } else {
    out.limits = check_limits(*minlp.model, out.state, tol);
    if (!out.limits.voltage.empty()) reasons.push_back("voltage outside band");
    if (!out.limits.thermal.empty()) reasons.push_back("transformer rating exceeded");
    std::string worst;
    out.model_violation = minlp.max_violation(minlp.point_from_state(out.state, x, z), &worst);
    if (out.model_violation > tol && out.limits.ok() && out.discrete_violation <= 0.0)
      reasons.push_back("constraint " + worst + " violated");
  }
  for (const std::string& r : reasons) out.reason += (out.reason.empty() ? "" : "; ") + r;
  out.ok = reasons.empty();
  out.network_ok = out.state.converged() && out.limits.ok() && (out.model_violation <= tol || out.discrete_violation > 0.0);
  return out;
}

// ---------------------------------------------------------------------------

std::optional<Incumbent> local_incumbent(const MinlpProblem& minlp, const Relaxation& relaxation, const Box& box,
                                         int max_checks, double tol) {
  const MiblpProblem& pb = relaxation.problem().problem;
  const std::size_t n = minlp.candidates.size();
  if (n == 0) return std::nullopt;

  std::vector<double> lp_x(n, 0.0);
  const LpResult root = solve_lp(relaxation.build(box, relaxation.siting_objective(), -kInf));
  if (root.status == LpStatus::Infeasible) return std::nullopt;
  if (root.status == LpStatus::Optimal) {
    for (std::size_t c = 0; c < n; ++c) lp_x[c] = root.x[at(pb.cand_vars[c].x)];
  }

  std::vector<int> order(n);
  for (std::size_t c = 0; c < n; ++c) order[c] = static_cast<int>(c);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const bool pa = lp_x[at(a)] > 1e-6, pb2 = lp_x[at(b)] > 1e-6;
    if (pa != pb2) return pa;
    return minlp.candidates.entries[at(a)].weight > minlp.candidates.entries[at(b)].weight;
  });

  std::vector<std::vector<int>> conflicts(n);
  for (const CandidatePair& p : minlp.separation) {
    conflicts[at(p.first)].push_back(p.second);
    conflicts[at(p.second)].push_back(p.first);
  }
  auto allowed = [&](std::size_t c) { return box.upper[at(pb.cand_vars[c].x)] > 0.5; };

  std::vector<char> banned(n, 0);
  int checks = 0;
  while (checks < max_checks) {
    std::vector<int> x(n, 0), z(n, 0);
    double spend = 0.0;
    for (int c : order) {
      const std::size_t cu = at(c);
      if (banned[cu] || !allowed(cu)) continue;
      bool clash = false;
      for (int o : conflicts[cu]) clash = clash || x[at(o)] == 1;
      if (clash) continue;
      const Candidate& cand = minlp.candidates.entries[cu];
      const int zmax = std::min<int>(cand.z_max, static_cast<int>(std::floor(box.upper[at(pb.cand_vars[cu].z)] + 1e-9)));
      int zc = zmax;
      while (zc >= std::max(1, cand.z_min) &&
             spend + cand.land_cost + minlp.cost.charger_cost * zc > minlp.cost.budget * (1.0 + 1e-12))
        --zc;
      if (zc < std::max(1, cand.z_min)) continue;
      x[cu] = 1;
      z[cu] = zc;
      spend += cand.land_cost + minlp.cost.charger_cost * zc;
    }
    long total = 0;
    for (int v : z) total += v;
    if (total < minlp.demand) return std::nullopt;

    // Shed chargers from the lowest-weight sites while the demand allows it.
    while (checks < max_checks) {
      ++checks;
      if (verify_ac_feasibility(minlp, x, z, tol).ok) {
        return Incumbent{x, z, minlp.objective(x, z)};
      }
      int shed = -1;
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t c = at(*it);
        if (x[c] == 1 && z[c] > std::max(1, minlp.candidates.entries[c].z_min)) {
          shed = *it;
          break;
        }
      }
      if (shed < 0 || total - 1 < minlp.demand) break;
      --z[at(shed)];
      --total;
    }
    int drop = -1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (x[at(*it)] == 1) {
        drop = *it;
        break;
      }
    }
    if (drop < 0) return std::nullopt;
    banned[at(drop)] = 1;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string to_string(SbtOutcome outcome) {
  switch (outcome) {
    case SbtOutcome::Converged:
      return "converged";
    case SbtOutcome::SweepLimit:
      return "sweep_limit";
    case SbtOutcome::EmptyRegion:
      return "empty_region";
  }
  return "unknown";
}

namespace {

struct BoundOutcome {
  LpStatus status = LpStatus::Numerical;
  double value = 0.0;  // valid lower bound on the minimum when status is Optimal
};

// Lower bound on min c'x with the site and charger columns integral (small best-first search).
BoundOutcome integer_minimum(LpProblem lp, const std::vector<int>& int_cols, const LpBasis* warm, int node_limit) {
  struct Item {
    double bound;
    std::vector<double> lo, up;
    LpBasis basis;
  };
  auto cmp = [](const Item& a, const Item& b) { return a.bound > b.bound; };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> open(cmp);
  open.push({-kInf, lp.col_lower, lp.col_upper, warm ? *warm : LpBasis{}});
  double best = kInf;
  int nodes = 0;
  while (!open.empty()) {
    Item it = open.top();
    if (it.bound >= best) break;
    if (nodes >= node_limit) return {LpStatus::Optimal, std::min(best, it.bound)};
    open.pop();
    ++nodes;
    lp.col_lower = it.lo;
    lp.col_upper = it.up;
    const LpResult r = solve_lp(lp, {}, it.basis.empty() ? nullptr : &it.basis);
    if (r.status == LpStatus::Infeasible) continue;
    if (r.status != LpStatus::Optimal) return {LpStatus::Optimal, it.bound};
    if (r.objective >= best) continue;
    int branch = -1;
    for (int j : int_cols) {
      if (std::abs(r.x[at(j)] - std::round(r.x[at(j)])) > 1e-6) {
        branch = j;
        break;
      }
    }
    if (branch < 0) {
      best = r.objective;
      continue;
    }
    const double v = r.x[at(branch)];
    Item down{r.objective, it.lo, it.up, r.basis};
    down.up[at(branch)] = std::floor(v);
    Item upi{r.objective, it.lo, it.up, r.basis};
    upi.lo[at(branch)] = std::ceil(v);
    open.push(std::move(down));
    open.push(std::move(upi));
  }
  if (best == kInf && open.empty()) return {LpStatus::Infeasible, 0.0};
  return {LpStatus::Optimal, best};
}

}  // namespace

SbtResult sbt_presolve(const Relaxation& relaxation, const Box& input, double incumbent_objective,
                       const SbtOptions& options) {
  const auto t0 = Clock::now();
  const DecomposedProblem& dp = relaxation.problem();
  SbtResult out;
  out.box = input;
  if (!propagate_bounds(dp, out.box)) {
    out.outcome = SbtOutcome::EmptyRegion;
    out.history.push_back(out.box);
    return out;
  }
  out.history.push_back(out.box);
  for (int f : dp.filtered_vars) out.initial_width += out.box.upper[at(f)] - out.box.lower[at(f)];

  std::vector<int> int_cols;
  for (const CandidateVars& cv : dp.problem.cand_vars) {
    int_cols.push_back(cv.x);
    int_cols.push_back(cv.z);
  }

  struct Task {
    int var;
    double sign;  // +1 minimize, -1 maximize
  };
  const std::size_t nvars = dp.problem.vars.size();
  const int workers = std::max(1, options.threads);
  std::vector<LpBasis> bases(at(workers));

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    std::vector<Task> tasks;
    for (int f : dp.filtered_vars) {
      if (out.box.upper[at(f)] - out.box.lower[at(f)] <= 0.0) continue;
      tasks.push_back({f, 1.0});
      tasks.push_back({f, -1.0});
    }
    const Box start = out.box;
    Box next = out.box;
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> infeasible{false};
    std::atomic<int> solves{0};
    std::mutex merge;

    auto work = [&](int w) {
      std::vector<double> c(nvars, 0.0);
      std::optional<LpSession> session;
      for (std::size_t k = cursor++; k < tasks.size(); k = cursor++) {
        if (infeasible) return;
        const Task t = tasks[k];
        std::fill(c.begin(), c.end(), 0.0);
        c[at(t.var)] = t.sign;
        BoundOutcome r;
        LpBasis* warm = bases[at(w)].empty() ? nullptr : &bases[at(w)];
        if (options.integrality == IntegralityMode::Exact) {
          r = integer_minimum(relaxation.build(start, c, incumbent_objective), int_cols, warm, options.exact_node_limit);
        } else {
          if (!session) session.emplace(relaxation.build(start, c, incumbent_objective));
          const LpResult res = session->solve(c, warm);
          r = {res.status, res.objective};
          if (res.status == LpStatus::Optimal) bases[at(w)] = res.basis;
        }
        ++solves;
        if (r.status == LpStatus::Infeasible) {
          infeasible = true;
          return;
        }
        if (r.status != LpStatus::Optimal) continue;  // keep the previous bound
        std::lock_guard<std::mutex> lock(merge);
        if (t.sign > 0) {
          next.lower[at(t.var)] = std::max(next.lower[at(t.var)], r.value - options.margin);
        } else {
          next.upper[at(t.var)] = std::min(next.upper[at(t.var)], -r.value + options.margin);
        }
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }
    out.lp_solves += solves;

    SbtSweep rec;
    rec.sweep = sweep;
    rec.lp_solves = solves;
    if (infeasible) {
      out.outcome = SbtOutcome::EmptyRegion;
      out.sweeps.push_back(rec);
      break;
    }
    bool crossed = false;
    for (int f : dp.filtered_vars) {
      const double lo = next.lower[at(f)], up = next.upper[at(f)];
      if (lo > up) {
        if (lo - up > 1e-9) crossed = true;
        next.lower[at(f)] = next.upper[at(f)] = 0.5 * (lo + up);
      }
      rec.lower_change += std::pow(next.lower[at(f)] - start.lower[at(f)], 2);
      rec.upper_change += std::pow(start.upper[at(f)] - next.upper[at(f)], 2);
    }
    rec.lower_change = std::sqrt(rec.lower_change);
    rec.upper_change = std::sqrt(rec.upper_change);
    if (crossed || !propagate_bounds(dp, next)) {
      out.outcome = SbtOutcome::EmptyRegion;
      out.sweeps.push_back(rec);
      break;
    }
    for (int f : dp.filtered_vars) rec.total_width += next.upper[at(f)] - next.lower[at(f)];
    out.box = next;
    out.history.push_back(next);
    out.sweeps.push_back(rec);
    if (rec.lower_change <= options.epsilon && rec.upper_change <= options.epsilon) {
      out.outcome = SbtOutcome::Converged;
      break;
    }
    if (sweep == options.max_sweeps) out.outcome = SbtOutcome::SweepLimit;
  }

  // Site and charger columns over the final box; integral bounds round inward.
  if (options.tighten_integers && out.outcome != SbtOutcome::EmptyRegion) {
    Box next = out.box;
    std::vector<double> c(nvars, 0.0);
    LpSession session(relaxation.build(out.box, c, incumbent_objective));
    bool empty = false;
    for (int j : int_cols) {
      for (const double sign : {1.0, -1.0}) {
        if (empty || next.upper[at(j)] - next.lower[at(j)] < 0.5) break;
        std::fill(c.begin(), c.end(), 0.0);
        c[at(j)] = sign;
        const LpResult r = session.solve(c);
        ++out.lp_solves;
        if (r.status == LpStatus::Infeasible) {
          empty = true;
          break;
        }
        if (r.status != LpStatus::Optimal) continue;
        if (sign > 0) {
          next.lower[at(j)] = std::max(next.lower[at(j)], std::ceil(r.objective - 1e-6));
        } else {
          next.upper[at(j)] = std::min(next.upper[at(j)], std::floor(-r.objective + 1e-6));
        }
        if (next.lower[at(j)] > next.upper[at(j)]) empty = true;
      }
    }
    if (empty || !propagate_bounds(dp, next)) {
      out.outcome = SbtOutcome::EmptyRegion;
    } else {
      for (int j : int_cols)
        if (next.lower[at(j)] > out.box.lower[at(j)] || next.upper[at(j)] < out.box.upper[at(j)]) ++out.integer_tightened;
      out.box = next;
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------

double relative_gap(double bound, double incumbent) {
  return std::max(0.0, bound - incumbent) / std::max(1.0, std::abs(incumbent));
}

std::string format_gap(double gap) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", gap);
  return buf;
}

std::string to_string(BnbStatus status) {
  switch (status) {
    case BnbStatus::Optimal:
      return "optimal";
    case BnbStatus::Infeasible:
      return "infeasible";
    case BnbStatus::NodeLimit:
      return "node_limit";
    case BnbStatus::TimeLimit:
      return "time_limit";
  }
  return "unknown";
}

namespace {

struct SearchNode {
  Box box;
  double bound = kInf;
  int depth = 0;
  long id = 0;
  LpBasis basis;
};

struct NodeOrder {
  bool operator()(const SearchNode& a, const SearchNode& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

}  // namespace

BnbResult branch_and_bound(const MinlpProblem& minlp, Relaxation& relaxation, const Box& root,
                           std::optional<Incumbent> start, const BnbConfig& cfg) {
  const auto t0 = Clock::now();
  const DecomposedProblem& dp = relaxation.problem();
  const MiblpProblem& pb = dp.problem;
  const std::size_t ncand = pb.cand_vars.size();
  BnbResult out;
  out.incumbent = std::move(start);

  auto inc_value = [&] { return out.incumbent ? out.incumbent->objective : -kInf; };
  auto prune_level = [&] {
    const double inc = inc_value();
    return inc == -kInf ? -kInf : inc + 0.5 * cfg.gap_tol * std::max(1.0, std::abs(inc));
  };
  auto log = [&](const SearchNode& node, double bound, const std::string& action) {
    if (!cfg.on_node) return;
    const double inc = inc_value();
    cfg.on_node({out.nodes, node.depth, bound, inc, inc == -kInf ? kInf : relative_gap(bound, inc), action});
  };

  std::vector<int> by_weight(ncand);
  for (std::size_t c = 0; c < ncand; ++c) by_weight[c] = static_cast<int>(c);
  std::stable_sort(by_weight.begin(), by_weight.end(),
                   [&](int a, int b) { return pb.weights[at(a)] > pb.weights[at(b)]; });

  std::vector<double> root_width(pb.vars.size());
  for (std::size_t j = 0; j < pb.vars.size(); ++j) root_width[j] = root.upper[j] - root.lower[j];

  std::map<std::vector<int>, bool> verified;
  const std::vector<double> objective = relaxation.siting_objective();

  std::priority_queue<SearchNode, std::vector<SearchNode>, NodeOrder> open;
  long next_id = 0;
  {
    SearchNode r;
    r.box = root;
    r.id = next_id++;
    if (propagate_bounds(dp, r.box)) open.push(std::move(r));
  }

  auto push_child = [&](const SearchNode& parent, Box box, double bound, const LpBasis& basis) {
    if (!propagate_bounds(dp, box)) return;
    SearchNode child;
    child.box = std::move(box);
    child.bound = bound;
    child.depth = parent.depth + 1;
    child.id = next_id++;
    child.basis = basis;
    open.push(std::move(child));
  };

  bool limited = false;
  while (!open.empty()) {
    if (open.top().bound <= prune_level()) {
      open.pop();
      continue;
    }
    if (out.nodes >= cfg.node_limit) {
      out.status = BnbStatus::NodeLimit;
      limited = true;
      break;
    }
    if (seconds_since(t0) > cfg.time_limit) {
      out.status = BnbStatus::TimeLimit;
      limited = true;
      break;
    }
    SearchNode node = open.top();
    open.pop();
    ++out.nodes;

    LpResult res;
    const LpBasis* warm = node.basis.empty() ? nullptr : &node.basis;
    for (int round = 0;; ++round) {
      res = solve_lp(relaxation.build(node.box, objective, -kInf), {}, warm);
      ++out.lp_solves;
      if (res.status != LpStatus::Optimal && warm) {
        res = solve_lp(relaxation.build(node.box, objective, -kInf));
        ++out.lp_solves;
      }
      if (res.status != LpStatus::Optimal) break;
      if (round >= 40 || relaxation.separate(res.x, cfg.cut_tol) == 0) break;
      warm = &res.basis;
    }
    if (res.status == LpStatus::Infeasible) {
      log(node, node.bound, "infeasible");
      continue;
    }
    if (res.status != LpStatus::Optimal) {
      throw Error(ErrorKind::Numerical, "node relaxation ended with status " + to_string(res.status));
    }
    const double bound = std::min(node.bound, -res.objective);
    if (bound <= prune_level()) {
      log(node, bound, "pruned");
      continue;
    }
    const std::vector<double>& pt = res.x;

    // Integrality: sites first by weight, then charger counts.
    int branch_var = -1;
    for (int c : by_weight) {
      const int j = pb.cand_vars[at(c)].x;
      if (std::abs(pt[at(j)] - std::round(pt[at(j)])) > cfg.int_tol) {
        branch_var = j;
        break;
      }
    }
    if (branch_var < 0) {
      for (int c : by_weight) {
        const int j = pb.cand_vars[at(c)].z;
        if (std::abs(pt[at(j)] - std::round(pt[at(j)])) > cfg.int_tol) {
          branch_var = j;
          break;
        }
      }
    }
    if (branch_var >= 0) {
      const double v = pt[at(branch_var)];
      Box down = node.box, up = node.box;
      down.upper[at(branch_var)] = std::floor(v);
      up.lower[at(branch_var)] = std::ceil(v);
      push_child(node, std::move(down), bound, res.basis);
      push_child(node, std::move(up), bound, res.basis);
      log(node, bound, "branch " + pb.vars[at(branch_var)].name);
      continue;
    }

    std::vector<int> x(ncand), z(ncand);
    for (std::size_t c = 0; c < ncand; ++c) {
      x[c] = static_cast<int>(std::lround(pt[at(pb.cand_vars[c].x)]));
      z[c] = static_cast<int>(std::lround(pt[at(pb.cand_vars[c].z)]));
    }
    std::vector<int> key = x;
    key.insert(key.end(), z.begin(), z.end());
    auto found = verified.find(key);
    bool ok;
    if (found != verified.end()) {
      ok = found->second;
    } else {
      ++out.verifications;
      ok = verify_ac_feasibility(minlp, x, z, cfg.verify_tol).ok;
      verified.emplace(key, ok);
    }
    if (ok) {
      const double value = minlp.objective(x, z);
      if (value > inc_value()) out.incumbent = Incumbent{x, z, value};
      log(node, bound, "incumbent");
      continue;
    }

    int term = -1;
    const double viol = max_bilinear_violation(pb, pt, &term);
    int split = -1;
    if (viol > cfg.bilinear_tol && term >= 0) {
      const BilinearTerm& b = pb.bilinear[at(term)];
      double best = 0.0;
      for (int f : {b.left, b.right}) {
        const double w = node.box.upper[at(f)] - node.box.lower[at(f)];
        const double rel = root_width[at(f)] > 0.0 ? w / root_width[at(f)] : 0.0;
        if (w > 1e-12 && rel > best) {
          best = rel;
          split = f;
        }
      }
    }
    if (split >= 0) {
      const double lo = node.box.lower[at(split)], hi = node.box.upper[at(split)];
      const double w = hi - lo;
      const double v = std::clamp(pt[at(split)], lo + 0.2 * w, hi - 0.2 * w);
      Box left = node.box, right = node.box;
      left.upper[at(split)] = v;
      right.lower[at(split)] = v;
      push_child(node, std::move(left), bound, res.basis);
      push_child(node, std::move(right), bound, res.basis);
      log(node, bound, "spatial " + pb.vars[at(split)].name);
      continue;
    }

    // The relaxation point is feasible to tolerance but the network rejects (x, z): exclude that
    // assignment by splitting one charger count around it.
    int open_c = -1;
    for (int c : by_weight) {
      const int j = pb.cand_vars[at(c)].z;
      if (node.box.upper[at(j)] - node.box.lower[at(j)] > 0.5) {
        open_c = c;
        break;
      }
    }
    if (open_c < 0) {
      log(node, bound, "rejected");
      continue;
    }
    const int j = pb.cand_vars[at(open_c)].z;
    const double v = z[at(open_c)];
    Box below = node.box, same = node.box, above = node.box;
    below.upper[at(j)] = v - 1.0;
    same.lower[at(j)] = same.upper[at(j)] = v;
    above.lower[at(j)] = v + 1.0;
    if (below.upper[at(j)] >= below.lower[at(j)]) push_child(node, std::move(below), bound, res.basis);
    push_child(node, std::move(same), bound, res.basis);
    if (above.lower[at(j)] <= above.upper[at(j)]) push_child(node, std::move(above), bound, res.basis);
    log(node, bound, "exclude " + pb.vars[at(j)].name);
  }

  const double inc = inc_value();
  if (limited) {
    double best = inc;
    while (!open.empty()) {
      best = std::max(best, open.top().bound);
      open.pop();
    }
    out.bound = best;
    out.gap = inc == -kInf ? kInf : relative_gap(best, inc);
  } else {
    out.status = out.incumbent ? BnbStatus::Optimal : BnbStatus::Infeasible;
    out.bound = out.incumbent ? inc : -kInf;
    out.gap = 0.0;
  }
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::LimitWithIncumbent:
      return "limit_with_incumbent";
    case SolveStatus::LimitWithoutIncumbent:
      return "limit_without_incumbent";
    case SolveStatus::Infeasible:
      return "infeasible";
  }
  return "unknown";
}

PlacementSolution solve_placement(const MinlpProblem& minlp, const SolverConfig& config) {
  const auto t0 = Clock::now();
  PlacementSolution sol;
  const MiblpProblem lifted = lift_to_miblp(minlp, config.lift);
  const DecomposedProblem dp = filter_and_decompose(lifted, minlp.model->slack);
  sol.num_vars = lifted.num_vars();
  sol.num_bilinear = static_cast<int>(lifted.bilinear.size());
  Relaxation relaxation(dp);
  Box box = dp.problem.bounds();
  if (!propagate_bounds(dp, box)) {
    sol.status = SolveStatus::Infeasible;
    sol.seconds = seconds_since(t0);
    return sol;
  }

  std::optional<Incumbent> start;
  bool proven = false;
  if (config.presolve == PresolveMode::Sbt) {
    start = local_incumbent(minlp, relaxation, box, 24, config.bnb.verify_tol);
    sol.local_incumbent = start.has_value();
    const auto tp = Clock::now();
    // Without an incumbent the objective cut is off.
    sol.sbt = sbt_presolve(relaxation, box, start ? start->objective : -kInf, config.sbt);
    box = sol.sbt->box;
    sol.presolve_seconds = seconds_since(tp);
    if (sol.sbt->outcome == SbtOutcome::EmptyRegion) {
      if (start) {
        proven = true;
      } else {
        sol.status = SolveStatus::Infeasible;
        sol.seconds = seconds_since(t0);
        return sol;
      }
    }
  }

  if (proven) {
    sol.best = start;
    sol.status = SolveStatus::Optimal;
    sol.bound = start->objective;
    sol.gap = 0.0;
  } else {
    const auto tb = Clock::now();
    const BnbResult r = branch_and_bound(minlp, relaxation, box, start, config.bnb);
    sol.solve_seconds = seconds_since(tb);
    sol.best = r.incumbent;
    sol.bound = r.bound;
    sol.gap = r.gap;
    sol.nodes = r.nodes;
    sol.lp_solves = r.lp_solves;
    switch (r.status) {
      case BnbStatus::Optimal:
        sol.status = SolveStatus::Optimal;
        break;
      case BnbStatus::Infeasible:
        sol.status = SolveStatus::Infeasible;
        break;
      default:
        sol.status = r.incumbent ? SolveStatus::LimitWithIncumbent : SolveStatus::LimitWithoutIncumbent;
    }
  }
  if (sol.sbt) sol.lp_solves += sol.sbt->lp_solves;
  if (sol.best) {
    const auto tv = Clock::now();
    sol.verification = verify_ac_feasibility(minlp, sol.best->x, sol.best->z, config.bnb.verify_tol);
    sol.verify_seconds = seconds_since(tv);
  }
  sol.seconds = seconds_since(t0);
  return sol;
}

nlohmann::json state_to_json(const FeederModel& model, const PowerFlowState& state) {
  nlohmann::json out = nlohmann::json::array();
  if (state.v_real.size() != static_cast<std::size_t>(model.num_node_phases())) return out;
  for (int np = 0; np < model.num_node_phases(); ++np) {
    const NodePhase& ref = model.node_phase(np);
    out.push_back({{"node", model.nodes[at(ref.node)].id},
                   {"phase", std::string(1, phase_letter(ref.phase))},
                   {"v_real", state.v_real[at(np)]},
                   {"v_imag", state.v_imag[at(np)]},
                   {"magnitude", state.magnitude(np)}});
  }
  return out;
}

nlohmann::json verification_to_json(const MinlpProblem& minlp, const AcVerification& v) {
  using nlohmann::json;
  const FeederModel& m = *minlp.model;
  json violations = json::array();
  for (const VoltageViolation& e : v.limits.voltage) {
    const NodePhase& ref = m.node_phase(e.np);
    violations.push_back({{"kind", "voltage"},
                          {"node", m.nodes[at(ref.node)].id},
                          {"phase", std::string(1, phase_letter(ref.phase))},
                          {"value", e.magnitude},
                          {"limit", e.limit},
                          {"amount", e.amount}});
  }
  for (const ThermalViolation& e : v.limits.thermal) {
    violations.push_back({{"kind", "thermal"},
                          {"transformer", m.transformers[at(e.transformer)].id},
                          {"phase", std::string(1, phase_letter(e.phase))},
                          {"value", e.current},
                          {"limit", e.rating},
                          {"amount", e.amount}});
  }
  return {{"ok", v.ok},
          {"network_ok", v.network_ok},
          {"reason", v.reason},
          {"discrete_violation", v.discrete_violation},
          {"power_flow", to_string(v.state.status)},
          {"iterations", v.state.iterations},
          {"residual", v.state.residual_norm},
          {"worst_voltage_margin", v.limits.worst_voltage_margin},
          {"worst_thermal_margin", v.limits.worst_thermal_margin},
          {"max_violation", v.model_violation},
          {"violations", violations}};
}

nlohmann::json solution_to_json(const MinlpProblem& minlp, const PlacementSolution& sol) {
  using nlohmann::json;
  json out;
  out["status"] = to_string(sol.status);
  out["nodes"] = sol.nodes;
  out["lp_solves"] = sol.lp_solves;
  out["gap"] = std::isfinite(sol.gap) ? json(sol.gap) : json(nullptr);
  out["gap_text"] = std::isfinite(sol.gap) ? format_gap(sol.gap) : "inf";
  out["bound"] = std::isfinite(sol.bound) ? json(sol.bound) : json(nullptr);
  out["variables"] = sol.num_vars;
  out["bilinear_terms"] = sol.num_bilinear;
  out["local_incumbent"] = sol.local_incumbent;
  if (sol.best) {
    out["objective"] = sol.best->objective;
    json sites = json::array();
    long total = 0;
    double spend = 0.0;
    for (std::size_t c = 0; c < minlp.candidates.size(); ++c) {
      if (sol.best->x[c] == 0) continue;
      const Candidate& cand = minlp.candidates.entries[c];
      total += sol.best->z[c];
      spend += cand.land_cost + minlp.cost.charger_cost * sol.best->z[c];
      sites.push_back({{"node", cand.node},
                       {"phase", std::string(1, phase_letter(cand.phase))},
                       {"chargers", sol.best->z[c]},
                       {"weight", cand.weight},
                       {"latitude", cand.latitude},
                       {"longitude", cand.longitude}});
    }
    out["sites"] = sites;
    out["chargers"] = total;
    out["cost"] = spend;
    out["verification"] = verification_to_json(minlp, sol.verification);
    out["voltages"] = state_to_json(*minlp.model, sol.verification.state);
  } else {
    out["objective"] = nullptr;
  }
  if (sol.sbt) {
    json sweeps = json::array();
    for (const SbtSweep& s : sol.sbt->sweeps) {
      sweeps.push_back({{"sweep", s.sweep},
                        {"lower_change", s.lower_change},
                        {"upper_change", s.upper_change},
                        {"total_width", s.total_width},
                        {"lp_solves", s.lp_solves}});
    }
    out["sbt"] = {{"outcome", to_string(sol.sbt->outcome)},
                  {"initial_width", sol.sbt->initial_width},
                  {"sweeps", sweeps},
                  {"integer_tightened", sol.sbt->integer_tightened},
                  {"lp_solves", sol.sbt->lp_solves}};
  }
  return out;
}

}  // namespace gridsite
