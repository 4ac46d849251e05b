#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsite/config.hpp"
#include "gridsite/demand.hpp"
#include "gridsite/error.hpp"
#include "gridsite/instance.hpp"
#include "gridsite/report.hpp"
#include "gridsite/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridsite;

namespace {

enum Exit { kOk = 0, kOther = 1, kLimit = 2, kInfeasible = 3, kInput = 4, kLimitNoIncumbent = 5 };

struct Overrides {
  std::string config;
  std::optional<std::uint32_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::optional<double> alpha;
  std::optional<int> budget_ports;
  std::optional<int> demand;
  std::optional<double> budget;
  std::optional<double> radius;
  std::optional<double> gamma;
  std::optional<double> headroom;
  std::optional<std::string> presolve;
  std::optional<std::string> integrality;
  std::optional<double> gap_tol;
  std::optional<double> epsilon;
  std::optional<int> max_sweeps;
  std::optional<long> node_limit;
  std::optional<double> time_limit;
  std::optional<std::string> feeder, blocks, sites, instance;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--workers", o.workers, "worker threads; 1 gives byte-identical output");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--feeder", o.feeder, "feeder JSON");
  cmd->add_option("--blocks", o.blocks, "census block CSV");
  cmd->add_option("--sites", o.sites, "site catalog CSV");
  cmd->add_option("--instance", o.instance, "instance JSON (feeder, sites and settings in one file)");
  cmd->add_option("--alpha", o.alpha, "equity weight of the demand allocation");
  cmd->add_option("--budget-ports", o.budget_ports, "ports to allocate over the blocks");
  cmd->add_option("--demand", o.demand, "charger demand D, skipping the allocation");
  cmd->add_option("--headroom", o.headroom, "transformer headroom threshold, pu");
  cmd->add_option("--gamma", o.gamma, "limit-violation penalty of the impact index");
}

void add_solver(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--budget", o.budget, "total budget");
  cmd->add_option("--radius", o.radius, "service radius in meters");
  cmd->add_option("--presolve", o.presolve, "sbt or none");
  cmd->add_option("--integrality", o.integrality, "relaxed or exact SBT subproblems");
  cmd->add_option("--gap-tol", o.gap_tol, "relative gap tolerance");
  cmd->add_option("--epsilon", o.epsilon, "SBT convergence tolerance");
  cmd->add_option("--max-sweeps", o.max_sweeps, "SBT sweep limit");
  cmd->add_option("--node-limit", o.node_limit, "branch and bound node limit");
  cmd->add_option("--time-limit", o.time_limit, "branch and bound time limit, seconds");
}

fs::path flag_path(const std::string& text) { return fs::absolute(fs::path(text)); }

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = flag_path(*o.out);
  if (o.alpha) c.alpha = *o.alpha;
  if (o.budget_ports) c.budget_ports = *o.budget_ports;
  if (o.demand) c.demand = *o.demand;
  if (o.budget) c.cost.budget = *o.budget;
  if (o.radius) c.cost.service_radius_m = *o.radius;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.headroom) c.headroom_threshold = *o.headroom;
  if (o.presolve) c.solver.presolve = parse_presolve(*o.presolve);
  if (o.integrality) c.solver.sbt.integrality = parse_integrality(*o.integrality);
  if (o.gap_tol) c.solver.bnb.gap_tol = *o.gap_tol;
  if (o.epsilon) c.solver.sbt.epsilon = *o.epsilon;
  if (o.max_sweeps) c.solver.sbt.max_sweeps = *o.max_sweeps;
  if (o.node_limit) c.solver.bnb.node_limit = *o.node_limit;
  if (o.time_limit) c.solver.bnb.time_limit = *o.time_limit;
  if (o.feeder) c.feeder = flag_path(*o.feeder);
  if (o.blocks) c.blocks = flag_path(*o.blocks);
  if (o.sites) c.sites = flag_path(*o.sites);
  if (o.instance) c.instance = flag_path(*o.instance);
  c.solver.sbt.threads = c.workers;
  c.validate();
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + c.out.string() + ": " + ec.message());
  return c;
}

// Instance-level settings given on the command line beat the instance file.
SitingInstance resolve_instance(const RunConfig& c, const Overrides& o, bool need_demand) {
  SitingInstance inst = instance_from_config(c, need_demand);
  if (!c.instance.empty()) {
    if (o.budget) inst.cost.budget = *o.budget;
    if (o.radius) inst.cost.service_radius_m = *o.radius;
    if (o.gamma) inst.gamma = *o.gamma;
    if (o.headroom) inst.headroom_threshold = *o.headroom;
  }
  inst.cost.validate();
  return inst;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
}

int cmd_demand(const Overrides& o) {
  const RunConfig c = resolve(o);
  if (c.blocks.empty()) throw Error(ErrorKind::Schema, "demand needs a blocks file (--blocks)");
  const std::vector<CensusBlock> blocks = load_blocks_csv(c.blocks);
  const DemandAllocation alloc = allocate_ports(blocks, c.alpha, c.budget_ports);
  write_allocation_csv(c.out / "allocation.csv", blocks, alloc);
  long total = 0;
  for (int d : alloc.d) total += d;
  std::printf("allocated %ld ports over %zu blocks, objective %.6f\n", total, blocks.size(), alloc.objective_value);
  std::printf("D = %d\n", feeder_demand(alloc, blocks));
  return kOk;
}

int cmd_prioritize(const Overrides& o) {
  const RunConfig c = resolve(o);
  const SitingInstance inst = resolve_instance(c, o, false);
  const PreparedInstance prep = prepare_instance(inst, c.workers);
  write_text(c.out / "candidates.csv", candidates_csv(prep.candidates));
  write_text(c.out / "candidates.geojson", dump(candidates_geojson(prep.candidates, {}, {})));
  std::printf("%zu candidates ranked", prep.candidates.size());
  if (prep.dropped) std::printf(", %zu dropped after a diverged perturbation", prep.dropped);
  std::printf("\n");
  return kOk;
}

int cmd_solve(const Overrides& o, const std::string& node_log, bool dump_problem) {
  RunConfig c = resolve(o);
  const SitingInstance inst = resolve_instance(c, o, true);
  const PreparedInstance prep = prepare_instance(inst, c.workers);
  const MinlpProblem minlp = instance_problem(inst, prep);

  std::string log = "node,depth,bound,incumbent,gap,action\n";
  if (!node_log.empty()) {
    c.solver.bnb.on_node = [&log](const NodeLogEntry& e) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%ld,%d,%.10g,%.10g,%.6g,", e.node, e.depth, e.bound, e.incumbent, e.gap);
      log += buf + e.action + "\n";
    };
  }
  if (dump_problem) write_text(c.out / "problem.json", dump(problem_dump(lift_to_miblp(minlp, c.solver.lift))));

  const PlacementSolution sol = solve_placement(minlp, c.solver);
  write_text(c.out / "solution.json", dump(solution_to_json(minlp, sol)));
  const std::vector<int> none;
  write_text(c.out / "solution.geojson", dump(candidates_geojson(minlp.candidates, sol.best ? sol.best->x : none,
                                                                 sol.best ? sol.best->z : none)));
  write_text(c.out / "timings.json", dump({{"presolve_s", sol.presolve_seconds},
                                           {"solve_s", sol.solve_seconds},
                                           {"verify_s", sol.verify_seconds},
                                           {"total_s", sol.seconds}}));
  if (!node_log.empty()) write_text(node_log, log);

  std::printf("status %s\n", to_string(sol.status).c_str());
  if (sol.best) {
    int stations = 0, chargers = 0;
    for (std::size_t i = 0; i < sol.best->x.size(); ++i) {
      stations += sol.best->x[i];
      chargers += sol.best->z[i];
    }
    std::printf("objective %.6f  gap %s  nodes %ld  stations %d  chargers %d  verified %s\n", sol.best->objective,
                format_gap(sol.gap).c_str(), sol.nodes, stations, chargers, sol.verification.ok ? "yes" : "no");
    if (!sol.verification.ok) {
      std::fprintf(stderr, "verification failed: %s\n", sol.verification.reason.c_str());
      return kInfeasible;
    }
  }
  switch (sol.status) {
    case SolveStatus::Optimal:
      return kOk;
    case SolveStatus::LimitWithIncumbent:
      return kLimit;
    case SolveStatus::LimitWithoutIncumbent:
      return kLimitNoIncumbent;
    case SolveStatus::Infeasible:
      return kInfeasible;
  }
  return kOther;
}

int cmd_verify(const Overrides& o, const std::string& solution_path) {
  const RunConfig c = resolve(o);
  const SitingInstance inst = resolve_instance(c, o, true);
  const PreparedInstance prep = prepare_instance(inst, c.workers);
  const MinlpProblem minlp = instance_problem(inst, prep);
  std::vector<int> x, z;
  placement_vectors(minlp, placement_from_json(read_json(solution_path)), x, z);
  const AcVerification v = verify_ac_feasibility(minlp, x, z, c.solver.bnb.verify_tol);
  json report = verification_to_json(minlp, v);
  report["objective"] = minlp.objective(x, z);
  write_text(c.out / "verification.json", dump(report));
  // The verdict is AC feasibility; broken siting rules are reported alongside.
  if (v.network_ok) {
    std::printf("pass  objective %.6f  worst voltage margin %.6g  worst thermal margin %.6g\n", minlp.objective(x, z),
                v.limits.worst_voltage_margin, v.limits.worst_thermal_margin);
    if (!v.ok) std::printf("note  %s\n", v.reason.c_str());
    return kOk;
  }
  std::printf("fail  %s\n", v.reason.c_str());
  for (const json& e : report["violations"]) {
    const std::string where = e.contains("node") ? e["node"].get<std::string>() : e["transformer"].get<std::string>();
    std::printf("  %s %s/%s value %.6g limit %.6g\n", e["kind"].get<std::string>().c_str(), where.c_str(),
                e["phase"].get<std::string>().c_str(), e["value"].get<double>(), e["limit"].get<double>());
  }
  return kInfeasible;
}

std::vector<SitingInstance> suite_from_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::Io, "no instance files in " + dir.string());
  std::vector<SitingInstance> out;
  for (const fs::path& f : files) {
    out.push_back(load_instance(f));
    if (out.back().name.empty()) out.back().name = f.stem().string();
  }
  return out;
}

int cmd_bench(const Overrides& o, const std::string& suite_dir, int count) {
  const RunConfig c = resolve(o);
  std::vector<SitingInstance> suite;
  if (!suite_dir.empty()) {
    suite = suite_from_dir(suite_dir);
  } else {
    SuiteOptions opts;
    opts.count = count;
    opts.seed = c.seed;
    suite = generate_suite(opts);
  }
  std::vector<BenchRow> rows;
  for (const SitingInstance& inst : suite) {
    for (BenchRow& r : bench_instance(inst, c.solver, c.workers)) rows.push_back(std::move(r));
    const BenchRow& raw = rows[rows.size() - 2];
    const BenchRow& pre = rows.back();
    std::printf("%-10s raw %-8s %6ld nodes   sbt %-8s %6ld nodes\n", inst.name.c_str(), raw.status.c_str(), raw.nodes,
                pre.status.c_str(), pre.nodes);
  }
  write_text(c.out / "bench.csv", bench_csv(rows));
  const NodeRatioSummary s = node_ratios(rows);
  std::printf("%zu rows; node ratio S-MIBLP/MIBLP over %zu instances: median %.4f, largest reduction %.1f%%\n",
              rows.size(), s.ratios.size(), s.median, 100.0 * s.best_reduction);
  std::vector<double> sorted = s.ratios;
  std::sort(sorted.begin(), sorted.end());
  std::printf("distribution:");
  for (double r : sorted) std::printf(" %.3f", r);
  std::printf("\n");
  bool clean = true;
  for (const BenchRow& r : rows) clean = clean && r.status == "optimal" && r.verified;
  return clean ? kOk : kLimit;
}

int cmd_generate(const Overrides& o, int count) {
  const RunConfig c = resolve(o);
  SuiteOptions opts;
  opts.count = count;
  opts.seed = c.seed;
  const std::vector<SitingInstance> suite = generate_suite(opts);
  for (const SitingInstance& inst : suite) save_instance(inst, c.out / (inst.name + ".json"));
  std::printf("wrote %zu instances to %s\n", suite.size(), c.out.string().c_str());
  return kOk;
}

int exit_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Infeasible:
      return kInfeasible;
    case ErrorKind::Numerical:
      return kOther;
    default:
      return kInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridsite: EV charger siting on three-phase feeders"};
  app.require_subcommand(1);
  Overrides o;
  std::string solution_path, node_log, suite_dir;
  bool dump_problem = false;
  int count = 20;

  CLI::App* demand = app.add_subcommand("demand", "allocate ports over census blocks and report D");
  add_common(demand, o);
  CLI::App* prioritize = app.add_subcommand("prioritize", "rank candidate sites by grid impact");
  add_common(prioritize, o);
  CLI::App* solve = app.add_subcommand("solve", "site chargers and certify the placement");
  add_common(solve, o);
  add_solver(solve, o);
  solve->add_option("--node-log", node_log, "write the branch and bound log as CSV");
  solve->add_flag("--dump-problem", dump_problem, "write the lifted problem as problem.json");
  CLI::App* verify = app.add_subcommand("verify", "re-verify a stored solution against the feeder");
  add_common(verify, o);
  add_solver(verify, o);
  verify->add_option("--solution", solution_path, "solution JSON")->required();
  CLI::App* bench = app.add_subcommand("bench", "solve a suite with and without presolve");
  add_common(bench, o);
  add_solver(bench, o);
  bench->add_option("--suite", suite_dir, "directory of instance files; generated when omitted");
  bench->add_option("--count", count, "instances to generate");
  CLI::App* generate = app.add_subcommand("generate-suite", "write a random instance suite");
  add_common(generate, o);
  generate->add_option("--count", count, "instances to generate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*demand) return cmd_demand(o);
    if (*prioritize) return cmd_prioritize(o);
    if (*solve) return cmd_solve(o, node_log, dump_problem);
    if (*verify) return cmd_verify(o, solution_path);
    if (*bench) return cmd_bench(o, suite_dir, count);
    if (*generate) return cmd_generate(o, count);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
