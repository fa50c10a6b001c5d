// uamsim: run, plan, fit-mfd, compare and validate from the command line.
// Exit codes: 0 success, 1 validation found broken invariants, 2 config
// error, 3 runtime error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uamsim/uamsim.hpp"

using namespace uam;
using io::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string scenario = "file";
  std::string out;
  bool verbose_orca = false;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load(const Options& o) {
  try {
    json j = o.config.empty() ? json::object() : io::read_json(o.config);
    if (o.scenario != "file") {
      j["scenario"]["preset"] = o.scenario;
    } else if (o.config.empty()) {
      throw Error(Errc::config, "--scenario file needs --config");
    }
    if (o.seed) j["seed"] = *o.seed;
    if (!o.mode.empty()) j["scenario"]["mode"] = o.mode;
    return io::run_config_from(j);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void emit(const Options& o, const std::string& file, const json& j) {
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    io::write_file(fs::path(o.out) / file, j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
}

Simulation simulate(const RunConfig& c, const Options& o, const fs::path& dir) {
  Simulation sim(c);
  std::unique_ptr<std::ofstream> dump;
  if (o.verbose_orca) {
    if (dir.empty()) {
      sim.set_orca_dump(&std::cerr);
    } else {
      fs::create_directories(dir);
      dump = std::make_unique<std::ofstream>(dir / "orca.jsonl");
      sim.set_orca_dump(dump.get());
    }
  }
  sim.run();
  sim.set_orca_dump(nullptr);
  if (!dir.empty()) io::write_bundle(dir, sim);
  return sim;
}

int cmd_run(const Options& o) {
  const RunConfig c = load(o);
  const Simulation sim = simulate(c, o, o.out);
  std::cout << io::summarize(sim, io::config_hash(c)).metrics.dump(2) << "\n";
  return 0;
}

int cmd_plan(const Options& o, double window, bool exhaustive) {
  RunConfig c = load(o);
  c.scenario.demand.seed = c.seed;
  const AirspaceNetwork net = c.scenario.build_network();
  const auto events = generate_demand(c.scenario.demand, std::min(window, c.scenario.horizon), net);
  const auto graph = net.routing_graph(0.0);
  std::vector<CandidateSet> sets;
  for (const auto& e : events) {
    sets.push_back(candidate_paths(graph, e.origin, e.destination, net, static_cast<int>(c.planner.max_candidates),
                                   static_cast<int>(sets.size())));
  }
  const auto approx = approx_optimal_paths(sets, c.planner, net);
  const auto predicted = predict_trajectories(approx.decision.paths, c.planner, net);

  json report = {{"config_hash", io::config_hash(c)}, {"seed", c.seed},          {"window", window},
                 {"aircraft", sets.size()},           {"fast_cost", approx.cost}, {"evaluations", approx.evaluations}};
  json rows = json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Path& p = approx.decision.paths[i];
    const double cost = path_cost(predicted[i], p.origin(), p.destination());
    total += cost;
    json labels = json::array();
    for (const auto& r : p.pass_by) labels.push_back(net.label_of(r));
    rows.push_back({{"id", i},
                    {"candidates", sets[i].paths.size()},
                    {"choice", approx.decision.choice[i]},
                    {"pass_by", labels},
                    {"length_m", p.length()},
                    {"predicted_cost_s", cost}});
  }
  report["predicted_cost"] = total;
  report["paths"] = rows;
  if (exhaustive) {
    try {
      const auto best = exhaustive_optimal_paths(sets, c.planner, net);
      report["exhaustive"] = {{"fast_cost", best.cost}, {"evaluations", best.evaluations}, {"ratio", approx.cost / best.cost}};
    } catch (const Error& e) {
      report["exhaustive"] = {{"error", to_string(e.code())}, {"message", e.what()}};
    }
  }
  emit(o, "plan.json", report);
  return 0;
}

int cmd_fit(const Options& o, const std::string& samples, double area) {
  std::ifstream in(samples);
  if (!in) throw Error(Errc::io, "cannot open " + samples);
  const auto s = io::read_mfd_csv(in);
  const FitParams f = fit_mfd(s);
  const CapacityMetrics cap = capacity_metrics(f, area, s);
  emit(o, "fit.json",
       {{"alpha", f.alpha},
        {"beta", f.beta},
        {"n_cr", f.n_cr},
        {"residual", f.residual},
        {"critical_point", {f.n_cr, f.critical_flow()}},
        {"k_jam", cap.k_jam},
        {"k_jam_lower_bound", cap.k_jam_lower_bound},
        {"k_cr", cap.k_cr},
        {"q_cr", cap.q_cr}});
  return 0;
}

int cmd_compare(const Options& o) {
  RunConfig c = load(o);
  std::map<std::string, json> metrics;
  for (const auto mode : {GuidanceMode::proposed, GuidanceMode::baseline}) {
    c.scenario.mode = mode;
    const fs::path dir = o.out.empty() ? fs::path() : fs::path(o.out) / to_string(mode);
    const Simulation sim = simulate(c, o, dir);
    metrics[to_string(mode)] = io::summarize(sim, io::config_hash(c)).metrics;
  }
  const std::vector<std::pair<const char*, bool>> keys{{"avg_min_separation_m", false},
                                                       {"avg_travel_speed_mps", false},
                                                       {"trip_completion_rate_per_s", false},
                                                       {"energy_per_trip_kwh", true},
                                                       {"completed", false}};
  json rows = json::array();
  for (const auto& [key, lower] : keys) {
    const json& p = metrics["proposed"].at(key);
    const json& b = metrics["baseline"].at(key);
    std::string better = "n/a";
    if (p.is_number() && b.is_number()) {
      const double x = p.get<double>(), y = b.get<double>();
      better = x == y ? "tie" : ((x < y) == lower ? "proposed" : "baseline");
    }
    rows.push_back({{"metric", key}, {"proposed", p}, {"baseline", b}, {"better", better}});
  }
  emit(o, "compare.json", {{"seed", c.seed}, {"scenario", c.scenario.name}, {"metrics", rows}});
  return 0;
}

// Invariants a trajectory log must satisfy on its own.
int cmd_validate(const Options& o, const std::string& path, double v_max, double separation) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  const TrajectoryLog log = io::read_trajectory_csv(in);
  long unordered = 0, duplicates = 0, overspeed = 0, vanished = 0, after_arrival = 0, reappeared = 0;
  std::set<int> arrived;
  std::map<int, double> last_seen;
  std::vector<double> nearest;
  const auto ticks = log.ticks();
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    const auto [b, e] = ticks[k];
    const double t = log.records[b].t;
    if (k > 0 && t < log.records[ticks[k - 1].first].t) ++unordered;
    std::set<int> ids;
    for (std::size_t i = b; i < e; ++i) {
      const auto& r = log.records[i];
      if (!ids.insert(r.id).second) ++duplicates;
      if (arrived.contains(r.id)) ++after_arrival;
      if (norm(r.velocity) > v_max + 1e-3) ++overspeed;
      const auto seen = last_seen.find(r.id);
      if (seen != last_seen.end() && t - seen->second > log.dt + 1e-6) ++reappeared;
      last_seen[r.id] = t;
      if (r.phase == Phase::arrived) arrived.insert(r.id);
      if (r.phase != Phase::enroute) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = b; j < e; ++j) {
        if (j != i) best = std::min(best, distance(r.position, log.records[j].position));
      }
      if (std::isfinite(best)) nearest.push_back(best);
    }
  }
  const double end = ticks.empty() ? 0.0 : log.records[ticks.back().first].t;
  for (const auto& [id, t] : last_seen) {
    if (!arrived.contains(id) && t < end - 1e-6) ++vanished;
  }
  const auto safe = std::count_if(nearest.begin(), nearest.end(), [&](double d) { return d >= separation; });
  const long broken = unordered + duplicates + overspeed + vanished + after_arrival + reappeared;
  emit(o, "validate.json",
       {{"records", log.records.size()},
        {"aircraft", last_seen.size()},
        {"arrived", arrived.size()},
        {"time_order_breaks", unordered},
        {"duplicate_ids_in_tick", duplicates},
        {"over_speed_records", overspeed},
        {"records_after_arrival", after_arrival},
        {"gaps_in_presence", reappeared},
        {"vanished_aircraft", vanished},
        {"separation_m", separation},
        {"separation_share", nearest.empty() ? json(nullptr) : json(double(safe) / double(nearest.size()))},
        {"min_nearest_m", nearest.empty() ? json(nullptr) : json(*std::min_element(nearest.begin(), nearest.end()))},
        {"ok", broken == 0}});
  return broken == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Urban air mobility traffic simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "random seed, overrides the config");
  app.add_option("--mode", o.mode, "guidance mode")->check(CLI::IsMember({"proposed", "baseline"}));
  app.add_option("--scenario", o.scenario, "preset scenario, or 'file' to take it from --config")
      ->check(CLI::IsMember({"plus", "hash", "star", "two-layer", "nofly", "file"}));
  app.add_option("--out", o.out, "output directory");
  app.add_flag("--verbose-orca", o.verbose_orca, "dump avoidance constraints as JSON lines");

  auto* run = app.add_subcommand("run", "simulate to the horizon and write the output bundle");
  auto* plan = app.add_subcommand("plan", "route the demand of the first window jointly and print a cost report");
  double window = 60.0;
  bool exhaustive = false;
  plan->add_option("--window", window, "plan spawns in [0, window) seconds")->check(CLI::PositiveNumber);
  plan->add_flag("--exhaustive", exhaustive, "also run the exhaustive search when within budget");
  auto* fit = app.add_subcommand("fit-mfd", "fit the MFD to a samples CSV");
  std::string samples;
  double area = MeasurementZone{}.area_km2();
  fit->add_option("samples", samples, "mfd.csv")->required();
  fit->add_option("--area", area, "measurement zone area, km^2")->check(CLI::PositiveNumber);
  auto* compare = app.add_subcommand("compare", "paired proposed/baseline run with a directional report");
  auto* validate = app.add_subcommand("validate", "check the invariants of a trajectory CSV");
  std::string trajectory;
  double v_max = AircraftDefaults{}.v_max;
  double separation = 2.0 * AircraftDefaults{}.safety_radius;
  validate->add_option("trajectory", trajectory, "trajectory.csv")->required();
  validate->add_option("--v-max", v_max, "speed bound, m/s")->check(CLI::PositiveNumber);
  validate->add_option("--separation", separation, "separation distance, m")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(o);
    if (*plan) return cmd_plan(o, window, exhaustive);
    if (*fit) return cmd_fit(o, samples, area);
    if (*compare) return cmd_compare(o);
    if (*validate) return cmd_validate(o, trajectory, v_max, separation);
  } catch (const ConfigError& e) {
    std::cerr << "uamsim: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "uamsim: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
