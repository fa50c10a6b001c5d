#pragma once

// JSON configuration, CSV/JSON outputs and the replay hash.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>  // vendored nlohmann/json

#include "uamsim/engine.hpp"
#include "uamsim/error.hpp"
#include "uamsim/metrics.hpp"
#include "uamsim/scenario.hpp"

namespace uam::io {

using nlohmann::json;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Fixed-point text with `digits` decimals; "-0.000" is printed as "0.000".
inline std::string num(double v, int digits = 3) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  std::string s(buf, end);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

// ---- configuration -------------------------------------------------------

inline json region_json(const RegionId& id) { return json::array({id.layer, id.q, id.r}); }

inline RegionId region_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::config, "region ids are [layer, q, r]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

inline json zone_json(const Zone& z) {
  if (z.kind == Zone::Kind::region) return {{"region", region_json(z.region)}};
  return {{"disc", {z.center.x, z.center.y, z.radius}}};
}

inline Zone zone_from(const json& j) {
  if (j.contains("region")) return Zone::of_region(region_from(j.at("region")));
  const auto& d = j.at("disc");
  return Zone::disc({d.at(0).get<double>(), d.at(1).get<double>()}, d.at(2).get<double>());
}

inline json to_json(const ScenarioConfig& s) {
  json net;
  net["layers"] = s.network.layer_altitudes;
  net["circumradius"] = s.network.circumradius;
  if (s.network.bounds.kind == Bounds::Kind::hexagon) {
    net["bounds"] = {{"hexagon", s.network.bounds.hex_radius}};
  } else if (s.network.bounds.kind == Bounds::Kind::parallelogram) {
    net["bounds"] = {{"parallelogram", {s.network.bounds.cols, s.network.bounds.rows}}};
  } else {
    const auto& b = s.network.bounds;
    net["bounds"] = {{"rectangle", {b.xmin, b.xmax, b.ymin, b.ymax}}};
  }
  net["tubes"] = json::array();
  for (const auto& t : s.network.tubes) net["tubes"].push_back({{"q", t.q}, {"r", t.r}, {"lower_layer", t.lower_layer}});
  net["n_cr"] = s.network.defaults.n_cr;
  net["v_max_region"] = s.network.defaults.v_max_region;

  json flows = json::array();
  for (const auto& f : s.demand.flows) {
    flows.push_back({{"origin", zone_json(f.origin)},
                     {"destination", zone_json(f.destination)},
                     {"rate", {{"breakpoints", f.rate.breakpoints}, {"rates", f.rate.rates}}},
                     {"z", {f.z_min, f.z_max}}});
  }
  json closures = json::array();
  for (const auto& c : s.closures) closures.push_back({{"region", region_json(c.region)}, {"start", c.start}, {"end", c.end}});
  json nofly = json::array();
  for (const auto& n : s.nofly) {
    json poly = json::array();
    for (const auto& v : n.polygon) poly.push_back({v.x, v.y});
    json e = {{"polygon", poly}, {"mode", n.mode == NoFlyMode::full_cell ? "full_cell" : "subcell"}};
    if (n.layer) e["layer"] = *n.layer;
    nofly.push_back(e);
  }
  return {{"name", s.name},
          {"network", net},
          {"flows", flows},
          {"closures", closures},
          {"nofly", nofly},
          {"mode", to_string(s.mode)},
          {"horizon", s.horizon},
          {"zone", {{"center", {s.zone.center.x, s.zone.center.y}}, {"radius", s.zone.radius}}}};
}

inline GuidanceMode mode_from(const std::string& m) {
  if (m == "proposed") return GuidanceMode::proposed;
  if (m == "baseline") return GuidanceMode::baseline;
  throw Error(Errc::config, "unknown mode '" + m + "'");
}

inline CorridorKind corridor_from(const std::string& k) {
  if (k == "plus") return CorridorKind::plus;
  if (k == "hash") return CorridorKind::hash;
  if (k == "star") return CorridorKind::star;
  throw Error(Errc::config, "unknown corridor kind '" + k + "'");
}

inline AltitudeMode altitude_from(const std::string& a) {
  if (a == "flat") return AltitudeMode::flat;
  if (a == "thin") return AltitudeMode::thin;
  if (a == "thick") return AltitudeMode::thick;
  throw Error(Errc::config, "unknown altitude mode '" + a + "'");
}

/// Preset by name ("plus", "hash", "star", "two-layer", "nofly") with the
/// preset's own knobs taken from `j` when present.
inline ScenarioConfig preset_from(const std::string& name, const json& j, std::uint64_t seed) {
  if (name == "two-layer") {
    return two_layer_scenario(j.value("rate", 0.05), j.value("horizon", 3000.0), seed);
  }
  if (name == "nofly") {
    return nofly_scenario(j.value("rate", 0.03), j.value("closure_start", 2400.0), j.value("closure_end", 3000.0),
                          j.value("horizon", 3600.0), seed);
  }
  CorridorOptions opt;
  opt.altitude = altitude_from(j.value("altitude", std::string("flat")));
  opt.rate_per_direction = j.value("rate", opt.rate_per_direction);
  opt.sweep = j.value("sweep", opt.sweep);
  opt.horizon = j.value("horizon", opt.horizon);
  opt.endpoint_distance = j.value("endpoint_distance", opt.endpoint_distance);
  opt.endpoint_radius = j.value("endpoint_radius", opt.endpoint_radius);
  opt.hex_radius = j.value("hex_radius", opt.hex_radius);
  opt.seed = seed;
  return corridor_scenario(corridor_from(name), opt);
}

/// Scenario from JSON: an optional "preset" gives the starting point and
/// any explicit section replaces the preset's.
inline ScenarioConfig scenario_from(const json& j, std::uint64_t seed) {
  ScenarioConfig s;
  if (j.contains("preset")) s = preset_from(j.at("preset").get<std::string>(), j, seed);
  if (j.contains("name")) s.name = j.at("name").get<std::string>();
  if (j.contains("network")) {
    const auto& n = j.at("network");
    s.network.layer_altitudes = n.value("layers", s.network.layer_altitudes);
    s.network.circumradius = n.value("circumradius", s.network.circumradius);
    if (n.contains("bounds")) {
      const auto& b = n.at("bounds");
      if (b.contains("hexagon")) {
        s.network.bounds = Bounds::hexagon(b.at("hexagon").get<int>());
      } else if (b.contains("parallelogram")) {
        s.network.bounds = Bounds::parallelogram(b.at("parallelogram").at(0), b.at("parallelogram").at(1));
      } else {
        const auto& r = b.at("rectangle");
        s.network.bounds = Bounds::rectangle(r.at(0), r.at(1), r.at(2), r.at(3));
      }
    }
    if (n.contains("tubes")) {
      s.network.tubes.clear();
      for (const auto& t : n.at("tubes")) s.network.tubes.push_back({t.at("q"), t.at("r"), t.value("lower_layer", 0)});
    }
    s.network.defaults.n_cr = n.value("n_cr", s.network.defaults.n_cr);
    s.network.defaults.v_max_region = n.value("v_max_region", s.network.defaults.v_max_region);
  }
  if (j.contains("flows")) {
    s.demand.flows.clear();
    for (const auto& f : j.at("flows")) {
      Flow flow;
      flow.origin = zone_from(f.at("origin"));
      flow.destination = zone_from(f.at("destination"));
      const auto& r = f.at("rate");
      if (r.is_number()) {
        flow.rate = RateProfile::constant(r.get<double>());
      } else {
        flow.rate.breakpoints = r.at("breakpoints").get<std::vector<double>>();
        flow.rate.rates = r.at("rates").get<std::vector<double>>();
      }
      if (f.contains("z")) {
        flow.z_min = f.at("z").at(0);
        flow.z_max = f.at("z").at(1);
      }
      s.demand.flows.push_back(flow);
    }
  }
  if (j.contains("closures")) {
    s.closures.clear();
    std::optional<AirspaceNetwork> probe;
    for (const auto& c : j.at("closures")) {
      ClosureSpec spec;
      if (c.contains("label")) {
        if (!probe) probe = AirspaceNetwork::build(s.network);
        spec.region = probe->region_by_label(c.at("label").get<int>());
      } else {
        spec.region = region_from(c.at("region"));
      }
      spec.start = c.at("start");
      spec.end = c.at("end");
      s.closures.push_back(spec);
    }
  }
  if (j.contains("nofly")) {
    s.nofly.clear();
    for (const auto& n : j.at("nofly")) {
      PolygonNoFly p;
      for (const auto& v : n.at("polygon")) p.polygon.push_back({v.at(0), v.at(1)});
      const std::string mode = n.value("mode", std::string("full_cell"));
      if (mode != "full_cell" && mode != "subcell") throw Error(Errc::config, "unknown no-fly mode '" + mode + "'");
      p.mode = mode == "subcell" ? NoFlyMode::subcell : NoFlyMode::full_cell;
      if (n.contains("layer")) p.layer = n.at("layer").get<int>();
      s.nofly.push_back(p);
    }
  }
  if (j.contains("mode")) s.mode = mode_from(j.at("mode"));
  s.horizon = j.value("horizon", s.horizon);
  if (j.contains("zone")) {
    const auto& z = j.at("zone");
    if (z.contains("center")) s.zone.center = {z.at("center").at(0), z.at("center").at(1)};
    s.zone.radius = z.value("radius", s.zone.radius);
  }
  s.demand.seed = seed;
  return s;
}

inline json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"scenario", to_json(c.scenario)},
          {"planner",
           {{"prediction_step", c.planner.prediction_step},
            {"arrival_epsilon", c.planner.arrival_epsilon},
            {"region_leg_length", c.planner.region_leg_length},
            {"max_candidates", c.planner.max_candidates},
            {"exhaustive_budget", c.planner.exhaustive_budget}}},
          {"integrator",
           {{"dt", c.integrator.dt},
            {"omega_clamp", c.integrator.omega_clamp},
            {"waypoint_threshold", c.integrator.waypoint_threshold}}},
          {"avoidance",
           {{"horizon", c.avoidance.horizon},
            {"fallback", c.avoidance.fallback},
            {"sidestep_deg", c.avoidance.sidestep_deg}}},
          {"replan", {{"period", c.replan.period}, {"on_spawn", c.replan.on_spawn}, {"on_closure", c.replan.on_closure}}},
          {"aircraft",
           {{"safety_radius", c.aircraft.safety_radius},
            {"detection_radius", c.aircraft.detection_radius},
            {"v_max", c.aircraft.v_max},
            {"control_gain", c.aircraft.control_gain}}},
          {"energy", {{"hover_kw", c.energy.hover_kw}, {"drag_kw_s2_per_m2", c.energy.drag_kw_s2_per_m2}}},
          {"mfd_window", c.mfd_window},
          {"heatmap_window", c.heatmap_window}};
}

inline RunConfig run_config_from(const json& j) {
  try {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.scenario = scenario_from(j.value("scenario", json::object()), c.seed);
    c.planner.region_leg_length = std::sqrt(3.0) * c.scenario.network.circumradius;
    if (j.contains("planner")) {
      const auto& p = j.at("planner");
      c.planner.prediction_step = p.value("prediction_step", c.planner.prediction_step);
      c.planner.arrival_epsilon = p.value("arrival_epsilon", c.planner.arrival_epsilon);
      c.planner.region_leg_length = p.value("region_leg_length", c.planner.region_leg_length);
      c.planner.max_candidates = p.value("max_candidates", c.planner.max_candidates);
      c.planner.exhaustive_budget = p.value("exhaustive_budget", c.planner.exhaustive_budget);
    }
    if (j.contains("integrator")) {
      const auto& p = j.at("integrator");
      c.integrator.dt = p.value("dt", c.integrator.dt);
      c.integrator.omega_clamp = p.value("omega_clamp", c.integrator.omega_clamp);
      c.integrator.waypoint_threshold = p.value("waypoint_threshold", c.integrator.waypoint_threshold);
    }
    if (j.contains("avoidance")) {
      const auto& p = j.at("avoidance");
      c.avoidance.horizon = p.value("horizon", c.avoidance.horizon);
      c.avoidance.fallback = p.value("fallback", c.avoidance.fallback);
      c.avoidance.sidestep_deg = p.value("sidestep_deg", c.avoidance.sidestep_deg);
    }
    if (j.contains("replan")) {
      const auto& p = j.at("replan");
      c.replan.period = p.value("period", c.replan.period);
      c.replan.on_spawn = p.value("on_spawn", c.replan.on_spawn);
      c.replan.on_closure = p.value("on_closure", c.replan.on_closure);
    }
    if (j.contains("aircraft")) {
      const auto& p = j.at("aircraft");
      c.aircraft.safety_radius = p.value("safety_radius", c.aircraft.safety_radius);
      c.aircraft.detection_radius = p.value("detection_radius", c.aircraft.detection_radius);
      c.aircraft.v_max = p.value("v_max", c.aircraft.v_max);
      c.aircraft.control_gain = p.value("control_gain", c.aircraft.control_gain);
    }
    if (j.contains("energy")) {
      const auto& p = j.at("energy");
      c.energy.hover_kw = p.value("hover_kw", c.energy.hover_kw);
      c.energy.drag_kw_s2_per_m2 = p.value("drag_kw_s2_per_m2", c.energy.drag_kw_s2_per_m2);
    }
    c.mfd_window = j.value("mfd_window", c.mfd_window);
    c.heatmap_window = j.value("heatmap_window", c.heatmap_window);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(Errc::config, e.what());
  }
}

inline json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::io, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::config, p.string() + ": " + e.what());
  }
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

// ---- outputs -------------------------------------------------------------

inline const char* phase_text(const LogRecord& r) {
  if (r.phase == Phase::arrived) return "arrived";
  return r.held ? "held" : "enroute";
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, const std::string& hash,
                                 std::uint64_t seed) {
  os << "# config_hash=" << hash << " seed=" << seed << '\n';
  os << "t,id,x,y,z,vx,vy,vz,layer,q,r,phase\n";
  for (const auto& r : log.records) {
    os << num(r.t, 1) << ',' << r.id << ',' << num(r.position.x) << ',' << num(r.position.y) << ','
       << num(r.position.z) << ',' << num(r.velocity.x) << ',' << num(r.velocity.y) << ',' << num(r.velocity.z)
       << ',' << r.region.layer << ',' << r.region.q << ',' << r.region.r << ',' << phase_text(r) << '\n';
  }
}

/// Parses a trajectory CSV back into records (trips are not recoverable
/// from the CSV and are left empty).
inline TrajectoryLog read_trajectory_csv(std::istream& is) {
  TrajectoryLog log;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "t,id,x,y,z,vx,vy,vz,layer,q,r,phase") throw Error(Errc::io, "unexpected trajectory header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 12) throw Error(Errc::io, "line " + std::to_string(line_no) + ": expected 12 fields");
    LogRecord r;
    try {
      r.t = std::stod(f[0]);
      r.id = std::stoi(f[1]);
      r.position = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      r.velocity = {std::stod(f[5]), std::stod(f[6]), std::stod(f[7])};
      r.region = {std::stoi(f[8]), std::stoi(f[9]), std::stoi(f[10])};
    } catch (const std::exception&) {
      throw Error(Errc::io, "line " + std::to_string(line_no) + ": malformed number");
    }
    r.phase = f[11] == "arrived" ? Phase::arrived : Phase::enroute;
    r.held = f[11] == "held";
    log.records.push_back(r);
  }
  if (log.records.size() >= 2) {
    for (const auto& r : log.records) {
      if (r.t > log.records.front().t) {
        log.dt = r.t - log.records.front().t;
        break;
      }
    }
  }
  return log;
}

inline void write_mfd_csv(std::ostream& os, std::span<const MfdSample> samples) {
  os << "window_start,accumulation,outflow,density,flow\n";
  for (const auto& s : samples) {
    os << num(s.window_start, 1) << ',' << num(s.accumulation, 6) << ',' << num(s.outflow, 6) << ','
       << num(s.density, 6) << ',' << num(s.flow, 6) << '\n';
  }
}

inline std::vector<MfdSample> read_mfd_csv(std::istream& is) {
  std::vector<MfdSample> out;
  std::string line;
  std::getline(is, line);
  if (line != "window_start,accumulation,outflow,density,flow") throw Error(Errc::io, "unexpected MFD header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> v;
    try {
      for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw Error(Errc::io, "malformed MFD row: " + line);
    }
    if (v.size() != 5) throw Error(Errc::io, "MFD rows have 5 fields");
    MfdSample s;
    s.window_start = v[0];
    s.accumulation = v[1];
    s.outflow = v[2];
    s.density = v[3];
    s.flow = v[4];
    out.push_back(s);
  }
  return out;
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct RunSummary {
  std::vector<MfdSample> mfd;
  json metrics;
  json fit;
};

/// Metrics, MFD samples and the fit report for a finished simulation.
inline RunSummary summarize(const Simulation& sim, const std::string& hash) {
  const auto& cfg = sim.config();
  const auto& log = sim.log();
  const auto& st = sim.stats();
  RunSummary out;
  const auto& zone = cfg.scenario.zone;
  out.mfd = mfd_samples(
      log, [&](const Vec3& p) { return zone.contains(p); }, zone.area_km2(), cfg.mfd_window, cfg.scenario.horizon);

  const double horizon = cfg.scenario.horizon;
  out.metrics = {
      {"config_hash", hash},
      {"seed", cfg.seed},
      {"scenario", cfg.scenario.name},
      {"mode", to_string(cfg.scenario.mode)},
      {"horizon", horizon},
      {"spawned", st.spawned},
      {"completed", st.completed},
      {"active_at_end", sim.active_count()},
      {"held_at_end", sim.held_count()},
      {"avg_min_separation_m", optional_json(min_separation_stats(log))},
      {"avg_travel_speed_mps", optional_json(avg_travel_speed(log))},
      {"trip_completion_rate_per_s", horizon > 0.0 ? json(trip_completion_rate(log, 0.0, horizon)) : json(nullptr)},
      {"energy_per_trip_kwh", optional_json(energy_per_trip(log, cfg.energy))},
      {"replans", st.replans},
      {"planner_evaluations", st.planner_evaluations},
      {"infeasible_commands", st.infeasible_commands},
      {"conservation_violations", st.conservation_violations},
      {"closure_transit_records", st.closure_transit_records},
      {"closure_violations", st.closure_violations},
      {"max_concurrent", st.max_concurrent},
      {"deferred_spawn_ticks", st.deferred_spawn_ticks},
  };

  try {
    const FitParams fit = fit_mfd(out.mfd);
    const CapacityMetrics cap = capacity_metrics(fit, zone.area_km2(), out.mfd);
    out.fit = {{"alpha", fit.alpha},
               {"beta", fit.beta},
               {"n_cr", fit.n_cr},
               {"residual", fit.residual},
               {"critical_point", {fit.n_cr, fit.critical_flow()}},
               {"start_residuals", fit.start_residuals},
               {"k_jam", cap.k_jam},
               {"k_jam_lower_bound", cap.k_jam_lower_bound},
               {"k_cr", cap.k_cr},
               {"q_cr", cap.q_cr}};
  } catch (const Error& e) {
    out.fit = {{"error", to_string(e.code())}, {"message", e.what()}};
  }
  return out;
}

inline void write_heatmap_csv(std::ostream& os, const Simulation& sim) {
  os << "window_start,label,layer,q,r,accumulation\n";
  for (const auto& [start, regions] : sim.heatmap()) {
    for (const auto& [id, acc] : regions) {
      os << num(start, 1) << ',' << sim.network().label_of(id) << ',' << id.layer << ',' << id.q << ',' << id.r
         << ',' << num(acc, 6) << '\n';
    }
  }
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(Errc::io, "write failed for " + p.string());
}

/// Runs nothing; writes every output of a finished simulation into `dir`.
inline void write_bundle(const std::filesystem::path& dir, const Simulation& sim) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  const std::string hash = config_hash(sim.config());
  const RunSummary summary = summarize(sim, hash);

  std::ostringstream traj;
  write_trajectory_csv(traj, sim.log(), hash, sim.config().seed);
  write_file(dir / "trajectory.csv", traj.str());
  write_file(dir / "metrics.json", summary.metrics.dump(2) + "\n");
  std::ostringstream mfd;
  write_mfd_csv(mfd, summary.mfd);
  write_file(dir / "mfd.csv", mfd.str());
  json fit = summary.fit;
  fit["config_hash"] = hash;
  fit["seed"] = sim.config().seed;
  write_file(dir / "fit.json", fit.dump(2) + "\n");
  std::ostringstream heat;
  write_heatmap_csv(heat, sim);
  write_file(dir / "accumulation.csv", heat.str());
  const json manifest = {{"config_hash", hash},
                         {"seed", sim.config().seed},
                         {"config", to_json(sim.config())},
                         {"files", {"trajectory.csv", "metrics.json", "mfd.csv", "fit.json", "accumulation.csv"}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace uam::io
