#pragma once

// Discrete-time simulation loop. Each tick: apply closures, inject spawns,
// re-plan when triggered, snapshot, compute every avoidance command from
// the snapshot, integrate in id order, retire arrivals, log.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/flightdyn.hpp"
#include "uamsim/hexspace.hpp"
#include "uamsim/metrics.hpp"
#include "uamsim/orca.hpp"
#include "uamsim/routeplan.hpp"
#include "uamsim/scenario.hpp"

namespace uam {

struct ReplanPolicy {
  double period = 60.0;  // s
  bool on_spawn = true;
  bool on_closure = true;
};

struct AircraftDefaults {
  double safety_radius = 50.0;
  double detection_radius = 200.0;
  double v_max = 20.0;
  double control_gain = 5.0;
};

struct RunConfig {
  ScenarioConfig scenario;
  PlannerConfig planner;
  IntegratorConfig integrator;
  AvoidanceConfig avoidance;
  ReplanPolicy replan;
  AircraftDefaults aircraft;
  EnergyModel energy;
  double mfd_window = 60.0;      // s
  double heatmap_window = 300.0; // s
  std::uint64_t seed = 1;

  void validate() const {
    scenario.validate();
    planner.validate();
    integrator.validate();
    if (!(avoidance.horizon > 0.0)) throw Error(Errc::config, "avoidance horizon must be positive");
    if (!(replan.period > 0.0)) throw Error(Errc::config, "re-plan period must be positive");
    if (!(aircraft.safety_radius > 0.0) || !(aircraft.detection_radius > aircraft.safety_radius)) {
      throw Error(Errc::config, "need 0 < safety radius < detection radius");
    }
    if (!(aircraft.v_max >= 0.0) || !(aircraft.control_gain > 0.0)) {
      throw Error(Errc::config, "v_max must be non-negative and control gain positive");
    }
    if (!(mfd_window >= integrator.dt) || !(heatmap_window >= integrator.dt)) {
      throw Error(Errc::config, "aggregation windows must span at least one step");
    }
  }
};

/// Re-plan when the period has elapsed since the last plan, or on a spawn
/// batch / closure change if the policy asks for it.
inline bool replan_trigger(double clock, std::optional<double> last_plan, bool spawned, bool closure_toggled,
                           const ReplanPolicy& policy) {
  if (!last_plan || clock - *last_plan >= policy.period - 1e-9) return true;
  return (spawned && policy.on_spawn) || (closure_toggled && policy.on_closure);
}

struct Aircraft {
  AircraftBody body;
  Vec3 destination;
  int flow = 0;
  bool held = false;  // no route to the destination at the last plan
};

struct RunStats {
  long spawned = 0;
  long completed = 0;
  long deferred_spawn_ticks = 0;
  long replans = 0;
  std::uint64_t planner_evaluations = 0;
  long infeasible_commands = 0;
  long conservation_violations = 0;
  long closure_transit_records = 0;  // inside a closed region within one period of onset
  long closure_violations = 0;       // inside a closed region later than that
  long max_concurrent = 0;
  long ticks = 0;
};

class Simulation {
 public:
  explicit Simulation(RunConfig cfg)
      : cfg_(std::move(cfg)), net_([&] {
          cfg_.validate();
          cfg_.scenario.demand.seed = cfg_.seed;
          return cfg_.scenario.build_network();
        }()) {
    events_ = generate_demand(cfg_.scenario.demand, cfg_.scenario.horizon, net_);
    log_.dt = cfg_.integrator.dt;
    cfg_.avoidance.dt = cfg_.integrator.dt;
  }

  /// Scripted run: `events` replace the generated demand.
  Simulation(RunConfig cfg, std::vector<SpawnEvent> events) : Simulation(std::move(cfg)) {
    std::stable_sort(events.begin(), events.end(),
                     [](const SpawnEvent& a, const SpawnEvent& b) { return a.time < b.time; });
    events_ = std::move(events);
  }

  const RunConfig& config() const { return cfg_; }
  const AirspaceNetwork& network() const { return net_; }
  const TrajectoryLog& log() const { return log_; }
  const RunStats& stats() const { return stats_; }
  const std::vector<Aircraft>& aircraft() const { return fleet_; }
  const std::vector<SpawnEvent>& events() const { return events_; }
  double clock() const { return clock_; }
  bool done() const { return clock_ >= cfg_.scenario.horizon - 1e-9; }

  void set_orca_dump(std::ostream* os) { orca_dump_ = os; }

  /// Per-region mean accumulation for each heatmap window, keyed by
  /// window start.
  const std::map<double, std::map<RegionId, double>>& heatmap() const { return heatmap_; }

  long active_count() const {
    return static_cast<long>(std::count_if(fleet_.begin(), fleet_.end(), [](const Aircraft& a) { return !a.held; }));
  }
  long held_count() const { return static_cast<long>(fleet_.size()) - active_count(); }

  void run() {
    while (!done()) tick();
  }

  void tick() {
    const double t = clock_;
    const double dt = cfg_.integrator.dt;

    // (1) closures
    const auto closed = net_.closed_regions(t);
    const bool toggled = closed != closed_;
    closed_ = closed;

    // (2) spawns
    const bool spawned = inject_spawns(t);

    // (3) re-plan
    if (replan_trigger(t, last_plan_, spawned, toggled, cfg_.replan)) {
      replan(t);
      last_plan_ = t;
    }

    // (4) snapshot. Positions advance with the pre-update velocity, so a
    // command issued now first acts from p + v dt; with lookahead the
    // avoidance geometry is built there.
    std::vector<AgentState> snapshot;
    snapshot.reserve(fleet_.size());
    for (const auto& a : fleet_) {
      snapshot.push_back(a.body.agent);
      if (cfg_.avoidance.lookahead) snapshot.back().position += a.body.agent.velocity * dt;
    }

    // (5) commands, all from the snapshot
    std::vector<Vec3> commands(fleet_.size());
    double cell = 0.0;
    for (const auto& s : snapshot) cell = std::max(cell, s.detection_radius);
    if (!snapshot.empty()) {
      const SpatialHash hash(snapshot, cell);
      for (std::size_t i = 0; i < fleet_.size(); ++i) {
        const auto neighbors = neighbor_set(snapshot, i, hash);
        const Aircraft& a = fleet_[i];
        Vec3 pref;
        if (!a.held) {
          const Vec3 d = a.body.target() - snapshot[i].position;
          if (norm_sq(d) > 0.0) pref = preferred_velocity(snapshot[i], a.body.target());
        }
        const VelocityCommand cmd = command_from_preferred(snapshot[i], neighbors, pref, cfg_.avoidance);
        if (cmd.infeasible) ++stats_.infeasible_commands;
        commands[i] = cmd.velocity;
        if (orca_dump_) dump_command(t, snapshot[i].id, cmd);
      }
    }

    // (6) integrate in id order (the fleet is kept sorted by id)
    for (std::size_t i = 0; i < fleet_.size(); ++i) {
      if (fleet_[i].held) {
        integrate(fleet_[i].body, commands[i], cfg_.integrator);  // avoidance only, no target to advance
      } else {
        step(fleet_[i].body, commands[i], cfg_.integrator);
      }
    }

    // (7) retire and (8) log
    const double t1 = t + dt;
    std::vector<Aircraft> still;
    still.reserve(fleet_.size());
    for (auto& a : fleet_) {
      LogRecord r;
      r.t = t1;
      r.id = a.body.agent.id;
      r.position = a.body.agent.position;
      r.velocity = a.body.agent.velocity;
      r.region = net_.locate_nearest(r.position);
      r.phase = a.body.phase;
      r.held = a.held;
      log_.records.push_back(r);
      audit_closure(r);
      if (a.body.phase == Phase::arrived) {
        trip_of(a.body.agent.id).arrival_time = t1;
        ++stats_.completed;
      } else {
        still.push_back(std::move(a));
      }
    }
    fleet_.swap(still);
    accumulate_heatmap(t1);

    clock_ = t1;
    ++stats_.ticks;
    stats_.max_concurrent = std::max<long>(stats_.max_concurrent, static_cast<long>(fleet_.size()));
    if (stats_.spawned != stats_.completed + active_count() + held_count()) ++stats_.conservation_violations;
  }

 private:
  Trip& trip_of(int id) { return log_.trips[static_cast<std::size_t>(id)]; }

  bool inject_spawns(double t) {
    while (next_event_ < events_.size() && events_[next_event_].time <= t) pending_.push_back(next_event_++);
    bool any = false;
    std::set<int> blocked_flows;
    std::deque<std::size_t> waiting;
    const double guard = 2.0 * cfg_.aircraft.safety_radius;
    for (const std::size_t k : pending_) {
      const SpawnEvent& e = events_[k];
      const bool crowded = std::any_of(fleet_.begin(), fleet_.end(), [&](const Aircraft& a) {
        return distance(a.body.agent.position, e.origin) < guard;
      });
      if (blocked_flows.contains(e.flow) || crowded) {
        blocked_flows.insert(e.flow);
        waiting.push_back(k);
        ++stats_.deferred_spawn_ticks;
        continue;
      }
      spawn(e, t);
      any = true;
    }
    pending_.swap(waiting);
    return any;
  }

  void spawn(const SpawnEvent& e, double t) {
    Aircraft a;
    const int id = static_cast<int>(log_.trips.size());
    a.body.agent.id = id;
    a.body.agent.position = e.origin;
    a.body.agent.safety_radius = cfg_.aircraft.safety_radius;
    a.body.agent.detection_radius = cfg_.aircraft.detection_radius;
    a.body.agent.v_max = cfg_.aircraft.v_max;
    a.body.control_gain = cfg_.aircraft.control_gain;
    a.body.path = direct_path(e.origin, e.destination, net_);
    a.body.target_index = 1;
    a.destination = e.destination;
    a.flow = e.flow;
    log_.trips.push_back({id, t, std::nullopt, e.origin, e.destination});
    fleet_.push_back(std::move(a));
    ++stats_.spawned;
  }

  bool closed_at(const RegionId& id, double t) const { return net_.is_closed(id, t); }

  /// True when the segment passes through a closed region other than the
  /// `allowed` ones.
  bool crosses_closed(const Vec3& a, const Vec3& b, double t, std::span<const RegionId> allowed) const {
    if (closed_.empty()) return false;
    const Path probe = direct_path(a, b, net_);
    return std::any_of(probe.pass_by.begin(), probe.pass_by.end(), [&](const RegionId& id) {
      return closed_at(id, t) && std::find(allowed.begin(), allowed.end(), id) == allowed.end();
    });
  }

  /// Flight version of a planned path: when the first or last leg would cut
  /// through a closed region, the aircraft first flies to its own region's
  /// centroid (resp. last through the destination region's centroid); legs
  /// between adjacent centroids stay inside the two cells.
  Path realize(Path p, double t) const {
    if (closed_.empty() || p.waypoints.size() < 2) return p;
    const RegionId from = net_.locate_nearest(p.origin());
    const RegionId to = net_.locate_nearest(p.destination());
    const std::array<RegionId, 2> ends{from, to};
    auto& w = p.waypoints;
    if (crosses_closed(w[0], w[1], t, ends)) w.insert(w.begin() + 1, net_.region(from).centroid);
    if (crosses_closed(w[w.size() - 2], w.back(), t, ends)) w.insert(w.end() - 1, net_.region(to).centroid);
    return p;
  }

  void assign(Aircraft& a, Path p, double t) {
    a.body.path = realize(std::move(p), t);
    a.body.target_index = 1;
    a.body.phase = Phase::enroute;
    a.held = false;
    advance_waypoint(a.body, cfg_.integrator);
  }

  void hold(Aircraft& a) {
    a.held = true;
    a.body.path.waypoints = {a.body.agent.position, a.destination};
    a.body.target_index = 1;
  }

  /// Candidates from the current position. An aircraft that avoidance has
  /// pushed into a closed region leaves through the open neighbor whose
  /// centroid is nearest, so successive re-plans agree on the exit instead of
  /// alternating between ways out.
  CandidateSet routes_from(const Vec3& pos, const Vec3& dest, double t, const WeightedGraph& base, int max_candidates,
                           int id) const {
    const RegionId here = net_.locate_nearest(pos);
    if (!closed_at(here, t)) return candidate_paths(graph_for(pos, dest, t, base), pos, dest, net_, max_candidates, id);
    const auto exits = net_.neighbors(here, t);
    if (exits.empty()) return {};
    const auto exit = *std::min_element(exits.begin(), exits.end(), [&](const RegionId& a, const RegionId& b) {
      const double da = distance(pos, net_.region(a).centroid);
      const double db = distance(pos, net_.region(b).centroid);
      return da < db || (da == db && a < b);
    });
    const Vec3 gate = net_.region(exit).centroid;
    CandidateSet set = candidate_paths(graph_for(gate, dest, t, base), gate, dest, net_, max_candidates, id);
    for (auto& p : set.paths) {
      p.waypoints.insert(p.waypoints.begin(), pos);
      p.pass_by.insert(p.pass_by.begin(), exit);
      p.graph_length += distance(net_.region(here).centroid, gate);
    }
    return set;
  }

  WeightedGraph graph_for(const Vec3& from, const Vec3& to, double t, const WeightedGraph& base) const {
    std::vector<RegionId> keep;
    for (const auto& id : {net_.locate_nearest(from), net_.locate_nearest(to)}) {
      if (closed_at(id, t)) keep.push_back(id);
    }
    return keep.empty() ? base : net_.routing_graph(t, keep);
  }

  void replan(double t) {
    ++stats_.replans;
    if (fleet_.empty()) return;
    const WeightedGraph base = net_.routing_graph(t);
    if (cfg_.scenario.mode == GuidanceMode::baseline) {
      for (auto& a : fleet_) {
        const Vec3& pos = a.body.agent.position;
        const std::array<RegionId, 2> ends{net_.locate_nearest(pos), net_.locate_nearest(a.destination)};
        if (!crosses_closed(pos, a.destination, t, ends)) {
          if (a.held || a.body.path.waypoints.size() != 2) assign(a, direct_path(pos, a.destination, net_), t);
          continue;
        }
        auto set = routes_from(pos, a.destination, t, base, 1, a.body.agent.id);
        if (set.paths.empty()) {
          hold(a);
        } else {
          assign(a, std::move(set.paths.front()), t);
        }
      }
      return;
    }

    std::vector<CandidateSet> sets;
    std::vector<std::size_t> owners;
    for (std::size_t i = 0; i < fleet_.size(); ++i) {
      Aircraft& a = fleet_[i];
      const Vec3& pos = a.body.agent.position;
      auto set = routes_from(pos, a.destination, t, base, cfg_.planner.max_candidates, a.body.agent.id);
      if (set.paths.empty()) {
        hold(a);
        continue;
      }
      sets.push_back(std::move(set));
      owners.push_back(i);
    }
    if (sets.empty()) return;
    const SearchResult plan = approx_optimal_paths(sets, cfg_.planner, net_);
    stats_.planner_evaluations += plan.evaluations;
    for (std::size_t k = 0; k < owners.size(); ++k) assign(fleet_[owners[k]], plan.decision.paths[k], t);
  }

  void audit_closure(const LogRecord& r) {
    if (r.phase != Phase::enroute || !net_.is_closed(r.region, r.t)) return;
    double onset = -1.0;
    for (const auto& w : net_.closure_schedule()) {
      if (w.region == r.region && w.active_at(r.t)) onset = std::max(onset, w.start);
    }
    if (onset >= 0.0 && r.t - onset <= cfg_.replan.period + 1e-9) {
      ++stats_.closure_transit_records;
    } else {
      ++stats_.closure_violations;
    }
  }

  void accumulate_heatmap(double t1) {
    const double w = cfg_.heatmap_window;
    const double start = std::floor((t1 - cfg_.integrator.dt) / w) * w;
    auto& slot = heatmap_[start];
    const double share = cfg_.integrator.dt / w;
    for (const auto& a : fleet_) slot[net_.locate_nearest(a.body.agent.position)] += share;
  }

  void dump_command(double t, int id, const VelocityCommand& cmd) {
    auto& os = *orca_dump_;
    const auto v3 = [&](const Vec3& v) { os << '[' << v.x << ',' << v.y << ',' << v.z << ']'; };
    os << "{\"t\":" << t << ",\"id\":" << id << ",\"preferred\":";
    v3(cmd.preferred);
    os << ",\"command\":";
    v3(cmd.velocity);
    os << ",\"infeasible\":" << (cmd.infeasible ? "true" : "false") << ",\"constraints\":[";
    for (std::size_t k = 0; k < cmd.constraints.size(); ++k) {
      if (k) os << ',';
      os << "{\"point\":";
      v3(cmd.constraints[k].point);
      os << ",\"normal\":";
      v3(cmd.constraints[k].normal);
      os << '}';
    }
    os << "]}\n";
  }

  RunConfig cfg_;
  AirspaceNetwork net_;
  std::vector<SpawnEvent> events_;
  std::size_t next_event_ = 0;
  std::deque<std::size_t> pending_;
  std::vector<Aircraft> fleet_;
  std::vector<RegionId> closed_;
  std::optional<double> last_plan_;
  double clock_ = 0.0;
  TrajectoryLog log_;
  RunStats stats_;
  std::map<double, std::map<RegionId, double>> heatmap_;
  std::ostream* orca_dump_ = nullptr;
};

}  // namespace uam
