#pragma once

// Centralized route guidance: region-disjoint candidate paths, congestion
// coupled path costs (trajectory prediction and the pass-by matrix
// estimate) and joint path search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/geometry.hpp"
#include "uamsim/hexspace.hpp"

namespace uam {

struct Path {
  std::vector<Vec3> waypoints;     // origin, pass-by waypoints..., destination
  std::vector<RegionId> pass_by;   // regions between origin and destination regions
  double graph_length = 0.0;       // routing-graph length origin region -> destination region
  bool direct = false;             // straight segment; pass_by then lists every crossed region

  const Vec3& origin() const { return waypoints.front(); }
  const Vec3& destination() const { return waypoints.back(); }

  double length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) s += distance(waypoints[i - 1], waypoints[i]);
    return s;
  }
};

struct CandidateSet {
  int owner = 0;
  std::vector<Path> paths;
};

/// One selected path per aircraft, in the order of the candidate sets.
struct JointDecision {
  std::vector<std::size_t> choice;
  std::vector<Path> paths;
};

struct PlannerConfig {
  double prediction_step = 1.0;                  // s
  double arrival_epsilon = 10.0;                 // m
  double region_leg_length = 433.0127018922193;  // m, sqrt(3) * 250
  std::size_t max_candidates = 6;
  double exhaustive_budget = 1e8;                // joint decisions
  double step_budget_factor = 10.0;

  static PlannerConfig for_network(const AirspaceNetwork& net) {
    PlannerConfig c;
    c.region_leg_length = net.neighbor_spacing();
    return c;
  }

  void validate() const {
    if (!(prediction_step > 0.0) || !(arrival_epsilon > 0.0) || !(region_leg_length > 0.0)) {
      throw Error(Errc::config, "planner step, epsilon and leg length must be positive");
    }
  }
};

/// Speed inside a region holding `n` aircraft: a logistic decay around
/// the critical accumulation, v_max / 2 exactly at n = n_cr.
inline double regulated_speed(double n, double n_cr, double v_max) {
  return v_max / (1.0 + std::exp(n - n_cr));
}

/// Region-disjoint candidates, shortest first. Each extracted path's
/// intermediate regions are removed before the next search; when origin
/// and destination regions are adjacent the direct edge is banned instead.
inline CandidateSet candidate_paths(const WeightedGraph& graph, const Vec3& origin, const Vec3& dest,
                                    const AirspaceNetwork& network, std::size_t max_candidates = 6,
                                    int owner = 0) {
  CandidateSet set;
  set.owner = owner;
  const RegionId ro = network.locate_nearest(origin);
  const RegionId rd = network.locate_nearest(dest);
  if (ro == rd) {
    Path p;
    p.waypoints = {origin, dest};
    set.paths.push_back(std::move(p));
    return set;
  }
  const auto o = graph.index_of(ro);
  const auto d = graph.index_of(rd);
  if (!o || !d) return set;

  std::vector<bool> removed(graph.node_count(), false);
  std::optional<std::pair<std::size_t, std::size_t>> banned;
  while (set.paths.size() < max_candidates) {
    const auto nodes = graph.shortest_path(*o, *d, removed, banned);
    if (!nodes) break;
    Path p;
    p.waypoints.push_back(origin);
    for (std::size_t k = 1; k + 1 < nodes->size(); ++k) {
      const RegionId& id = graph.node((*nodes)[k]);
      p.pass_by.push_back(id);
      p.waypoints.push_back(network.waypoint_for(id));
      removed[(*nodes)[k]] = true;
    }
    p.waypoints.push_back(dest);
    for (std::size_t k = 1; k < nodes->size(); ++k) {
      p.graph_length += *graph.weight(graph.node((*nodes)[k - 1]), graph.node((*nodes)[k]));
    }
    if (nodes->size() == 2) banned = std::make_pair(*o, *d);
    set.paths.push_back(std::move(p));
  }
  return set;
}

/// Straight origin-destination path; pass_by lists every region the
/// segment crosses, in traversal order.
inline Path direct_path(const Vec3& origin, const Vec3& dest, const AirspaceNetwork& network) {
  Path p;
  p.direct = true;
  p.waypoints = {origin, dest};
  const double len = distance(origin, dest);
  const double step = network.circumradius() / 20.0;
  const auto n = static_cast<std::size_t>(std::ceil(len / step));
  for (std::size_t k = 0; k <= n; ++k) {
    const double s = n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
    const RegionId id = network.locate_nearest(origin + (dest - origin) * s);
    if (p.pass_by.empty() || !(p.pass_by.back() == id)) p.pass_by.push_back(id);
  }
  p.graph_length = len;
  return p;
}

struct PredictedTrajectory {
  std::vector<double> times;
  std::vector<Vec3> positions;
};

/// Synchronous point-particle prediction. Each step, every active aircraft
/// moves V * dt along its waypoint polyline, V being the regulated speed
/// of the region it occupies given the current accumulation of active
/// aircraft. An aircraft retires once within epsilon of its destination.
inline std::vector<PredictedTrajectory> predict_trajectories(std::span<const Path> paths, const PlannerConfig& config,
                                                             const AirspaceNetwork& network) {
  config.validate();
  const std::size_t n = paths.size();
  std::vector<PredictedTrajectory> out(n);
  if (n == 0) return out;

  double total_length = 0.0;
  double slowest = std::numeric_limits<double>::infinity();
  for (const auto& p : paths) {
    if (p.waypoints.empty()) throw Error(Errc::invalid_argument, "empty path");
    total_length += p.length();
  }
  for (const auto& reg : network.regions()) {
    slowest = std::min(slowest, regulated_speed(2.0 * reg.n_cr, reg.n_cr, reg.v_max_region));
  }
  const double budget = std::ceil(config.step_budget_factor * (total_length / slowest) / config.prediction_step) + 1.0;

  std::vector<Vec3> pos(n);
  std::vector<std::size_t> target(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = paths[i].waypoints.front();
    target[i] = std::min<std::size_t>(1, paths[i].waypoints.size() - 1);
    out[i].times.push_back(0.0);
    out[i].positions.push_back(pos[i]);
  }

  std::unordered_map<RegionId, int, RegionIdHash> accumulation;
  std::vector<RegionId> where(n);
  std::size_t remaining = n;
  double t = 0.0;
  for (std::size_t step = 0; remaining > 0; ++step) {
    if (static_cast<double>(step) > budget) {
      throw Error(Errc::non_termination, "trajectory prediction exceeded its step budget");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && distance(pos[i], paths[i].waypoints.back()) <= config.arrival_epsilon) {
        active[i] = false;
        --remaining;
      }
    }
    if (remaining == 0) break;
    accumulation.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      where[i] = network.locate_nearest(pos[i]);
      ++accumulation[where[i]];
    }
    const double t_next = t + config.prediction_step;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      const auto& wp = paths[i].waypoints;
      while (target[i] + 1 < wp.size() && distance(pos[i], wp[target[i]]) <= config.arrival_epsilon) ++target[i];
      const HexRegion& reg = network.region(where[i]);
      double budget_m = regulated_speed(accumulation[where[i]], reg.n_cr, reg.v_max_region) * config.prediction_step;
      while (budget_m > 0.0) {
        const Vec3 seg = wp[target[i]] - pos[i];
        const double d = norm(seg);
        if (d <= budget_m) {
          pos[i] = wp[target[i]];
          budget_m -= d;
          if (target[i] + 1 >= wp.size()) break;
          ++target[i];
        } else {
          pos[i] += seg * (budget_m / d);
          budget_m = 0.0;
        }
      }
      out[i].times.push_back(t_next);
      out[i].positions.push_back(pos[i]);
    }
    t = t_next;
  }
  return out;
}

/// Travel time from a sampled trajectory: the time of closest approach to
/// the destination minus the time of closest approach to the origin.
inline double path_cost(const PredictedTrajectory& traj, const Vec3& origin, const Vec3& dest) {
  if (traj.positions.empty()) throw Error(Errc::invalid_argument, "empty trajectory");
  std::size_t io = 0;
  std::size_t id = 0;
  for (std::size_t k = 1; k < traj.positions.size(); ++k) {
    if (distance(traj.positions[k], origin) < distance(traj.positions[io], origin)) io = k;
    if (distance(traj.positions[k], dest) < distance(traj.positions[id], dest)) id = k;
  }
  return traj.times[id] - traj.times[io];
}

/// Pass-by matrix cost model. Regions are mapped to dense indices so a
/// joint decision evaluates in O(aircraft x columns).
class FastCostModel {
 public:
  FastCostModel(const AirspaceNetwork& network, const PlannerConfig& config) : leg_(config.region_leg_length) {
    config.validate();
    for (const auto& reg : network.regions()) {
      index_[reg.id] = static_cast<int>(n_cr_.size());
      n_cr_.push_back(reg.n_cr);
      v_max_.push_back(reg.v_max_region);
    }
    counts_.assign(n_cr_.size(), 0);
  }

  using Encoded = std::vector<int>;

  Encoded encode(const Path& p) const {
    Encoded e;
    e.reserve(p.pass_by.size());
    for (const auto& id : p.pass_by) {
      const auto it = index_.find(id);
      if (it == index_.end()) throw Error(Errc::unknown_region, to_string(id));
      e.push_back(it->second);
    }
    return e;
  }

  /// Sum over every aircraft and column of L / V, V taken from the number
  /// of aircraft sharing that region in the same column.
  double cost(std::span<const Encoded* const> rows) const {
    ++evaluations_;
    std::size_t columns = 0;
    for (const auto* r : rows) columns = std::max(columns, r->size());
    double total = 0.0;
    for (std::size_t j = 0; j < columns; ++j) {
      for (const auto* r : rows) {
        if (j < r->size()) ++counts_[(*r)[j]];
      }
      for (const auto* r : rows) {
        if (j >= r->size()) continue;
        const int reg = (*r)[j];
        total += leg_ / regulated_speed(counts_[reg], n_cr_[reg], v_max_[reg]);
      }
      for (const auto* r : rows) {
        if (j < r->size()) counts_[(*r)[j]] = 0;
      }
    }
    return total;
  }

  /// Contribution of `n` aircraft sharing region `reg` in one column.
  double cell_cost(int reg, int n) const {
    return n == 0 ? 0.0 : n * (leg_ / regulated_speed(n, n_cr_[reg], v_max_[reg]));
  }

  std::size_t region_count() const { return n_cr_.size(); }
  std::uint64_t evaluations() const { return evaluations_; }
  void count_evaluation() const { ++evaluations_; }

 private:
  double leg_;
  std::unordered_map<RegionId, int, RegionIdHash> index_;
  std::vector<double> n_cr_;
  std::vector<double> v_max_;
  mutable std::vector<int> counts_;
  mutable std::uint64_t evaluations_ = 0;
};

inline double fast_joint_cost(std::span<const Path> paths, const PlannerConfig& config,
                              const AirspaceNetwork& network) {
  const FastCostModel model(network, config);
  std::vector<FastCostModel::Encoded> enc;
  enc.reserve(paths.size());
  for (const auto& p : paths) enc.push_back(model.encode(p));
  std::vector<const FastCostModel::Encoded*> rows;
  for (const auto& e : enc) rows.push_back(&e);
  return model.cost(rows);
}

inline double fast_joint_cost(const JointDecision& decision, const PlannerConfig& config,
                              const AirspaceNetwork& network) {
  return fast_joint_cost(std::span<const Path>(decision.paths), config, network);
}

struct SearchResult {
  JointDecision decision;
  double cost = 0.0;                 // fast estimate of the returned decision
  std::uint64_t evaluations = 0;     // calls to the fast cost estimate
};

namespace detail {

inline void require_candidates(std::span<const CandidateSet> candidates) {
  for (const auto& c : candidates) {
    if (c.paths.empty()) {
      throw Error(Errc::empty_candidates, "aircraft " + std::to_string(c.owner) + " has no candidate path");
    }
  }
}

inline JointDecision materialize(std::span<const CandidateSet> candidates, std::vector<std::size_t> choice) {
  JointDecision d;
  d.choice = std::move(choice);
  for (std::size_t i = 0; i < candidates.size(); ++i) d.paths.push_back(candidates[i].paths[d.choice[i]]);
  return d;
}

}  // namespace detail

/// Sequential priority search. Aircraft are ordered by straight-line OD
/// distance (shortest first); the first takes its shortest candidate, each
/// later one picks the candidate minimizing the fast cost of the already
/// fixed prefix plus itself.
inline SearchResult approx_optimal_paths(std::span<const CandidateSet> candidates, const PlannerConfig& config,
                                         const AirspaceNetwork& network) {
  detail::require_candidates(candidates);
  SearchResult result;
  const std::size_t n = candidates.size();
  if (n == 0) return result;

  const FastCostModel model(network, config);
  std::vector<std::vector<FastCostModel::Encoded>> enc(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : candidates[i].paths) enc[i].push_back(model.encode(p));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> od(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = candidates[i].paths.front();
    od[i] = distance(p.origin(), p.destination());
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return od[a] < od[b]; });

  std::vector<std::size_t> choice(n, 0);
  std::vector<const FastCostModel::Encoded*> prefix;
  prefix.reserve(n);

  const std::size_t first = order.front();
  const auto& first_paths = candidates[first].paths;
  std::size_t best_first = 0;
  for (std::size_t c = 1; c < first_paths.size(); ++c) {
    if (first_paths[c].graph_length < first_paths[best_first].graph_length) best_first = c;
  }
  choice[first] = best_first;
  prefix.push_back(&enc[first][best_first]);
  double cost = model.cost(prefix);

  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t i = order[k];
    prefix.push_back(nullptr);
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < enc[i].size(); ++c) {
      prefix.back() = &enc[i][c];
      const double j = model.cost(prefix);
      if (j < best_cost) {
        best_cost = j;
        best = c;
      }
    }
    choice[i] = best;
    prefix.back() = &enc[i][best];
    cost = best_cost;
  }
  result.decision = detail::materialize(candidates, std::move(choice));
  result.cost = cost;
  result.evaluations = model.evaluations();
  return result;
}

/// Global minimizer of the fast cost over the full product of candidate
/// sets, enumerated depth-first in lexicographic index order (first
/// minimum wins). Column occupancies are maintained incrementally so each
/// joint decision costs O(columns) rather than O(aircraft x columns).
inline SearchResult exhaustive_optimal_paths(std::span<const CandidateSet> candidates, const PlannerConfig& config,
                                             const AirspaceNetwork& network) {
  detail::require_candidates(candidates);
  SearchResult result;
  const std::size_t n = candidates.size();
  if (n == 0) return result;

  double space = 1.0;
  for (const auto& c : candidates) space *= static_cast<double>(c.paths.size());
  if (space > config.exhaustive_budget) {
    throw Error(Errc::budget_exceeded, "joint decision space of " + std::to_string(space) + " exceeds budget");
  }

  const FastCostModel model(network, config);
  std::vector<std::vector<FastCostModel::Encoded>> enc(n);
  std::size_t columns = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : candidates[i].paths) {
      enc[i].push_back(model.encode(p));
      columns = std::max(columns, enc[i].back().size());
    }
  }
  const std::size_t regions = model.region_count();
  // cell_cost table per region and occupancy 0..n
  std::vector<double> f(regions * (n + 1));
  for (std::size_t r = 0; r < regions; ++r) {
    for (std::size_t k = 0; k <= n; ++k) f[r * (n + 1) + k] = model.cell_cost(static_cast<int>(r), static_cast<int>(k));
  }
  std::vector<int> occupancy(columns * regions, 0);
  std::vector<double> partial(n + 1, 0.0);
  std::vector<std::size_t> choice(n, 0);
  std::vector<std::size_t> best_choice(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t evaluations = 0;

  const auto add = [&](const FastCostModel::Encoded& e, int sign) {
    double delta = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      const auto reg = static_cast<std::size_t>(e[j]);
      int& occ = occupancy[j * regions + reg];
      const double before = f[reg * (n + 1) + static_cast<std::size_t>(occ)];
      occ += sign;
      delta += f[reg * (n + 1) + static_cast<std::size_t>(occ)] - before;
    }
    return delta;
  };

  // Iterative depth-first enumeration; level i chooses aircraft i's path.
  std::size_t level = 0;
  std::vector<std::size_t> next(n, 0);
  while (true) {
    if (next[level] < enc[level].size()) {
      const std::size_t c = next[level]++;
      choice[level] = c;
      partial[level + 1] = partial[level] + add(enc[level][c], +1);
      if (level + 1 == n) {
        ++evaluations;
        // Relative slack so rounding in the incremental sums cannot
        // reorder exact ties.
        if (std::isinf(best) || partial[n] < best - 1e-12 * std::abs(best)) {
          best = partial[n];
          best_choice = choice;
        }
        add(enc[level][c], -1);
      } else {
        ++level;
      }
      continue;
    }
    next[level] = 0;
    if (level == 0) break;
    --level;
    add(enc[level][choice[level]], -1);
  }

  result.decision = detail::materialize(candidates, best_choice);
  result.cost = fast_joint_cost(result.decision, config, network);
  result.evaluations = evaluations;
  return result;
}

}  // namespace uam
