#pragma once

// Reciprocal collision avoidance in 3D velocity space. Planar scenarios are
// 3D scenarios with a pinned altitude; the solver keeps their commands
// horizontal.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/geometry.hpp"

namespace uam {

struct AgentState {
  int id = 0;
  Vec3 position;
  Vec3 velocity;
  double safety_radius = 50.0;
  double detection_radius = 200.0;
  double v_max = 20.0;
};

struct VelocityObstacleCone {
  Vec3 relative_position;  // p_j - p_i
  double combined_radius = 100.0;
  double horizon = 10.0;
};

/// Velocities v with (v - point) . normal >= 0.
struct HalfSpaceConstraint {
  Vec3 point;
  Vec3 normal;

  double violation(const Vec3& v) const { return dot(point - v, normal); }
};

inline Vec3 preferred_velocity(const AgentState& s, const Vec3& target) {
  const Vec3 d = target - s.position;
  if (norm_sq(d) == 0.0) throw Error(Errc::zero_distance_target, "agent " + std::to_string(s.id) + " is at its target");
  return normalized(d) * s.v_max;
}

/// True iff |v_rel t - p| < combined radius for some t in (0, tau].
inline bool vo_contains(const VelocityObstacleCone& cone, const Vec3& v_rel) {
  const Vec3& p = cone.relative_position;
  const double c = norm_sq(p) - cone.combined_radius * cone.combined_radius;
  if (c < 0.0) return true;  // already overlapping
  const double a = norm_sq(v_rel);
  const double b = dot(v_rel, p);
  if (a == 0.0 || b <= 0.0) return false;
  const double disc = b * b - a * c;
  if (disc <= 0.0) return false;
  const double t_enter = (b - std::sqrt(disc)) / a;
  return t_enter < cone.horizon;
}

namespace detail {

/// Unit vector perpendicular to `axis`, horizontal when possible.
inline Vec3 perpendicular(const Vec3& axis) {
  Vec3 e = cross(axis, Vec3{0.0, 0.0, 1.0});
  if (norm_sq(e) < 1e-18) e = cross(axis, Vec3{1.0, 0.0, 0.0});
  return normalized(e);
}

struct BoundaryPoint {
  Vec3 offset;  // nearest boundary point minus v_rel
  Vec3 normal;  // outward unit normal there
};

/// Nearest point of the truncated cone's boundary to v_rel, from inside or
/// outside. Candidates are the near cap of the truncation sphere, the
/// lateral cone surface beyond the tangency circle, and the tangency circle
/// itself; on ties the sphere wins. At the sphere center the push is along
/// -p. The surface is smooth across the tangency circle, so the normal is
/// well defined even when v_rel sits on the boundary.
inline BoundaryPoint nearest_boundary(const VelocityObstacleCone& cone, const Vec3& v_rel) {
  const Vec3& p = cone.relative_position;
  const double dist = norm(p);
  const Vec3 axis = p / dist;
  const double sin_t = cone.combined_radius / dist;
  const double cos_t = std::sqrt(std::max(0.0, 1.0 - sin_t * sin_t));
  const Vec3 center = p / cone.horizon;
  const double radius = cone.combined_radius / cone.horizon;
  const double tol = 1e-9 * std::max(1.0, radius);

  // Meridian plane through v_rel: axial coordinate a, radial unit e.
  const double a = dot(v_rel, axis);
  Vec3 radial = v_rel - axis * a;
  const double b = norm(radial);
  const Vec3 e = b > 1e-12 * std::max(1.0, std::abs(a)) ? radial / b : perpendicular(axis);
  const Vec3 line = axis * cos_t + e * sin_t;
  const double tangency = norm(center) * cos_t;  // distance from apex to tangency circle

  const Vec3 leg_normal = e * cos_t - axis * sin_t;
  Vec3 best = line * tangency;  // tangency circle
  Vec3 normal = leg_normal;
  double best_d = distance(best, v_rel);

  const Vec3 w = v_rel - center;
  const double wl = norm(w);
  const Vec3 on_sphere = wl > 1e-12 * std::max(1.0, radius) ? center + w * (radius / wl) : center - axis * radius;
  if (dot(on_sphere - center, axis) <= -radius * sin_t + tol) {
    const double d = distance(on_sphere, v_rel);
    if (d <= best_d + tol) {
      best = on_sphere;
      normal = (on_sphere - center) / radius;
      best_d = d;
    }
  }

  const double s = dot(v_rel, line);
  if (s >= tangency) {
    const Vec3 foot = line * s;
    const double d = distance(foot, v_rel);
    if (d < best_d - tol) {
      best = foot;
      normal = leg_normal;
      best_d = d;
    }
  }
  return {best - v_rel, normal};
}

}  // namespace detail

/// Smallest change u taking v_rel out of the truncated cone; zero when
/// v_rel is already outside.
inline Vec3 escape_vector(const VelocityObstacleCone& cone, const Vec3& v_rel) {
  if (!vo_contains(cone, v_rel)) return {};
  return detail::nearest_boundary(cone, v_rel).offset;
}

/// Half of the escape vector, owned by agent i: point v_i + u/2, normal
/// along u.
inline std::optional<HalfSpaceConstraint> orca_halfspace(const Vec3& v_i, const Vec3& v_j,
                                                         const VelocityObstacleCone& cone) {
  const Vec3 v_rel = v_i - v_j;
  if (!vo_contains(cone, v_rel)) return std::nullopt;
  const auto b = detail::nearest_boundary(cone, v_rel);
  return HalfSpaceConstraint{v_i + b.offset * 0.5, b.normal};
}

/// Constraint of agent i against neighbor j, built for every neighbor
/// whether or not the pair currently conflicts. Overlapping discs get a
/// separating constraint: the pair must open the gap to the combined radius
/// within one step, each taking half of the required change.
inline std::optional<HalfSpaceConstraint> pair_constraint(const AgentState& i, const AgentState& j, double horizon,
                                                          double dt) {
  const Vec3 p = j.position - i.position;
  const double combined = i.safety_radius + j.safety_radius;
  const double dist = norm(p);
  if (dist >= combined) {
    // Outside the obstacle u points inward and the outward normal lets each
    // agent close at most half of the remaining gap.
    const VelocityObstacleCone cone{p, combined, horizon};
    const auto b = detail::nearest_boundary(cone, i.velocity - j.velocity);
    return HalfSpaceConstraint{i.velocity + b.offset * 0.5, b.normal};
  }
  Vec3 n;
  if (dist > 1e-9) {
    n = -(p / dist);
  } else {
    n = i.id < j.id ? Vec3{-1.0, 0.0, 0.0} : Vec3{1.0, 0.0, 0.0};
  }
  const double needed = (combined - dist) / dt;
  const double current = dot(i.velocity - j.velocity, n);
  return HalfSpaceConstraint{i.velocity + n * (0.5 * (needed - current)), n};
}

namespace lp {

inline constexpr double kEps = 1e-9;

struct Line {
  Vec3 point;
  Vec3 direction;
};

// Optimum on a line inside the ball and planes [0, count). With
// `direction_opt`, `opt` is a direction to maximize; when it is orthogonal
// to the line the point nearest the line origin is kept.
inline bool on_line(std::span<const HalfSpaceConstraint> planes, std::size_t count, const Line& line, double radius,
                    const Vec3& opt, bool direction_opt, Vec3& result) {
  const double dp = dot(line.point, line.direction);
  const double disc = dp * dp + radius * radius - norm_sq(line.point);
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t_left = -dp - sq;
  double t_right = -dp + sq;
  for (std::size_t i = 0; i < count; ++i) {
    const double num = dot(planes[i].point - line.point, planes[i].normal);
    const double den = dot(line.direction, planes[i].normal);
    if (den * den <= kEps) {
      if (num > kEps) return false;
      continue;
    }
    const double t = num / den;
    if (den >= 0.0) {
      t_left = std::max(t_left, t);
    } else {
      t_right = std::min(t_right, t);
    }
    if (t_left > t_right) return false;
  }
  double t;
  if (direction_opt) {
    const double g = dot(opt, line.direction);
    if (std::abs(g) <= kEps) {
      t = std::clamp(0.0, t_left, t_right);
    } else {
      t = g > 0.0 ? t_right : t_left;
    }
  } else {
    t = std::clamp(dot(line.direction, opt - line.point), t_left, t_right);
  }
  result = line.point + line.direction * t;
  return true;
}

// Optimum on plane `k` subject to the ball and planes [0, k).
inline bool on_plane(std::span<const HalfSpaceConstraint> planes, std::size_t k, double radius, const Vec3& opt,
                     bool direction_opt, Vec3& result) {
  const HalfSpaceConstraint& pk = planes[k];
  const double plane_dist = dot(pk.point, pk.normal);
  const double r2 = radius * radius;
  if (plane_dist * plane_dist > r2) return false;
  const double disc_r2 = r2 - plane_dist * plane_dist;
  const Vec3 disc_center = pk.normal * plane_dist;
  if (direction_opt) {
    const Vec3 in_plane = opt - pk.normal * dot(opt, pk.normal);
    const double l2 = norm_sq(in_plane);
    result = l2 <= kEps ? disc_center : disc_center + in_plane * std::sqrt(disc_r2 / l2);
  } else {
    result = opt + pk.normal * dot(pk.point - opt, pk.normal);
    if (norm_sq(result) > r2) {
      const Vec3 off = result - disc_center;
      result = disc_center + off * std::sqrt(disc_r2 / norm_sq(off));
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (dot(planes[i].point - result, planes[i].normal) <= kEps) continue;
    const Vec3 cr = cross(planes[i].normal, pk.normal);
    if (norm_sq(cr) <= kEps) return false;  // parallel and violated
    Line line;
    line.direction = normalized(cr);
    const Vec3 line_normal = cross(line.direction, pk.normal);
    line.point = pk.point + line_normal * (dot(planes[i].point - pk.point, planes[i].normal) /
                                           dot(line_normal, planes[i].normal));
    if (!on_line(planes, i, line, radius, opt, direction_opt, result)) return false;
  }
  return true;
}

// Incremental solve over all planes; returns the index of the first plane
// that made the problem infeasible, or planes.size() on success.
inline std::size_t solve(std::span<const HalfSpaceConstraint> planes, double radius, const Vec3& opt,
                         bool direction_opt, Vec3& result) {
  if (direction_opt) {
    result = opt * radius;
  } else if (norm_sq(opt) > radius * radius) {
    result = normalized(opt) * radius;
  } else {
    result = opt;
  }
  for (std::size_t i = 0; i < planes.size(); ++i) {
    if (dot(planes[i].point - result, planes[i].normal) <= kEps) continue;
    const Vec3 keep = result;
    if (!on_plane(planes, i, radius, opt, direction_opt, result)) {
      result = keep;
      return i;
    }
  }
  return planes.size();
}

// Least-infeasible velocity: minimizes the largest violation over planes
// from `begin` on, keeping earlier planes' guarantees where possible.
inline void minimize_violation(std::span<const HalfSpaceConstraint> planes, std::size_t begin, double radius,
                               Vec3& result) {
  double worst = 0.0;
  for (std::size_t i = begin; i < planes.size(); ++i) {
    if (dot(planes[i].point - result, planes[i].normal) <= worst) continue;
    std::vector<HalfSpaceConstraint> projected;
    for (std::size_t j = 0; j < i; ++j) {
      HalfSpaceConstraint plane;
      const Vec3 cr = cross(planes[j].normal, planes[i].normal);
      if (norm_sq(cr) <= kEps) {
        if (dot(planes[i].normal, planes[j].normal) > 0.0) continue;
        plane.point = (planes[i].point + planes[j].point) * 0.5;
      } else {
        const Vec3 line_normal = cross(cr, planes[i].normal);
        plane.point = planes[i].point + line_normal * (dot(planes[j].point - planes[i].point, planes[j].normal) /
                                                       dot(line_normal, planes[j].normal));
      }
      plane.normal = normalized(planes[j].normal - planes[i].normal);
      projected.push_back(plane);
    }
    const Vec3 keep = result;
    if (solve(projected, radius, planes[i].normal, true, result) < projected.size()) result = keep;
    worst = dot(planes[i].point - result, planes[i].normal);
  }
}

}  // namespace lp

struct AvoidanceConfig {
  double horizon = 10.0;      // s
  double dt = 1.0;            // s, used for overlap separation
  bool fallback = true;       // least-infeasible command when the safe set is empty
  double sidestep_deg = 10.0; // rotation of the preferred velocity in a symmetric head-on
  bool lookahead = true;      // build constraints at p + v dt, where the command takes effect
};

struct VelocityCommand {
  Vec3 velocity;
  Vec3 preferred;
  std::vector<HalfSpaceConstraint> constraints;
  bool infeasible = false;  // safe set empty; velocity minimizes the worst violation
};

/// Closest velocity to `preferred` inside the speed ball and all
/// half-spaces. Constraints are processed in the given order.
inline VelocityCommand solve_velocity(std::span<const HalfSpaceConstraint> constraints, const Vec3& preferred,
                                      double v_max, bool fallback = true) {
  VelocityCommand out;
  out.preferred = preferred;
  out.constraints.assign(constraints.begin(), constraints.end());
  const std::size_t failed = lp::solve(constraints, v_max, preferred, false, out.velocity);
  if (failed < constraints.size()) {
    out.infeasible = true;
    if (fallback) lp::minimize_violation(constraints, failed, v_max, out.velocity);
  }
  if (norm(out.velocity) > v_max) out.velocity = normalized(out.velocity) * v_max;
  return out;
}

/// Rotation about +z by `deg` degrees (negative = clockwise seen from above).
inline Vec3 rotate_z(const Vec3& v, double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

/// True when j is straight ahead of i in relative velocity: the pair would
/// meet centre to centre, where the escape direction is degenerate.
inline bool head_on(const AgentState& i, const AgentState& j) {
  const Vec3 p = j.position - i.position;
  const Vec3 v = i.velocity - j.velocity;
  const double vl = norm(v);
  if (vl == 0.0 || dot(v, p) <= 0.0) return false;
  return norm(cross(p, v)) / vl < 1e-3 * norm(p);
}

/// Command for `self` given its (already filtered, id-ordered) neighbors
/// and a preferred velocity. In a symmetric head-on encounter the preferred
/// velocity is turned right so both agents break the tie the same way.
inline VelocityCommand command_from_preferred(const AgentState& self, std::span<const AgentState> neighbors,
                                              Vec3 pref, const AvoidanceConfig& config) {
  if (std::any_of(neighbors.begin(), neighbors.end(), [&](const AgentState& n) { return head_on(self, n); })) {
    pref = rotate_z(pref, -config.sidestep_deg);
  }
  std::vector<HalfSpaceConstraint> planes;
  planes.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    if (auto h = pair_constraint(self, n, config.horizon, config.dt)) planes.push_back(*h);
  }
  return solve_velocity(planes, pref, self.v_max, config.fallback);
}

inline VelocityCommand safe_velocity_command(const AgentState& self, std::span<const AgentState> neighbors,
                                             const Vec3& target, const AvoidanceConfig& config) {
  return command_from_preferred(self, neighbors, preferred_velocity(self, target), config);
}

/// Uniform grid over positions for radius queries.
class SpatialHash {
 public:
  SpatialHash(std::span<const AgentState> agents, double cell) : agents_(agents), cell_(cell) {
    if (!(cell > 0.0)) throw Error(Errc::invalid_argument, "spatial hash cell size must be positive");
    for (std::size_t k = 0; k < agents.size(); ++k) buckets_[key(cell_of(agents[k].position))].push_back(k);
  }

  /// Indices of agents within `radius` of `p` (inclusive), in index order.
  std::vector<std::size_t> query(const Vec3& p, double radius) const {
    std::vector<std::size_t> out;
    const auto c = cell_of(p);
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    for (int dx = -reach; dx <= reach; ++dx) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dz = -reach; dz <= reach; ++dz) {
          const auto it = buckets_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == buckets_.end()) continue;
          for (const std::size_t k : it->second) {
            if (distance(agents_[k].position, p) <= radius) out.push_back(k);
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::array<std::int64_t, 3> cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / cell_)), static_cast<std::int64_t>(std::floor(p.y / cell_)),
            static_cast<std::int64_t>(std::floor(p.z / cell_))};
  }
  static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
    // 21 bits per axis is ample for city-scale extents at >= 1 m cells.
    const auto m = [](std::int64_t v) { return static_cast<std::uint64_t>(v) & 0x1fffffu; };
    return m(c[0]) | (m(c[1]) << 21) | (m(c[2]) << 42);
  }

  std::span<const AgentState> agents_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

/// Agents j != i within i's detection radius, ordered by id.
inline std::vector<AgentState> neighbor_set(std::span<const AgentState> all, std::size_t i, const SpatialHash& hash) {
  std::vector<AgentState> out;
  for (const std::size_t k : hash.query(all[i].position, all[i].detection_radius)) {
    if (k != i) out.push_back(all[k]);
  }
  std::sort(out.begin(), out.end(), [](const AgentState& a, const AgentState& b) { return a.id < b.id; });
  return out;
}

inline std::vector<AgentState> neighbor_set(std::span<const AgentState> all, std::size_t i) {
  double cell = 0.0;
  for (const auto& a : all) cell = std::max(cell, a.detection_radius);
  if (!(cell > 0.0)) return {};
  const SpatialHash hash(all, cell);
  return neighbor_set(all, i, hash);
}

}  // namespace uam
