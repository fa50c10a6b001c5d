#pragma once

// First-order velocity-command tracking and waypoint following.

#include <algorithm>
#include <cstddef>

#include "uamsim/error.hpp"
#include "uamsim/geometry.hpp"
#include "uamsim/orca.hpp"
#include "uamsim/routeplan.hpp"

namespace uam {

enum class Phase { enroute, arrived };

inline const char* to_string(Phase p) { return p == Phase::enroute ? "enroute" : "arrived"; }

struct AircraftBody {
  AgentState agent;
  double control_gain = 5.0;  // 1/s
  Path path;
  std::size_t target_index = 0;
  Phase phase = Phase::enroute;

  const Vec3& target() const { return path.waypoints[target_index]; }
};

struct IntegratorConfig {
  double dt = 1.0;
  bool omega_clamp = true;
  double waypoint_threshold = 30.0;

  void validate() const {
    if (!(dt > 0.0) || !(waypoint_threshold > 0.0)) throw Error(Errc::config, "dt and waypoint threshold must be positive");
  }
};

inline Vec3 acceleration(const Vec3& v, const Vec3& v_cmd, double gain) { return -gain * (v - v_cmd); }

/// Advances past every waypoint already within the threshold; reaching the
/// final one marks the body arrived.
inline void advance_waypoint(AircraftBody& body, const IntegratorConfig& config) {
  if (body.phase == Phase::arrived || body.path.waypoints.empty()) return;
  const std::size_t last = body.path.waypoints.size() - 1;
  while (body.target_index < last && distance(body.agent.position, body.target()) <= config.waypoint_threshold) {
    ++body.target_index;
  }
  if (body.target_index == last && distance(body.agent.position, body.target()) <= config.waypoint_threshold) {
    body.phase = Phase::arrived;
  }
}

/// p' = p + v dt with the pre-update velocity, then v' = (1 - w) v + w v_cmd
/// with w = l dt, then the speed cap.
inline void integrate(AircraftBody& body, const Vec3& v_cmd, const IntegratorConfig& config) {
  AgentState& a = body.agent;
  a.position += a.velocity * config.dt;
  double w = body.control_gain * config.dt;
  if (config.omega_clamp) w = std::clamp(w, 0.0, 1.0);
  a.velocity = a.velocity * (1.0 - w) + v_cmd * w;
  const double speed = norm(a.velocity);
  if (speed > a.v_max) a.velocity = a.velocity * (a.v_max / speed);
}

/// integrate() followed by the waypoint advance.
inline void step(AircraftBody& body, const Vec3& v_cmd, const IntegratorConfig& config) {
  integrate(body, v_cmd, config);
  advance_waypoint(body, config);
}

}  // namespace uam
