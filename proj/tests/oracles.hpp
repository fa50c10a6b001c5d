#pragma once

// Independent brute-force references shared by unit tests and the
// acceptance runner. Nothing here calls the code it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "support.hpp"
#include "uamsim/hexspace.hpp"
#include "uamsim/metrics.hpp"
#include "uamsim/orca.hpp"
#include "uamsim/routeplan.hpp"

namespace uam::testing {

/// Collision test by stepping t = tau k / steps, k = 1..steps.
inline bool sampled_vo_contains(const VelocityObstacleCone& cone, const Vec3& v, int steps = 10000) {
  for (int k = 1; k <= steps; ++k) {
    const double t = cone.horizon * k / steps;
    if (norm(v * t - cone.relative_position) < cone.combined_radius) return true;
  }
  return false;
}

/// Signed clearance min over t in [0, tau] of |v t - p| - r, in meters.
/// A velocity perturbation dv moves v t by at most tau |dv|, so
/// |gap| / tau bounds the distance to the cone boundary from below.
inline double vo_gap(const VelocityObstacleCone& cone, const Vec3& v) {
  const double vv = norm_sq(v);
  const double t = vv == 0.0 ? 0.0 : std::clamp(dot(v, cone.relative_position) / vv, 0.0, cone.horizon);
  return norm(v * t - cone.relative_position) - cone.combined_radius;
}

inline bool in_safe_set(std::span<const HalfSpaceConstraint> hs, double v_max, const Vec3& v, double tol = 0.0) {
  if (norm(v) > v_max + tol) return false;
  for (const auto& h : hs) {
    if (dot(v - h.point, h.normal) < -tol) return false;
  }
  return true;
}

struct SampledOptimum {
  bool found = false;
  Vec3 velocity;
  double distance = std::numeric_limits<double>::infinity();
};

/// Closest sampled member of the safe set to `pref`. Round one samples the
/// whole speed ball; later rounds resample shrinking balls around the best
/// point so far, starting once a member is found. `total` points are split
/// evenly over `rounds`.
inline SampledOptimum sample_safe_optimum(std::span<const HalfSpaceConstraint> hs, double v_max, const Vec3& pref,
                                          Gen& gen, long total = 1000000, int rounds = 8, double shrink = 0.5) {
  SampledOptimum best;
  const long per_round = total / rounds;
  double radius = v_max;
  Vec3 center{};
  for (int round = 0; round < rounds; ++round) {
    for (long k = 0; k < per_round; ++k) {
      const Vec3 v = center + gen.in_ball(radius);
      if (!in_safe_set(hs, v_max, v)) continue;
      const double d = distance(v, pref);
      if (d < best.distance) {
        best.distance = d;
        best.velocity = v;
        best.found = true;
      }
    }
    if (!best.found) continue;  // thin safe set: keep searching the whole ball
    center = best.velocity;
    radius *= shrink;
  }
  return best;
}

/// Exact optimum by enumeration: the nearest safe point to `pref` lies on
/// some face, edge or vertex of the arrangement of planes and speed sphere,
/// so every such projection is tried and the nearest feasible one kept.
inline SampledOptimum enumerate_safe_optimum(std::span<const HalfSpaceConstraint> hs, double v_max, const Vec3& pref,
                                             double tol = 1e-7) {
  SampledOptimum best;
  auto consider = [&](const Vec3& v) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) return;
    if (!in_safe_set(hs, v_max, v, tol)) return;
    const double d = distance(v, pref);
    if (d < best.distance) {
      best.distance = d;
      best.velocity = v;
      best.found = true;
    }
  };
  auto offset = [](const HalfSpaceConstraint& h) { return dot(h.point, h.normal); };
  // Point on planes i and j nearest the origin-shifted target, plus their direction.
  auto line = [&](const HalfSpaceConstraint& a, const HalfSpaceConstraint& b, Vec3& x0, Vec3& d) {
    d = cross(a.normal, b.normal);
    const double dd = norm_sq(d);
    if (dd < 1e-18) return false;
    x0 = (cross(b.normal, d) * offset(a) + cross(d, a.normal) * offset(b)) / dd;
    return true;
  };

  consider(pref);
  if (norm(pref) > 0.0) consider(pref * (v_max / norm(pref)));
  const std::size_t n = hs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& ni = hs[i].normal;
    const double oi = offset(hs[i]);
    const Vec3 on_plane = pref - ni * (dot(pref, ni) - oi);
    consider(on_plane);
    if (std::abs(oi) < v_max) {
      const Vec3 c = ni * oi;
      const double rho = std::sqrt(v_max * v_max - oi * oi);
      const Vec3 w = on_plane - c;
      if (norm(w) > 1e-12) consider(c + w * (rho / norm(w)));
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      Vec3 x0, d;
      if (!line(hs[i], hs[j], x0, d)) continue;
      const Vec3 u = d / norm(d);
      consider(x0 + u * dot(pref - x0, u));
      const double b = dot(x0, u);
      const double disc = b * b - (norm_sq(x0) - v_max * v_max);
      if (disc >= 0.0) {
        consider(x0 + u * (-b + std::sqrt(disc)));
        consider(x0 + u * (-b - std::sqrt(disc)));
      }
      for (std::size_t k = j + 1; k < n; ++k) {
        const double den = dot(hs[k].normal, d);
        if (std::abs(den) < 1e-12) continue;
        consider(x0 + d * ((offset(hs[k]) - dot(hs[k].normal, x0)) / den));
      }
    }
  }
  return best;
}

/// Pass-by matrix evaluated literally, one column at a time.
inline double naive_fast_cost(std::span<const Path> paths, const AirspaceNetwork& net, double leg) {
  std::size_t columns = 0;
  for (const auto& p : paths) columns = std::max(columns, p.pass_by.size());
  double total = 0.0;
  for (std::size_t j = 0; j < columns; ++j) {
    std::map<RegionId, int> n;
    for (const auto& p : paths) {
      if (j < p.pass_by.size()) ++n[p.pass_by[j]];
    }
    for (const auto& p : paths) {
      if (j >= p.pass_by.size()) continue;
      const auto& reg = net.region(p.pass_by[j]);
      const double x = reg.n_cr - n[p.pass_by[j]];
      total += leg / (reg.v_max_region * std::exp(x) / (1.0 + std::exp(x)));
    }
  }
  return total;
}

/// Agent with up to `max_neighbors` others inside its detection radius,
/// none overlapping it.
inline std::vector<AgentState> random_neighborhood(Gen& g, int max_neighbors) {
  std::vector<AgentState> out;
  AgentState self;
  self.id = 0;
  self.position = {0, 0, 500};
  self.velocity = g.in_ball(20.0);
  out.push_back(self);
  const int n = g.integer(1, max_neighbors);
  while (static_cast<int>(out.size()) <= n) {
    AgentState a;
    a.id = static_cast<int>(out.size());
    a.position = self.position + g.in_ball(200.0);
    if (distance(a.position, self.position) <= 100.0) continue;
    a.velocity = g.in_ball(20.0);
    out.push_back(a);
  }
  return out;
}

/// Samples of the fitted MFD curve at uniform accumulations in
/// [0.5, 3 n_cr] with Gaussian multiplicative noise of relative size `noise`.
inline std::vector<MfdSample> synthetic_mfd(Gen& g, double alpha, double beta, double ncr, double noise, int count) {
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<MfdSample> out;
  for (int k = 0; k < count; ++k) {
    MfdSample s;
    s.accumulation = g.uniform(0.5, 3.0 * ncr);
    s.outflow = alpha * s.accumulation * std::exp(-std::pow(s.accumulation / ncr, beta) / beta) *
                (1.0 + eps(g.engine()));
    out.push_back(s);
  }
  return out;
}

}  // namespace uam::testing
