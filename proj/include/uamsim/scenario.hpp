#pragma once

// Demand generation and preset scenarios. All randomness flows from one
// explicit seed; per-flow streams are derived with std::seed_seq so event
// lists do not depend on flow evaluation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/geometry.hpp"
#include "uamsim/hexspace.hpp"
#include "uamsim/routeplan.hpp"

namespace uam {

/// Spawn/arrival area: a horizontal disc, or a whole region's hexagon.
struct Zone {
  enum class Kind { disc, region };
  Kind kind = Kind::disc;
  Vec2 center;
  double radius = 0.0;
  RegionId region;

  static Zone disc(Vec2 c, double r) { return {Kind::disc, c, r, {}}; }
  static Zone of_region(const RegionId& id) { return {Kind::region, {}, 0.0, id}; }
};

/// Piecewise-constant rate: rates[k] applies on [breakpoints[k], breakpoints[k+1]),
/// the last rate until the horizon.
struct RateProfile {
  std::vector<double> breakpoints{0.0};
  std::vector<double> rates{0.0};

  static RateProfile constant(double rate) { return {{0.0}, {rate}}; }

  double at(double t) const {
    double r = 0.0;
    for (std::size_t k = 0; k < breakpoints.size() && breakpoints[k] <= t; ++k) r = rates[k];
    return r;
  }

  void validate() const {
    if (breakpoints.empty() || breakpoints.size() != rates.size()) {
      throw Error(Errc::config, "rate profile needs one rate per breakpoint");
    }
    for (std::size_t k = 0; k < rates.size(); ++k) {
      if (!(rates[k] >= 0.0)) throw Error(Errc::config, "rates must be non-negative");
      if (k > 0 && !(breakpoints[k] > breakpoints[k - 1])) {
        throw Error(Errc::config, "rate breakpoints must be strictly increasing");
      }
    }
  }
};

struct Flow {
  Zone origin;
  Zone destination;
  RateProfile rate;
  double z_min = 500.0;
  double z_max = 500.0;
};

struct DemandSpec {
  std::vector<Flow> flows;
  std::uint64_t seed = 1;
};

struct SpawnEvent {
  double time = 0.0;
  Vec3 origin;
  Vec3 destination;
  int flow = 0;
};

enum class GuidanceMode { proposed, baseline };

inline const char* to_string(GuidanceMode m) { return m == GuidanceMode::proposed ? "proposed" : "baseline"; }

struct ClosureSpec {
  RegionId region;
  double start = 0.0;
  double end = 0.0;
};

struct PolygonNoFly {
  Polygon2 polygon;
  NoFlyMode mode = NoFlyMode::full_cell;
  std::optional<int> layer;
};

struct MeasurementZone {
  Vec2 center;
  double radius = 500.0;

  double area_km2() const { return std::numbers::pi * radius * radius * 1e-6; }
  bool contains(const Vec3& p) const { return distance2(horizontal(p), center) <= radius; }
};

struct ScenarioConfig {
  std::string name = "custom";
  NetworkSpec network;
  DemandSpec demand;
  std::vector<ClosureSpec> closures;
  std::vector<PolygonNoFly> nofly;
  GuidanceMode mode = GuidanceMode::proposed;
  double horizon = 3000.0;
  MeasurementZone zone;

  void validate() const {
    if (!(horizon >= 0.0)) throw Error(Errc::config, "horizon must be non-negative");
    if (!(zone.radius > 0.0)) throw Error(Errc::zero_area_zone, "measurement zone radius must be positive");
    for (const auto& f : demand.flows) {
      f.rate.validate();
      if (f.z_max < f.z_min) throw Error(Errc::config, "flow altitude band is inverted");
    }
    for (const auto& c : closures) {
      if (c.end < c.start) throw Error(Errc::config, "closure ends before it starts");
    }
  }

  /// Network with static no-fly polygons and closure schedules applied.
  AirspaceNetwork build_network() const {
    auto net = AirspaceNetwork::build(network);
    for (const auto& nf : nofly) net.apply_polygon_nofly(nf.polygon, nf.mode, nf.layer);
    for (const auto& c : closures) net.add_closure({c.region, c.start, c.end});
    return net;
  }
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; portable across standard
/// libraries, unlike std::uniform_real_distribution.
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double exponential(std::mt19937_64& rng, double rate) { return -std::log(1.0 - unit(rng)) / rate; }

inline Vec2 sample_zone(const Zone& z, std::mt19937_64& rng, const AirspaceNetwork& net) {
  if (z.kind == Zone::Kind::disc) {
    const double r = z.radius * std::sqrt(unit(rng));
    const double a = 2.0 * std::numbers::pi * unit(rng);
    return {z.center.x + r * std::cos(a), z.center.y + r * std::sin(a)};
  }
  const HexRegion& reg = net.region(z.region);
  const Vec2 c = horizontal(reg.centroid);
  const auto hexagon = hex::vertices(c, reg.circumradius);
  const double R = reg.circumradius;
  const double h = std::numbers::sqrt3 / 2.0 * R;
  while (true) {
    const Vec2 p{c.x + (2.0 * unit(rng) - 1.0) * R, c.y + (2.0 * unit(rng) - 1.0) * h};
    if (in_convex(hexagon, p, 0.0)) return p;
  }
}

}  // namespace detail

/// Poisson arrivals per flow under its piecewise-constant rate (exact, by
/// restarting the exponential clock at each breakpoint). Positions are
/// uniform in the zones, altitudes uniform in the flow band; draws that
/// land in a closed region or outside the extent are redrawn.
inline std::vector<SpawnEvent> generate_demand(const DemandSpec& spec, double horizon, const AirspaceNetwork& net) {
  std::vector<SpawnEvent> events;
  for (std::size_t f = 0; f < spec.flows.size(); ++f) {
    const Flow& flow = spec.flows[f];
    flow.rate.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(f)};
    std::mt19937_64 rng(seq);

    const auto draw = [&](const Zone& z, double t) -> Vec3 {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const Vec2 h = detail::sample_zone(z, rng, net);
        const double zz = flow.z_min + (flow.z_max - flow.z_min) * detail::unit(rng);
        const Vec3 p{h.x, h.y, zz};
        const auto id = net.try_locate(p);
        if (id && !net.is_closed(*id, t)) return p;
      }
      throw Error(Errc::config, "flow " + std::to_string(f) + " zone has no open region");
    };

    const auto& bp = flow.rate.breakpoints;
    double t = bp.front();
    for (std::size_t k = 0; k < bp.size() && t < horizon; ++k) {
      const double seg_end = std::min(k + 1 < bp.size() ? bp[k + 1] : horizon, horizon);
      const double rate = flow.rate.rates[k];
      t = std::max(t, bp[k]);
      if (rate <= 0.0) {
        t = seg_end;
        continue;
      }
      while (true) {
        const double next = t + detail::exponential(rng, rate);
        if (next >= seg_end) {
          t = seg_end;
          break;
        }
        t = next;
        SpawnEvent e;
        e.time = t;
        e.flow = static_cast<int>(f);
        e.origin = draw(flow.origin, t);
        do {
          e.destination = draw(flow.destination, t);
        } while (e.destination == e.origin);
        events.push_back(e);
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SpawnEvent& a, const SpawnEvent& b) {
    return a.time < b.time || (a.time == b.time && a.flow < b.flow);
  });
  return events;
}

enum class CorridorKind { plus, hash, star };
enum class AltitudeMode { flat, thin, thick };

inline std::pair<double, double> altitude_band(AltitudeMode m) {
  switch (m) {
    case AltitudeMode::flat: return {500.0, 500.0};
    case AltitudeMode::thin: return {450.0, 550.0};
    case AltitudeMode::thick: return {400.0, 600.0};
  }
  return {500.0, 500.0};
}

/// Triangular demand sweep: the rate climbs in equal steps to `peak` at
/// mid-horizon and descends symmetrically, so one run covers free flow,
/// the loading branch and recovery.
inline RateProfile sweep_profile(double peak, double horizon, int steps = 8) {
  RateProfile p;
  p.breakpoints.clear();
  p.rates.clear();
  const double w = horizon / steps;
  for (int k = 0; k < steps; ++k) {
    const double level = k < steps / 2 ? (k + 1.0) / (steps / 2) : (steps - k) / (steps / 2.0);
    p.breakpoints.push_back(k * w);
    p.rates.push_back(peak * level);
  }
  return p;
}

struct CorridorOptions {
  AltitudeMode altitude = AltitudeMode::flat;
  double rate_per_direction = 0.05;  // aircraft/s at the sweep peak, or constant
  bool sweep = true;
  double horizon = 3000.0;
  double endpoint_distance = 1400.0;  // m from the intersection
  double endpoint_radius = 100.0;     // m, spawn disc radius
  int hex_radius = 4;
  std::uint64_t seed = 1;
};

/// Corridor-intersection layouts: "+" two orthogonal corridors, "#" two
/// oblique corridors (+-30 deg), "*" three corridors 60 deg apart. Every
/// corridor carries equal flows in both directions; the measurement zone
/// is the disc at the intersection.
inline ScenarioConfig corridor_scenario(CorridorKind kind, const CorridorOptions& opt = {}) {
  ScenarioConfig cfg;
  std::vector<double> angles;
  switch (kind) {
    case CorridorKind::plus:
      cfg.name = "plus";
      angles = {0.0, 90.0};
      break;
    case CorridorKind::hash:
      cfg.name = "hash";
      angles = {30.0, -30.0};
      break;
    case CorridorKind::star:
      cfg.name = "star";
      angles = {0.0, 60.0, 120.0};
      break;
  }
  const auto [z0, z1] = altitude_band(opt.altitude);
  cfg.network.layer_altitudes = {500.0};
  cfg.network.circumradius = 250.0;
  cfg.network.bounds = Bounds::hexagon(opt.hex_radius);
  cfg.horizon = opt.horizon;
  cfg.demand.seed = opt.seed;
  cfg.zone = {{0.0, 0.0}, 2.0 * cfg.network.circumradius};
  const RateProfile rate = opt.sweep ? sweep_profile(opt.rate_per_direction, opt.horizon)
                                     : RateProfile::constant(opt.rate_per_direction);
  for (const double deg : angles) {
    const double a = deg * std::numbers::pi / 180.0;
    const Vec2 e{opt.endpoint_distance * std::cos(a), opt.endpoint_distance * std::sin(a)};
    const Zone end_a = Zone::disc(e, opt.endpoint_radius);
    const Zone end_b = Zone::disc(-1.0 * e, opt.endpoint_radius);
    cfg.demand.flows.push_back({end_a, end_b, rate, z0, z1});
    cfg.demand.flows.push_back({end_b, end_a, rate, z0, z1});
  }
  return cfg;
}

/// Two layers at 400 m and 600 m over a radius-2 hexagon, tubes at the
/// east and west cells, demand between those cells in the lower layer.
inline ScenarioConfig two_layer_scenario(double rate_per_direction = 0.05, double horizon = 3000.0,
                                         std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.name = "two-layer";
  cfg.network.layer_altitudes = {400.0, 600.0};
  cfg.network.circumradius = 250.0;
  cfg.network.bounds = Bounds::hexagon(2);
  const auto probe = AirspaceNetwork::build(cfg.network);
  const RegionId east = probe.region_by_label(10);
  const RegionId west = probe.region_by_label(16);
  cfg.network.tubes = {{east.q, east.r, 0}, {west.q, west.r, 0}};
  cfg.horizon = horizon;
  cfg.demand.seed = seed;
  cfg.zone = {{0.0, 0.0}, 2.0 * cfg.network.circumradius};
  const RateProfile rate = RateProfile::constant(rate_per_direction);
  cfg.demand.flows.push_back({Zone::of_region(east), Zone::of_region(west), rate, 400.0, 400.0});
  cfg.demand.flows.push_back({Zone::of_region(west), Zone::of_region(east), rate, 400.0, 400.0});
  return cfg;
}

/// "+" layout with the central cell and its south and north neighbors
/// (labels 0, 1, 4) closed during [start, end].
inline ScenarioConfig nofly_scenario(double rate_per_direction = 0.03, double start = 2400.0, double end = 3000.0,
                                     double horizon = 3600.0, std::uint64_t seed = 1) {
  CorridorOptions opt;
  opt.rate_per_direction = rate_per_direction;
  opt.sweep = false;
  opt.horizon = horizon;
  opt.seed = seed;
  ScenarioConfig cfg = corridor_scenario(CorridorKind::plus, opt);
  cfg.name = "nofly";
  const auto probe = AirspaceNetwork::build(cfg.network);
  for (const int label : {0, 1, 4}) cfg.closures.push_back({probe.region_by_label(label), start, end});
  return cfg;
}

/// Baseline guidance: the straight origin-destination route.
inline Path baseline_guidance(const SpawnEvent& e, const AirspaceNetwork& net) {
  return direct_path(e.origin, e.destination, net);
}

}  // namespace uam
