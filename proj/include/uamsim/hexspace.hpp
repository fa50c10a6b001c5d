#pragma once

// Multi-layer hexagonal airspace: flat-top hexagons in axial (q, r)
// coordinates, one lattice per altitude layer, with vertical tubes linking
// aligned cells of adjacent layers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/geometry.hpp"

namespace uam {

struct RegionId {
  int layer = 0;
  int q = 0;
  int r = 0;

  friend constexpr auto operator<=>(const RegionId&, const RegionId&) = default;
};

inline std::string to_string(const RegionId& id) {
  return "(" + std::to_string(id.layer) + "," + std::to_string(id.q) + "," + std::to_string(id.r) + ")";
}

struct RegionIdHash {
  std::size_t operator()(const RegionId& id) const noexcept {
    std::size_t h = std::hash<int>{}(id.layer);
    h = h * 1000003u ^ std::hash<int>{}(id.q);
    h = h * 1000003u ^ std::hash<int>{}(id.r);
    return h;
  }
};

namespace hex {

struct Axial {
  int q = 0;
  int r = 0;
  friend constexpr auto operator<=>(const Axial&, const Axial&) = default;
};

// Direction k points through edge k of the hexagon, i.e. through the middle
// of triangular sub-cell k (bounded by vertices k and k+1, vertex k at 60k deg).
inline constexpr std::array<Axial, 6> kDirections{{{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}}};

constexpr Axial neighbor(Axial a, int dir) { return {a.q + kDirections[dir].q, a.r + kDirections[dir].r}; }

constexpr int distance(Axial a, Axial b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  const int ds = -dq - dr;
  return (std::abs(dq) + std::abs(dr) + std::abs(ds)) / 2;
}

inline Vec2 center(Axial a, double radius) {
  return {radius * 1.5 * a.q, radius * std::numbers::sqrt3 * (a.r + 0.5 * a.q)};
}

/// Lattice cell whose center is nearest to `p` (cube rounding).
inline Axial round_to_cell(Vec2 p, double radius) {
  const double fq = (2.0 / 3.0) * p.x / radius;
  const double fr = (-1.0 / 3.0 * p.x + std::numbers::sqrt3 / 3.0 * p.y) / radius;
  const double fs = -fq - fr;
  double rq = std::round(fq);
  double rr = std::round(fr);
  const double rs = std::round(fs);
  const double dq = std::abs(rq - fq);
  const double dr = std::abs(rr - fr);
  const double ds = std::abs(rs - fs);
  if (dq > dr && dq > ds) {
    rq = -rr - rs;
  } else if (dr > ds) {
    rr = -rq - rs;
  }
  return {static_cast<int>(rq), static_cast<int>(rr)};
}

/// Counter-clockwise vertices, vertex k at angle 60k degrees.
inline std::array<Vec2, 6> vertices(Vec2 c, double radius) {
  std::array<Vec2, 6> v{};
  for (int k = 0; k < 6; ++k) {
    const double a = std::numbers::pi / 3.0 * k;
    v[k] = {c.x + radius * std::cos(a), c.y + radius * std::sin(a)};
  }
  return v;
}

/// Triangular sub-cell k: centroid apex plus vertices k and k+1 (CCW).
inline std::array<Vec2, 3> subcell(Vec2 c, double radius, int k) {
  const auto v = vertices(c, radius);
  return {c, v[k], v[(k + 1) % 6]};
}

/// Sub-cell index containing the direction `d` (angle measured from +x).
inline int subcell_of_direction(Vec2 d) {
  double a = std::atan2(d.y, d.x);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  const int k = static_cast<int>(std::floor(a / (std::numbers::pi / 3.0)));
  return std::clamp(k, 0, 5);
}

inline double area(double radius) { return 1.5 * std::numbers::sqrt3 * radius * radius; }

/// Cells of the hexagonal ring at `ring` around `c`, counter-clockwise,
/// starting from the southern cell.
inline std::vector<Axial> ring(Axial c, int ring) {
  if (ring == 0) return {c};
  std::vector<Axial> out;
  Axial h{c.q + kDirections[4].q * ring, c.r + kDirections[4].r * ring};
  for (int side = 0; side < 6; ++side) {
    for (int step = 0; step < ring; ++step) {
      out.push_back(h);
      h = neighbor(h, side);
    }
  }
  return out;
}

}  // namespace hex

struct HexRegion {
  RegionId id;
  Vec3 centroid;
  double circumradius = 0.0;
  double n_cr = 2.0;
  double v_max_region = 20.0;
  bool closed = false;
  std::array<bool, 6> subcell_closed{};  // true = closed

  bool partially_closed() const {
    return std::any_of(subcell_closed.begin(), subcell_closed.end(), [](bool b) { return b; });
  }
};

struct TubeLink {
  RegionId lower;
  RegionId upper;
};

struct ClosureWindow {
  RegionId region;
  double start = 0.0;
  double end = 0.0;

  bool active_at(double t) const { return t >= start && t <= end; }
};

/// Horizontal extent: an axis-aligned rectangle, or a hexagon of cells
/// within `hex_radius` steps of the origin cell.
struct Bounds {
  enum class Kind { rectangle, hexagon, parallelogram };
  Kind kind = Kind::rectangle;
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  int hex_radius = 0;
  int cols = 0, rows = 0;  // parallelogram: q in [0, cols), r in [0, rows)

  static Bounds rectangle(double x0, double x1, double y0, double y1) {
    Bounds b;
    b.kind = Kind::rectangle;
    b.xmin = x0;
    b.xmax = x1;
    b.ymin = y0;
    b.ymax = y1;
    return b;
  }
  static Bounds hexagon(int radius) {
    Bounds b;
    b.kind = Kind::hexagon;
    b.hex_radius = radius;
    return b;
  }
  static Bounds parallelogram(int cols, int rows) {
    Bounds b;
    b.kind = Kind::parallelogram;
    b.cols = cols;
    b.rows = rows;
    return b;
  }
};

struct TubeSpec {
  int q = 0;
  int r = 0;
  int lower_layer = 0;
};

struct RegionDefaults {
  double n_cr = 2.0;
  double v_max_region = 20.0;
};

struct NetworkSpec {
  std::vector<double> layer_altitudes{500.0};
  double circumradius = 250.0;
  Bounds bounds = Bounds::hexagon(4);
  std::vector<TubeSpec> tubes;
  RegionDefaults defaults;
};

enum class NoFlyMode { full_cell, subcell };

struct GraphEdge {
  std::size_t to = 0;
  double weight = 0.0;
};

/// Directed routing graph over open regions. Node indices follow the
/// lexicographic order of RegionId.
class WeightedGraph {
 public:
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& a : adjacency_) n += a.size();
    return n;
  }
  const RegionId& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<RegionId>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges(std::size_t i) const { return adjacency_[i]; }

  bool contains(const RegionId& id) const { return index_.contains(id); }
  std::optional<std::size_t> index_of(const RegionId& id) const {
    if (auto it = index_.find(id); it != index_.end()) return it->second;
    return std::nullopt;
  }
  std::optional<double> weight(const RegionId& from, const RegionId& to) const {
    const auto a = index_of(from);
    const auto b = index_of(to);
    if (!a || !b) return std::nullopt;
    for (const auto& e : adjacency_[*a]) {
      if (e.to == *b) return e.weight;
    }
    return std::nullopt;
  }

  void remove_edge(std::size_t from, std::size_t to) {
    auto& adj = adjacency_[from];
    adj.erase(std::remove_if(adj.begin(), adj.end(), [to](const GraphEdge& e) { return e.to == to; }), adj.end());
  }

  /// Shortest path by Dijkstra skipping `removed` nodes. Ties are broken
  /// toward lower node indices so results are reproducible.
  std::optional<std::vector<std::size_t>> shortest_path(
      std::size_t from, std::size_t to, const std::vector<bool>& removed,
      std::optional<std::pair<std::size_t, std::size_t>> banned_edge = std::nullopt) const {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(nodes_.size(), inf);
    std::vector<std::size_t> prev(nodes_.size(), nodes_.size());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    dist[from] = 0.0;
    open.push({0.0, from});
    while (!open.empty()) {
      const auto [d, u] = open.top();
      open.pop();
      if (d > dist[u]) continue;
      if (u == to) break;
      for (const auto& e : adjacency_[u]) {
        if (removed[e.to]) continue;
        if (banned_edge && banned_edge->first == u && banned_edge->second == e.to) continue;
        const double nd = d + e.weight;
        if (nd < dist[e.to] || (nd == dist[e.to] && u < prev[e.to])) {
          const bool improved = nd < dist[e.to];
          dist[e.to] = nd;
          prev[e.to] = u;
          if (improved) open.push({nd, e.to});
        }
      }
    }
    if (dist[to] == inf) return std::nullopt;
    std::vector<std::size_t> path;
    for (std::size_t v = to; v != from; v = prev[v]) path.push_back(v);
    path.push_back(from);
    std::reverse(path.begin(), path.end());
    return path;
  }

 private:
  friend class AirspaceNetwork;

  std::vector<RegionId> nodes_;
  std::vector<std::vector<GraphEdge>> adjacency_;
  std::unordered_map<RegionId, std::size_t, RegionIdHash> index_;
};

struct NoFlyResult {
  std::vector<RegionId> regions_closed;
  std::size_t subcells_closed = 0;
};

class AirspaceNetwork {
 public:
  static AirspaceNetwork build(const NetworkSpec& spec) {
    if (!(spec.circumradius > 0.0) || !std::isfinite(spec.circumradius)) {
      throw Error(Errc::invalid_geometry, "circumradius must be positive");
    }
    if (spec.layer_altitudes.empty()) throw Error(Errc::invalid_geometry, "at least one layer is required");
    for (std::size_t i = 1; i < spec.layer_altitudes.size(); ++i) {
      if (!(spec.layer_altitudes[i] > spec.layer_altitudes[i - 1])) {
        throw Error(Errc::invalid_geometry, "layer altitudes must be strictly increasing");
      }
    }
    if (!(spec.defaults.n_cr > 0.0) || !(spec.defaults.v_max_region > 0.0)) {
      throw Error(Errc::invalid_geometry, "region n_cr and v_max must be positive");
    }

    AirspaceNetwork net;
    net.spec_ = spec;
    const double R = spec.circumradius;
    const auto cells = lattice_cells(spec.bounds, R);
    if (cells.empty()) throw Error(Errc::invalid_geometry, "bounds contain no cell");

    for (int layer = 0; layer < static_cast<int>(spec.layer_altitudes.size()); ++layer) {
      for (const auto& c : cells) {
        HexRegion reg;
        reg.id = {layer, c.q, c.r};
        const Vec2 h = hex::center(c, R);
        reg.centroid = {h.x, h.y, spec.layer_altitudes[layer]};
        reg.circumradius = R;
        reg.n_cr = spec.defaults.n_cr;
        reg.v_max_region = spec.defaults.v_max_region;
        net.regions_.push_back(reg);
      }
    }
    std::sort(net.regions_.begin(), net.regions_.end(),
              [](const HexRegion& a, const HexRegion& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < net.regions_.size(); ++i) net.index_[net.regions_[i].id] = i;

    for (const auto& t : spec.tubes) {
      if (t.lower_layer < 0 || t.lower_layer + 1 >= static_cast<int>(spec.layer_altitudes.size())) {
        throw Error(Errc::dangling_tube, "tube layer pair out of range");
      }
      const RegionId lo{t.lower_layer, t.q, t.r};
      const RegionId hi{t.lower_layer + 1, t.q, t.r};
      if (!net.index_.contains(lo) || !net.index_.contains(hi)) {
        throw Error(Errc::dangling_tube, "tube cell " + to_string(lo) + " is out of bounds");
      }
      net.tubes_.push_back({lo, hi});
    }
    net.build_labels(cells);
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  double circumradius() const { return spec_.circumradius; }
  double neighbor_spacing() const { return std::numbers::sqrt3 * spec_.circumradius; }
  std::size_t layer_count() const { return spec_.layer_altitudes.size(); }
  double layer_altitude(int layer) const { return spec_.layer_altitudes.at(static_cast<std::size_t>(layer)); }
  const std::vector<HexRegion>& regions() const { return regions_; }
  const std::vector<TubeLink>& tubes() const { return tubes_; }
  const std::vector<ClosureWindow>& closure_schedule() const { return schedule_; }
  std::size_t cells_per_layer() const { return regions_.size() / layer_count(); }

  bool contains(const RegionId& id) const { return index_.contains(id); }

  const HexRegion& region(const RegionId& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::unknown_region, to_string(id));
    return regions_[it->second];
  }
  HexRegion& region_mut(const RegionId& id) {
    const auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::unknown_region, to_string(id));
    return regions_[it->second];
  }

  /// Regions are numbered per layer in spiral order around the layer's
  /// central cell (center first, then rings counter-clockwise from the
  /// south); layer L's numbers are offset by L times the cells per layer.
  int label_of(const RegionId& id) const {
    const auto it = label_.find(id);
    if (it == label_.end()) throw Error(Errc::unknown_region, to_string(id));
    return it->second;
  }
  const RegionId& region_by_label(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= by_label_.size()) {
      throw Error(Errc::unknown_region, "R" + std::to_string(label));
    }
    return by_label_[static_cast<std::size_t>(label)];
  }

  /// Layer index whose altitude band holds `z`. Band edges sit halfway
  /// between layer altitudes and belong to the lower layer; the outermost
  /// bands are unbounded.
  int layer_of_altitude(double z) const {
    const auto& alt = spec_.layer_altitudes;
    for (std::size_t i = 0; i + 1 < alt.size(); ++i) {
      if (z <= 0.5 * (alt[i] + alt[i + 1])) return static_cast<int>(i);
    }
    return static_cast<int>(alt.size()) - 1;
  }

  bool in_bounds(const Vec3& p) const { return horizontal_cell(horizontal(p), 0).has_value(); }

  /// Region holding `p`: the altitude band picks the layer, the nearest
  /// centroid picks the cell, ties go to the lexicographically smallest id.
  RegionId locate(const Vec3& p) const {
    const int layer = layer_of_altitude(p.z);
    const auto cell = horizontal_cell(horizontal(p), layer);
    if (!cell) throw Error(Errc::out_of_bounds, "point outside the network extent");
    return {layer, cell->q, cell->r};
  }

  std::optional<RegionId> try_locate(const Vec3& p) const {
    const int layer = layer_of_altitude(p.z);
    const auto cell = horizontal_cell(horizontal(p), layer);
    if (!cell) return std::nullopt;
    return RegionId{layer, cell->q, cell->r};
  }

  /// Like locate(), but points outside the extent snap to the nearest
  /// member cell of their layer.
  RegionId locate_nearest(const Vec3& p) const {
    if (auto id = try_locate(p)) return *id;
    const int layer = layer_of_altitude(p.z);
    const Vec2 h = horizontal(p);
    const HexRegion* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& reg : regions_) {
      if (reg.id.layer != layer) continue;
      const double d = distance2(h, horizontal(reg.centroid));
      if (d < best_d) {
        best_d = d;
        best = &reg;
      }
    }
    return best->id;
  }

  bool is_closed(const RegionId& id, std::optional<double> at_time = std::nullopt) const {
    if (region(id).closed) return true;
    if (!at_time) return false;
    return std::any_of(schedule_.begin(), schedule_.end(),
                       [&](const ClosureWindow& w) { return w.region == id && w.active_at(*at_time); });
  }

  /// Regions closed at `t`, statically or by schedule, in id order.
  std::vector<RegionId> closed_regions(double t) const {
    std::vector<RegionId> out;
    for (const auto& reg : regions_) {
      if (is_closed(reg.id, t)) out.push_back(reg.id);
    }
    return out;
  }

  /// Horizontal in-layer neighbors plus tube partners, open ones only.
  std::vector<RegionId> neighbors(const RegionId& id, std::optional<double> at_time = std::nullopt) const {
    (void)region(id);
    std::vector<RegionId> out;
    for (int d = 0; d < 6; ++d) {
      const auto a = hex::neighbor({id.q, id.r}, d);
      const RegionId n{id.layer, a.q, a.r};
      if (contains(n) && !is_closed(n, at_time)) out.push_back(n);
    }
    for (const auto& t : tubes_) {
      if (t.lower == id && !is_closed(t.upper, at_time)) out.push_back(t.upper);
      if (t.upper == id && !is_closed(t.lower, at_time)) out.push_back(t.lower);
    }
    return out;
  }

  /// Routing graph over regions open at `at_time`. A horizontal edge is
  /// dropped when the sub-cell it crosses on either side is closed.
  /// `keep_open` regions are included even when closed (used to let an
  /// aircraft route out of a region that closed under it).
  WeightedGraph routing_graph(double at_time, const std::vector<RegionId>& keep_open = {}) const {
    WeightedGraph g;
    const auto usable = [&](const RegionId& id) {
      return !is_closed(id, at_time) || std::find(keep_open.begin(), keep_open.end(), id) != keep_open.end();
    };
    for (const auto& reg : regions_) {
      if (!usable(reg.id)) continue;
      g.index_[reg.id] = g.nodes_.size();
      g.nodes_.push_back(reg.id);
    }
    g.adjacency_.resize(g.nodes_.size());
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
      const RegionId& id = g.nodes_[i];
      const HexRegion& a = region(id);
      for (int d = 0; d < 6; ++d) {
        const auto c = hex::neighbor({id.q, id.r}, d);
        const RegionId n{id.layer, c.q, c.r};
        const auto j = g.index_of(n);
        if (!j) continue;
        const HexRegion& b = region(n);
        if (a.subcell_closed[d] || b.subcell_closed[(d + 3) % 6]) continue;
        g.adjacency_[i].push_back({*j, distance(a.centroid, b.centroid)});
      }
    }
    for (const auto& t : tubes_) {
      const auto lo = g.index_of(t.lower);
      const auto hi = g.index_of(t.upper);
      if (!lo || !hi) continue;
      const double w = std::abs(region(t.upper).centroid.z - region(t.lower).centroid.z);
      g.adjacency_[*lo].push_back({*hi, w});
      g.adjacency_[*hi].push_back({*lo, w});
    }
    return g;
  }

  void add_closure(const ClosureWindow& w) {
    (void)region(w.region);
    schedule_.push_back(w);
  }

  void close_region(const RegionId& id) {
    auto& reg = region_mut(id);
    reg.closed = true;
    reg.subcell_closed.fill(true);
  }

  /// Closes cells (or their triangular sub-cells) overlapping `polygon`.
  /// A zero-area polygon closes the cells containing its vertices.
  NoFlyResult apply_polygon_nofly(const Polygon2& polygon, NoFlyMode mode, std::optional<int> layer = std::nullopt) {
    if (polygon.size() < 3) throw Error(Errc::degenerate_polygon, "polygon needs at least 3 vertices");
    const double R = spec_.circumradius;
    const double eps_area = 1e-9 * R * R;
    const bool degenerate = std::abs(signed_area(polygon)) <= eps_area;
    const auto overlaps = [&](std::span<const Vec2> convex_ccw) {
      if (degenerate) {
        return std::any_of(polygon.begin(), polygon.end(), [&](const Vec2& v) { return in_convex(convex_ccw, v); });
      }
      return std::abs(signed_area(clip_to_convex(polygon, convex_ccw))) > eps_area;
    };

    NoFlyResult result;
    for (auto& reg : regions_) {
      if (layer && reg.id.layer != *layer) continue;
      if (reg.closed) continue;
      const Vec2 c = horizontal(reg.centroid);
      if (mode == NoFlyMode::full_cell) {
        const auto v = hex::vertices(c, R);
        if (overlaps(v)) {
          reg.closed = true;
          reg.subcell_closed.fill(true);
          result.regions_closed.push_back(reg.id);
        }
        continue;
      }
      for (int k = 0; k < 6; ++k) {
        if (reg.subcell_closed[k]) continue;
        const auto tri = hex::subcell(c, R, k);
        if (overlaps(tri)) {
          reg.subcell_closed[k] = true;
          ++result.subcells_closed;
        }
      }
      if (std::all_of(reg.subcell_closed.begin(), reg.subcell_closed.end(), [](bool b) { return b; })) {
        reg.closed = true;
        result.regions_closed.push_back(reg.id);
      }
    }
    return result;
  }

  /// Waypoint used when a path passes through `id`: the centroid, or for a
  /// partly closed cell a point pulled away from the closed sub-cells into
  /// the open part.
  Vec3 waypoint_for(const RegionId& id) const {
    const HexRegion& reg = region(id);
    if (!reg.partially_closed() || reg.closed) return reg.centroid;
    Vec2 pull{};
    for (int k = 0; k < 6; ++k) {
      if (!reg.subcell_closed[k]) continue;
      const double a = std::numbers::pi / 3.0 * (k + 0.5);
      pull = pull - Vec2{std::cos(a), std::sin(a)};
    }
    const double len = std::hypot(pull.x, pull.y);
    if (len < 1e-12) return reg.centroid;
    const double offset = 0.5 * reg.circumradius * std::numbers::sqrt3 / 2.0;
    const Vec2 c = horizontal(reg.centroid);
    const Vec2 cand = c + (offset / len) * pull;
    if (reg.subcell_closed[hex::subcell_of_direction(cand - c)]) return reg.centroid;
    return {cand.x, cand.y, reg.centroid.z};
  }

 private:
  static std::vector<hex::Axial> lattice_cells(const Bounds& b, double R) {
    std::vector<hex::Axial> out;
    if (b.kind == Bounds::Kind::hexagon) {
      if (b.hex_radius < 0) throw Error(Errc::invalid_geometry, "hex radius must be non-negative");
      for (int k = 0; k <= b.hex_radius; ++k) {
        for (const auto& c : hex::ring({0, 0}, k)) out.push_back(c);
      }
      return out;
    }
    if (b.kind == Bounds::Kind::parallelogram) {
      if (b.cols <= 0 || b.rows <= 0) throw Error(Errc::invalid_geometry, "empty bounds");
      for (int q = 0; q < b.cols; ++q) {
        for (int r = 0; r < b.rows; ++r) out.push_back({q, r});
      }
      return out;
    }
    if (!(b.xmax > b.xmin) || !(b.ymax > b.ymin)) throw Error(Errc::invalid_geometry, "empty bounds");
    const std::array<Vec2, 4> rect{{{b.xmin, b.ymin}, {b.xmax, b.ymin}, {b.xmax, b.ymax}, {b.xmin, b.ymax}}};
    const double eps_area = 1e-9 * R * R;
    const int q0 = static_cast<int>(std::floor((b.xmin - R) / (1.5 * R))) - 1;
    const int q1 = static_cast<int>(std::ceil((b.xmax + R) / (1.5 * R))) + 1;
    for (int q = q0; q <= q1; ++q) {
      const double row = std::numbers::sqrt3 * R;
      const int r0 = static_cast<int>(std::floor((b.ymin - R) / row - 0.5 * q)) - 1;
      const int r1 = static_cast<int>(std::ceil((b.ymax + R) / row - 0.5 * q)) + 1;
      for (int r = r0; r <= r1; ++r) {
        const auto v = hex::vertices(hex::center({q, r}, R), R);
        if (std::abs(signed_area(clip_to_convex(rect, v))) > eps_area) out.push_back({q, r});
      }
    }
    return out;
  }

  /// Nearest member cell for an in-extent point, honoring the tie rule.
  std::optional<hex::Axial> horizontal_cell(Vec2 p, int layer) const {
    const double R = spec_.circumradius;
    const double tol = 1e-9 * R;
    const auto& b = spec_.bounds;
    if (b.kind == Bounds::Kind::rectangle) {
      if (p.x < b.xmin - tol || p.x > b.xmax + tol || p.y < b.ymin - tol || p.y > b.ymax + tol) return std::nullopt;
    }
    const hex::Axial c0 = hex::round_to_cell(p, R);
    std::array<hex::Axial, 7> cand{c0};
    for (int d = 0; d < 6; ++d) cand[d + 1] = hex::neighbor(c0, d);
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& c : cand) nearest = std::min(nearest, distance2(p, hex::center(c, R)));
    // Only cells tied with the lattice-nearest center contain the point.
    std::optional<hex::Axial> best;
    for (const auto& c : cand) {
      if (!contains(RegionId{layer, c.q, c.r})) continue;
      if (distance2(p, hex::center(c, R)) > nearest + tol) continue;
      if (!best || c < *best) best = c;
    }
    return best;
  }

  void build_labels(const std::vector<hex::Axial>& cells) {
    std::set<hex::Axial> members(cells.begin(), cells.end());
    hex::Axial center{0, 0};
    if (spec_.bounds.kind != Bounds::Kind::hexagon) {
      Vec2 mid{};
      for (const auto& c : cells) mid = mid + (1.0 / static_cast<double>(cells.size())) * hex::center(c, spec_.circumradius);
      center = *std::min_element(cells.begin(), cells.end(), [&](const hex::Axial& a, const hex::Axial& c) {
        const double da = distance2(mid, hex::center(a, spec_.circumradius));
        const double dc = distance2(mid, hex::center(c, spec_.circumradius));
        return da < dc || (da == dc && a < c);
      });
    }
    std::vector<hex::Axial> order;
    for (int k = 0; order.size() < members.size(); ++k) {
      for (const auto& c : hex::ring(center, k)) {
        if (members.contains(c)) order.push_back(c);
      }
    }
    for (int layer = 0; layer < static_cast<int>(layer_count()); ++layer) {
      for (const auto& c : order) {
        const RegionId id{layer, c.q, c.r};
        label_[id] = static_cast<int>(by_label_.size());
        by_label_.push_back(id);
      }
    }
  }

  NetworkSpec spec_;
  std::vector<HexRegion> regions_;
  std::unordered_map<RegionId, std::size_t, RegionIdHash> index_;
  std::vector<TubeLink> tubes_;
  std::vector<ClosureWindow> schedule_;
  std::unordered_map<RegionId, int, RegionIdHash> label_;
  std::vector<RegionId> by_label_;
};

}  // namespace uam
