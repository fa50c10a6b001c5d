#pragma once

#include <cmath>
#include <compare>
#include <span>
#include <vector>

namespace uam {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

constexpr double norm_sq(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm_sq(a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

/// Unit vector along `a`; the zero vector maps to itself.
inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec3{};
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, const Vec2& a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
constexpr Vec2 horizontal(const Vec3& p) { return {p.x, p.y}; }
inline double distance2(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

using Polygon2 = std::vector<Vec2>;

/// Signed area, positive for counter-clockwise vertex order.
inline double signed_area(std::span<const Vec2> poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    twice += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * twice;
}

/// Point in a convex, counter-clockwise polygon (boundary included).
inline bool in_convex(std::span<const Vec2> ccw, const Vec2& p, double tol = 1e-9) {
  for (std::size_t i = 0; i < ccw.size(); ++i) {
    const Vec2& a = ccw[i];
    const Vec2& b = ccw[(i + 1) % ccw.size()];
    if (cross2(b - a, p - a) < -tol) return false;
  }
  return true;
}

/// Sutherland-Hodgman clip of an arbitrary simple polygon against a convex
/// counter-clockwise clip polygon. The area of the result equals the area
/// of the intersection even when the subject is concave.
inline Polygon2 clip_to_convex(std::span<const Vec2> subject, std::span<const Vec2> clip_ccw) {
  Polygon2 out(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip_ccw.size() && !out.empty(); ++e) {
    const Vec2 a = clip_ccw[e];
    const Vec2 b = clip_ccw[(e + 1) % clip_ccw.size()];
    const auto side = [&](const Vec2& p) { return cross2(b - a, p - a); };
    Polygon2 in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2 cur = in[i];
      const Vec2 prev = in[(i + in.size() - 1) % in.size()];
      const double sc = side(cur);
      const double sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) out.push_back(prev + (sp / (sp - sc)) * (cur - prev));
        out.push_back(cur);
      } else if (sp >= 0.0) {
        out.push_back(prev + (sp / (sp - sc)) * (cur - prev));
      }
    }
  }
  return out;
}

}  // namespace uam
