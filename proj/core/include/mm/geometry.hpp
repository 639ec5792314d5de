#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace mm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// Signed area of the triangle (a,b,c); positive iff counter-clockwise.
inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * (b - a).cross(c - a);
}

/// Barycentric coordinates of p with respect to triangle (a,b,c).
std::array<double, 3> barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p);

/// Closest point to p on segment [a,b].
Vec2 closest_point_on_segment(const Vec2& a, const Vec2& b, const Vec2& p);

/// Even-odd point-in-polygon test; points on the boundary count as inside.
bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p, double tol = 1e-12);

/// Signed area of a simple polygon (shoelace); positive iff CCW.
double polygon_area(const std::vector<Vec2>& poly);

/// True if the polygon is simple (no two non-adjacent edges intersect).
bool polygon_is_simple(const std::vector<Vec2>& poly);

/// Distance from p to the polygon boundary.
double distance_to_polygon_boundary(const std::vector<Vec2>& poly, const Vec2& p);

/// Closest point on the polygon boundary to p; also reports the segment index.
Vec2 closest_point_on_polygon(const std::vector<Vec2>& poly, const Vec2& p, int* segment = nullptr);

/// Point-in-convex-hull predicate for a small point set (hull built on the fly).
bool in_convex_hull(const std::vector<Vec2>& points, const Vec2& p, double tol = 1e-10);

}  // namespace mm
