#include "mm/geometry.hpp"

#include <algorithm>
#include <limits>

namespace mm {

std::array<double, 3> barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    const double det = (b - a).cross(c - a);
    if (det == 0.0) return {std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
    const double l1 = (b - p).cross(c - p) / det;
    const double l2 = (c - p).cross(a - p) / det;
    return {l1, l2, 1.0 - l1 - l2};
}

Vec2 closest_point_on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    const Vec2 d = b - a;
    const double len2 = d.dot(d);
    if (len2 == 0.0) return a;
    const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
    return a + t * d;
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p, double tol) {
    const size_t n = poly.size();
    // Boundary counts as inside.
    for (size_t i = 0; i < n; ++i) {
        const Vec2 q = closest_point_on_segment(poly[i], poly[(i + 1) % n], p);
        if ((q - p).norm() <= tol) return true;
    }
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const bool cross = ((poly[i].y > p.y) != (poly[j].y > p.y)) &&
                           (p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) /
                                          (poly[j].y - poly[i].y) +
                                      poly[i].x);
        if (cross) inside = !inside;
    }
    return inside;
}

double polygon_area(const std::vector<Vec2>& poly) {
    double s = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) s += poly[i].cross(poly[(i + 1) % n]);
    return 0.5 * s;
}

namespace {

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        const double v = (q - p).cross(r - p);
        return (v > 0.0) - (v < 0.0);
    };
    const int o1 = orient(a, b, c);
    const int o2 = orient(a, b, d);
    const int o3 = orient(c, d, a);
    const int o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
               std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
    };
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

}  // namespace

bool polygon_is_simple(const std::vector<Vec2>& poly) {
    const size_t n = poly.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // Skip adjacent edges (they share an endpoint).
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

double distance_to_polygon_boundary(const std::vector<Vec2>& poly, const Vec2& p) {
    return (closest_point_on_polygon(poly, p) - p).norm();
}

Vec2 closest_point_on_polygon(const std::vector<Vec2>& poly, const Vec2& p, int* segment) {
    const size_t n = poly.size();
    double best = std::numeric_limits<double>::infinity();
    Vec2 best_q = poly.empty() ? p : poly[0];
    int best_seg = 0;
    for (size_t i = 0; i < n; ++i) {
        const Vec2 q = closest_point_on_segment(poly[i], poly[(i + 1) % n], p);
        const double d = (q - p).norm();
        if (d < best) {
            best = d;
            best_q = q;
            best_seg = static_cast<int>(i);
        }
    }
    if (segment) *segment = best_seg;
    return best_q;
}

bool in_convex_hull(const std::vector<Vec2>& points, const Vec2& p, double tol) {
    // Gift-wrap the hull, then test half-planes.
    std::vector<Vec2> pts = points;
    if (pts.empty()) return false;
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    if (pts.size() == 1) return (p - pts[0]).norm() <= tol;
    auto build_half = [&](std::vector<Vec2>& out, auto begin, auto end) {
        for (auto it = begin; it != end; ++it) {
            while (out.size() >= 2 &&
                   (out[out.size() - 1] - out[out.size() - 2]).cross(*it - out[out.size() - 2]) <= 0.0)
                out.pop_back();
            out.push_back(*it);
        }
    };
    std::vector<Vec2> lower, upper;
    build_half(lower, pts.begin(), pts.end());
    build_half(upper, pts.rbegin(), pts.rend());
    lower.pop_back();
    upper.pop_back();
    std::vector<Vec2> hull = lower;
    hull.insert(hull.end(), upper.begin(), upper.end());
    if (hull.size() < 3) {
        // Degenerate (collinear) hull: distance to the segment.
        const Vec2 q = closest_point_on_segment(hull.front(), hull.back(), p);
        return (q - p).norm() <= tol;
    }
    const size_t n = hull.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2 a = hull[i];
        const Vec2 b = hull[(i + 1) % n];
        if ((b - a).cross(p - a) < -tol * (b - a).norm()) return false;
    }
    return true;
}

}  // namespace mm
