#include "mm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mm/errors.hpp"

namespace mm {

DomainSpec DomainSpec::unit_square() {
    DomainSpec d;
    d.kind = Kind::UnitSquare;
    d.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    return d;
}

DomainSpec DomainSpec::polygon(std::vector<Vec2> vertices) {
    if (vertices.size() < 3) throw InvalidDomain("polygon needs at least 3 vertices");
    if (polygon_area(vertices) < 0.0) std::reverse(vertices.begin(), vertices.end());
    if (!polygon_is_simple(vertices)) throw InvalidDomain("polygon is not simple");
    DomainSpec d;
    d.kind = Kind::Polygon;
    d.vertices = std::move(vertices);
    return d;
}

DomainSpec DomainSpec::heptagon() {
    // Irregular convex heptagon: points on an ellipse at uneven angles.
    const double cx = 0.6, cy = 0.5, rx = 0.6, ry = 0.5;
    const double deg[7] = {0, 55, 110, 160, 210, 265, 315};
    std::vector<Vec2> v;
    for (double a : deg) {
        const double t = a * M_PI / 180.0;
        v.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return polygon(std::move(v));
}

Vec2 DomainSpec::bbox_min() const {
    Vec2 lo = vertices.front();
    for (const auto& v : vertices) {
        lo.x = std::min(lo.x, v.x);
        lo.y = std::min(lo.y, v.y);
    }
    return lo;
}

Vec2 DomainSpec::bbox_max() const {
    Vec2 hi = vertices.front();
    for (const auto& v : vertices) {
        hi.x = std::max(hi.x, v.x);
        hi.y = std::max(hi.y, v.y);
    }
    return hi;
}

bool DomainSpec::contains(const Vec2& p, double tol) const {
    return point_in_polygon(vertices, p, tol);
}

Mesh::Mesh(DomainSpec domain, std::vector<Vec2> nodes, std::vector<BoundaryTag> tags,
           std::vector<Triangle> triangles)
    : domain_(std::move(domain)),
      nodes_(std::move(nodes)),
      tags_(std::move(tags)),
      triangles_(std::move(triangles)) {
    if (tags_.size() != nodes_.size()) throw InvalidArgument("tags/nodes length mismatch");
    const int n = node_count();
    for (const auto& t : triangles_) {
        for (int v : t)
            if (v < 0 || v >= n) throw InvalidMesh("triangle references missing node");
        if (signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]) <= 0.0)
            throw InvalidMesh("triangle with non-positive area in reference configuration");
    }
}

const std::vector<std::pair<int, int>>& Mesh::undirected_edges() const {
    if (edges_.empty() && !triangles_.empty()) {
        std::set<std::pair<int, int>> s;
        for (const auto& t : triangles_) {
            for (int e = 0; e < 3; ++e) {
                int a = t[e], b = t[(e + 1) % 3];
                s.insert({std::min(a, b), std::max(a, b)});
            }
        }
        edges_.assign(s.begin(), s.end());
    }
    return edges_;
}

const std::vector<std::vector<int>>& Mesh::adjacency() const {
    if (adjacency_.empty()) {
        adjacency_.resize(nodes_.size());
        for (const auto& [a, b] : undirected_edges()) {
            adjacency_[a].push_back(b);
            adjacency_[b].push_back(a);
        }
        for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
    }
    return adjacency_;
}

double Mesh::total_area(const std::vector<Vec2>& coords) const {
    double s = 0.0;
    for (const auto& t : triangles_) s += signed_area(coords[t[0]], coords[t[1]], coords[t[2]]);
    return s;
}

Mesh build_unit_square_mesh(int n) {
    if (n < 2) throw InvalidArgument("build_unit_square_mesh: n must be >= 2");
    std::vector<Vec2> nodes;
    std::vector<BoundaryTag> tags;
    nodes.reserve(static_cast<size_t>(n) * n);
    const double h = 1.0 / (n - 1);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            nodes.push_back({i * h, j * h});
            BoundaryTag tag;
            const bool left = i == 0, right = i == n - 1, bottom = j == 0, top = j == n - 1;
            if ((left || right) && (bottom || top)) {
                tag.kind = BoundaryTag::Corner;
                tag.segment = bottom ? (left ? 0 : 1) : (right ? 2 : 3);
            } else if (bottom) {
                tag = {BoundaryTag::Edge, 0};
            } else if (right) {
                tag = {BoundaryTag::Edge, 1};
            } else if (top) {
                tag = {BoundaryTag::Edge, 2};
            } else if (left) {
                tag = {BoundaryTag::Edge, 3};
            }
            tags.push_back(tag);
        }
    }
    std::vector<Triangle> tris;
    tris.reserve(2 * static_cast<size_t>(n - 1) * (n - 1));
    auto id = [n](int i, int j) { return j * n + i; };
    for (int j = 0; j < n - 1; ++j) {
        for (int i = 0; i < n - 1; ++i) {
            // Split along the lower-left to upper-right diagonal.
            tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return Mesh(DomainSpec::unit_square(), std::move(nodes), std::move(tags), std::move(tris));
}

namespace {

// Incircle predicate in extended precision: p strictly inside the circumcircle
// of CCW triangle (a,b,c).
bool in_circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    const long double ax = a.x - p.x, ay = a.y - p.y;
    const long double bx = b.x - p.x, by = b.y - p.y;
    const long double cx = c.x - p.x, cy = c.y - p.y;
    const long double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                            (bx * bx + by * by) * (ax * cy - cx * ay) +
                            (cx * cx + cy * cy) * (ax * by - bx * ay);
    return det > 0.0L;
}

// Deterministic hash-based jitter in [-1, 1].
double hash_jitter(uint64_t i, uint64_t salt) {
    uint64_t z = i * 0x9E3779B97F4A7C15ull + salt;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return 2.0 * (static_cast<double>(z >> 11) * 0x1.0p-53) - 1.0;
}

std::vector<Triangle> delaunay(const std::vector<Vec2>& pts) {
    // Bowyer-Watson with a super-triangle; deterministic insertion order.
    std::vector<Vec2> v = pts;
    Vec2 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    const double span = std::max(hi.x - lo.x, hi.y - lo.y);
    const Vec2 mid{(lo.x + hi.x) / 2, (lo.y + hi.y) / 2};
    const int s0 = static_cast<int>(v.size());
    v.push_back({mid.x - 20 * span, mid.y - 10 * span});
    v.push_back({mid.x + 20 * span, mid.y - 10 * span});
    v.push_back({mid.x, mid.y + 20 * span});

    std::vector<Triangle> tris = {{s0, s0 + 1, s0 + 2}};
    for (int ip = 0; ip < s0; ++ip) {
        const Vec2& p = v[static_cast<size_t>(ip)];
        std::vector<Triangle> keep;
        std::map<std::pair<int, int>, int> edge_count;
        for (const auto& t : tris) {
            if (in_circumcircle(v[t[0]], v[t[1]], v[t[2]], p)) {
                for (int e = 0; e < 3; ++e) {
                    int a = t[e], b = t[(e + 1) % 3];
                    edge_count[{std::min(a, b), std::max(a, b)}]++;
                }
            } else {
                keep.push_back(t);
            }
        }
        // Cavity boundary edges appear exactly once; re-fan from p.
        std::vector<std::array<int, 2>> boundary;
        for (const auto& t : tris) {
            if (!in_circumcircle(v[t[0]], v[t[1]], v[t[2]], p)) continue;
            for (int e = 0; e < 3; ++e) {
                int a = t[e], b = t[(e + 1) % 3];
                if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) boundary.push_back({a, b});
            }
        }
        tris = std::move(keep);
        for (const auto& [a, b] : boundary) tris.push_back({a, b, ip});
    }
    std::vector<Triangle> out;
    for (auto t : tris) {
        if (t[0] >= s0 || t[1] >= s0 || t[2] >= s0) continue;
        if (signed_area(v[t[0]], v[t[1]], v[t[2]]) < 0.0) std::swap(t[1], t[2]);
        out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

Mesh build_polygon_mesh(const DomainSpec& domain, int density) {
    if (domain.kind != DomainSpec::Kind::Polygon && domain.kind != DomainSpec::Kind::UnitSquare)
        throw InvalidDomain("build_polygon_mesh: polygon domain required");
    if (density < 3) throw InvalidArgument("build_polygon_mesh: density must be >= 3");
    const auto& poly = domain.vertices;
    if (!polygon_is_simple(poly)) throw InvalidDomain("build_polygon_mesh: polygon is not simple");

    std::vector<Vec2> pts;
    std::vector<BoundaryTag> tags;
    const int nseg = domain.segment_count();
    for (int k = 0; k < nseg; ++k) {
        const Vec2 a = domain.segment_start(k);
        const Vec2 b = domain.segment_end(k);
        const double len = (b - a).norm();
        const int m = std::max(1, static_cast<int>(std::lround(len * density)));
        for (int i = 0; i < m; ++i) {
            const double t = static_cast<double>(i) / m;
            pts.push_back(a + t * (b - a));
            if (i == 0)
                tags.push_back({BoundaryTag::Corner, k});
            else
                tags.push_back({BoundaryTag::Edge, k});
        }
    }
    // Interior lattice with deterministic jitter to break cocircular degeneracy.
    const double h = 1.0 / density;
    const Vec2 lo = domain.bbox_min(), hi = domain.bbox_max();
    const int gx = static_cast<int>(std::floor((hi.x - lo.x) / h));
    const int gy = static_cast<int>(std::floor((hi.y - lo.y) / h));
    uint64_t idx = 0;
    for (int j = 1; j <= gy; ++j) {
        for (int i = 1; i <= gx; ++i, ++idx) {
            Vec2 p{lo.x + i * h, lo.y + j * h};
            p.x += 0.05 * h * hash_jitter(idx, 0x5157u);
            p.y += 0.05 * h * hash_jitter(idx, 0xA3C9u);
            if (!domain.contains(p, 0.0)) continue;
            if (distance_to_polygon_boundary(poly, p) < 0.55 * h) continue;
            pts.push_back(p);
            tags.push_back({});
        }
    }

    auto tris = delaunay(pts);
    std::vector<Triangle> kept;
    for (const auto& t : tris) {
        const Vec2 c = (pts[t[0]] + pts[t[1]] + pts[t[2]]) * (1.0 / 3.0);
        if (!domain.contains(c, 1e-12)) continue;
        if (signed_area(pts[t[0]], pts[t[1]], pts[t[2]]) <= 0.0) continue;
        kept.push_back(t);
    }
    // Drop orphan nodes (outside-clipped lattice points never referenced).
    std::vector<int> remap(pts.size(), -1);
    std::vector<Vec2> nodes;
    std::vector<BoundaryTag> node_tags;
    for (const auto& t : kept)
        for (int vtx : t)
            if (remap[vtx] < 0) {
                remap[vtx] = static_cast<int>(nodes.size());
                nodes.push_back(pts[vtx]);
                node_tags.push_back(tags[vtx]);
            }
    for (auto& t : kept)
        for (int& vtx : t) vtx = remap[vtx];
    return Mesh(domain, std::move(nodes), std::move(node_tags), std::move(kept));
}

double inversion_fraction(const Mesh& mesh, const std::vector<Vec2>& coords) {
    if (coords.size() != mesh.nodes().size())
        throw InvalidArgument("inversion_fraction: coords length mismatch");
    if (mesh.triangle_count() == 0) return 0.0;
    int bad = 0;
    for (const auto& t : mesh.triangles())
        if (signed_area(coords[t[0]], coords[t[1]], coords[t[2]]) <= 0.0) ++bad;
    return static_cast<double>(bad) / mesh.triangle_count();
}

MeshGraph mesh_to_graph(const Mesh& mesh, const std::vector<std::vector<double>>& node_payload) {
    if (static_cast<int>(node_payload.size()) != mesh.node_count())
        throw InvalidArgument("mesh_to_graph: payload length mismatch");
    MeshGraph g;
    g.node_count = mesh.node_count();
    g.node_features = node_payload;
    for (const auto& [a, b] : mesh.undirected_edges()) {
        g.edges.emplace_back(a, b);
        g.edges.emplace_back(b, a);
    }
    g.edge_features.reserve(g.edges.size());
    for (const auto& [i, j] : g.edges) {
        const Vec2 d = mesh.node(i) - mesh.node(j);
        g.edge_features.push_back({d.x, d.y, d.norm()});
    }
    return g;
}

TriangleLocator::TriangleLocator(const Mesh& mesh, const std::vector<Vec2>& coords)
    : mesh_(mesh), coords_(coords) {
    lo_ = hi_ = coords_[0];
    for (const auto& p : coords_) {
        lo_.x = std::min(lo_.x, p.x);
        lo_.y = std::min(lo_.y, p.y);
        hi_.x = std::max(hi_.x, p.x);
        hi_.y = std::max(hi_.y, p.y);
    }
    const int n = std::max(1, static_cast<int>(std::sqrt(mesh.triangle_count() / 2.0)));
    nx_ = ny_ = n;
    cells_.resize(static_cast<size_t>(nx_) * ny_);
    const double wx = std::max(hi_.x - lo_.x, 1e-300) / nx_;
    const double wy = std::max(hi_.y - lo_.y, 1e-300) / ny_;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[t];
        Vec2 tlo = coords_[tri[0]], thi = tlo;
        for (int v : tri) {
            tlo.x = std::min(tlo.x, coords_[v].x);
            tlo.y = std::min(tlo.y, coords_[v].y);
            thi.x = std::max(thi.x, coords_[v].x);
            thi.y = std::max(thi.y, coords_[v].y);
        }
        const int i0 = std::clamp(static_cast<int>((tlo.x - lo_.x) / wx), 0, nx_ - 1);
        const int i1 = std::clamp(static_cast<int>((thi.x - lo_.x) / wx), 0, nx_ - 1);
        const int j0 = std::clamp(static_cast<int>((tlo.y - lo_.y) / wy), 0, ny_ - 1);
        const int j1 = std::clamp(static_cast<int>((thi.y - lo_.y) / wy), 0, ny_ - 1);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) cells_[static_cast<size_t>(j) * nx_ + i].push_back(t);
    }
}

int TriangleLocator::cell_index(const Vec2& p) const {
    const double wx = std::max(hi_.x - lo_.x, 1e-300) / nx_;
    const double wy = std::max(hi_.y - lo_.y, 1e-300) / ny_;
    const int i = std::clamp(static_cast<int>((p.x - lo_.x) / wx), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>((p.y - lo_.y) / wy), 0, ny_ - 1);
    return j * nx_ + i;
}

std::optional<int> TriangleLocator::locate(const Vec2& p, double tol) const {
    for (int t : cells_[static_cast<size_t>(cell_index(p))]) {
        const auto& tri = mesh_.triangles()[t];
        const auto l = barycentric(coords_[tri[0]], coords_[tri[1]], coords_[tri[2]], p);
        if (l[0] >= -tol && l[1] >= -tol && l[2] >= -tol) return t;
    }
    // Fallback for points on cell boundaries or sliver geometry.
    for (int t = 0; t < mesh_.triangle_count(); ++t) {
        const auto& tri = mesh_.triangles()[t];
        const auto l = barycentric(coords_[tri[0]], coords_[tri[1]], coords_[tri[2]], p);
        if (l[0] >= -tol && l[1] >= -tol && l[2] >= -tol) return t;
    }
    return std::nullopt;
}

int TriangleLocator::locate_nearest(const Vec2& p) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh_.triangle_count(); ++t) {
        const auto& tri = mesh_.triangles()[t];
        for (int e = 0; e < 3; ++e) {
            const Vec2 q =
                closest_point_on_segment(coords_[tri[e]], coords_[tri[(e + 1) % 3]], p);
            const double d = (q - p).norm();
            if (d < best_d) {
                best_d = d;
                best = t;
            }
        }
    }
    return best;
}

}  // namespace mm
