#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mm/geometry.hpp"

namespace mm {

/// Boundary classification of a mesh node. Edge nodes carry the index of the
/// domain polygon segment they lie on; corners coincide with polygon vertices
/// and are pinned by every mover.
struct BoundaryTag {
    enum Kind : uint8_t { Interior, Edge, Corner };
    Kind kind = Interior;
    int segment = -1;  // valid for Edge; for Corner, the index of the polygon vertex

    bool is_boundary() const { return kind != Interior; }
    bool operator==(const BoundaryTag&) const = default;
};

struct DomainSpec {
    enum class Kind { UnitSquare, Polygon };
    Kind kind = Kind::UnitSquare;
    std::vector<Vec2> vertices;  // CCW; for UnitSquare the four corners

    static DomainSpec unit_square();
    static DomainSpec polygon(std::vector<Vec2> vertices);

    /// The paper-style irregular heptagon used by the polygon experiments.
    static DomainSpec heptagon();

    const std::vector<Vec2>& boundary() const { return vertices; }
    Vec2 bbox_min() const;
    Vec2 bbox_max() const;
    double area() const { return polygon_area(vertices); }
    bool contains(const Vec2& p, double tol = 1e-12) const;
    int segment_count() const { return static_cast<int>(vertices.size()); }
    Vec2 segment_start(int k) const { return vertices[static_cast<size_t>(k)]; }
    Vec2 segment_end(int k) const { return vertices[(static_cast<size_t>(k) + 1) % vertices.size()]; }
};

using Triangle = std::array<int, 3>;

/// Immutable triangle mesh with boundary tags. Topology is shared between the
/// initial configuration (stored here) and any deformed copy, which only
/// carries new coordinates.
class Mesh {
public:
    Mesh(DomainSpec domain, std::vector<Vec2> nodes, std::vector<BoundaryTag> tags,
         std::vector<Triangle> triangles);

    const DomainSpec& domain() const { return domain_; }
    const std::vector<Vec2>& nodes() const { return nodes_; }
    const std::vector<BoundaryTag>& tags() const { return tags_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int triangle_count() const { return static_cast<int>(triangles_.size()); }

    const Vec2& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
    const BoundaryTag& tag(int i) const { return tags_[static_cast<size_t>(i)]; }

    /// Undirected edge list (i < j), sorted lexicographically.
    const std::vector<std::pair<int, int>>& undirected_edges() const;

    /// Neighbor lists (1-ring, not including the node itself).
    const std::vector<std::vector<int>>& adjacency() const;

    double total_area(const std::vector<Vec2>& coords) const;
    double total_area() const { return total_area(nodes_); }

private:
    DomainSpec domain_;
    std::vector<Vec2> nodes_;
    std::vector<BoundaryTag> tags_;
    std::vector<Triangle> triangles_;
    mutable std::vector<std::pair<int, int>> edges_;
    mutable std::vector<std::vector<int>> adjacency_;
};

/// Structured n-by-n lattice over the unit square, each cell split along its
/// lower-left to upper-right diagonal.
Mesh build_unit_square_mesh(int n);

/// Deterministic triangulation of a simple polygon: boundary subdivided about
/// `density` times per unit length plus an interior lattice, Delaunay
/// triangulated and clipped to the polygon.
Mesh build_polygon_mesh(const DomainSpec& domain, int density);

/// Fraction of triangles with non-positive signed area under `coords`.
double inversion_fraction(const Mesh& mesh, const std::vector<Vec2>& coords);

struct MeshGraph {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;        // directed, both orientations
    std::vector<std::vector<double>> node_features;
    std::vector<std::vector<double>> edge_features;
};

/// Graph view of the mesh: every undirected edge becomes two directed edges.
/// Edge features start as [dx, dy, length] of the directed displacement.
MeshGraph mesh_to_graph(const Mesh& mesh, const std::vector<std::vector<double>>& node_payload);

/// Uniform-grid point locator over a triangulation with given coordinates.
class TriangleLocator {
public:
    TriangleLocator(const Mesh& mesh, const std::vector<Vec2>& coords);

    /// Triangle containing p (barycentric tolerance), or nullopt if outside.
    std::optional<int> locate(const Vec2& p, double tol = 1e-9) const;

    /// Triangle whose closest point to p is nearest; always succeeds.
    int locate_nearest(const Vec2& p) const;

private:
    const Mesh& mesh_;
    std::vector<Vec2> coords_;
    Vec2 lo_, hi_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> cells_;

    int cell_index(const Vec2& p) const;
};

}  // namespace mm
