#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mm/errors.hpp"
#include "mm/mesh.hpp"
#include "mm/mesh_io.hpp"

using namespace mm;

TEST_CASE("unit square mesh construction") {
    SUBCASE("smallest mesh") {
        const Mesh m = build_unit_square_mesh(2);
        CHECK(m.node_count() == 4);
        CHECK(m.triangle_count() == 2);
        for (int i = 0; i < 4; ++i) CHECK(m.tag(i).is_boundary());
    }
    SUBCASE("counts at n=15") {
        const Mesh m = build_unit_square_mesh(15);
        CHECK(m.node_count() == 225);
        CHECK(m.triangle_count() == 392);
    }
    SUBCASE("single interior node at n=3") {
        const Mesh m = build_unit_square_mesh(3);
        int interior = 0;
        Vec2 pos;
        for (int i = 0; i < m.node_count(); ++i) {
            if (!m.tag(i).is_boundary()) {
                ++interior;
                pos = m.node(i);
            }
        }
        CHECK(interior == 1);
        CHECK(pos.x == doctest::Approx(0.5));
        CHECK(pos.y == doctest::Approx(0.5));
    }
    SUBCASE("rejects n < 2") { CHECK_THROWS_AS(build_unit_square_mesh(1), InvalidArgument); }
    SUBCASE("all triangles CCW and area sums to 1") {
        const Mesh m = build_unit_square_mesh(7);
        CHECK(inversion_fraction(m, m.nodes()) == 0.0);
        CHECK(m.total_area() == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("edge tags lie on their segment") {
        const Mesh m = build_unit_square_mesh(9);
        for (int i = 0; i < m.node_count(); ++i) {
            const auto& tag = m.tag(i);
            if (tag.kind != BoundaryTag::Edge) continue;
            const Vec2 a = m.domain().segment_start(tag.segment);
            const Vec2 b = m.domain().segment_end(tag.segment);
            const Vec2 q = closest_point_on_segment(a, b, m.node(i));
            CHECK((q - m.node(i)).norm() < 1e-12);
        }
    }
}

TEST_CASE("signed area") {
    CHECK(signed_area({0, 0}, {1, 0}, {0, 1}) == doctest::Approx(0.5));
    CHECK(signed_area({0, 0}, {0, 1}, {1, 0}) == doctest::Approx(-0.5));

    // Shoelace oracle on random triangles.
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    for (int k = 0; k < 100; ++k) {
        const Vec2 a{uni(rng), uni(rng)}, b{uni(rng), uni(rng)}, c{uni(rng), uni(rng)};
        const double shoelace =
            0.5 * (a.x * b.y - b.x * a.y + b.x * c.y - c.x * b.y + c.x * a.y - a.x * c.y);
        CHECK(signed_area(a, b, c) == doctest::Approx(shoelace).epsilon(1e-14));
    }
}

TEST_CASE("inversion fraction") {
    const Mesh m = build_unit_square_mesh(3);
    SUBCASE("reference configuration is valid") {
        CHECK(inversion_fraction(m, m.nodes()) == 0.0);
    }
    SUBCASE("reflected interior node inverts elements") {
        auto coords = m.nodes();
        int center = -1;
        for (int i = 0; i < m.node_count(); ++i)
            if (!m.tag(i).is_boundary()) center = i;
        coords[center] = {0.5, 1.5};  // reflect across the top edge
        const double frac = inversion_fraction(m, coords);
        CHECK(frac > 0.0);
        // Independent signed-area count.
        int bad = 0;
        for (const auto& t : m.triangles())
            if (signed_area(coords[t[0]], coords[t[1]], coords[t[2]]) <= 0.0) ++bad;
        CHECK(frac == doctest::Approx(double(bad) / m.triangle_count()));
    }
    SUBCASE("similarity transforms preserve orientation") {
        auto coords = m.nodes();
        for (auto& p : coords) p = Vec2{2 * p.x + 3.0, 2 * p.y - 1.0};
        CHECK(inversion_fraction(m, coords) == 0.0);
    }
    SUBCASE("length mismatch") {
        std::vector<Vec2> wrong(3);
        CHECK_THROWS_AS(inversion_fraction(m, wrong), InvalidArgument);
    }
}

TEST_CASE("mesh_to_graph") {
    SUBCASE("two-triangle square doubles its five edges") {
        const Mesh m = build_unit_square_mesh(2);
        REQUIRE(m.undirected_edges().size() == 5);
        const auto g = mesh_to_graph(m, std::vector<std::vector<double>>(4));
        CHECK(g.edges.size() == 10);
        CHECK(g.edge_features.size() == 10);
    }
    SUBCASE("empty payload vectors are allowed") {
        const Mesh m = build_unit_square_mesh(3);
        const auto g = mesh_to_graph(m, std::vector<std::vector<double>>(9));
        CHECK(g.node_count == 9);
        for (const auto& f : g.node_features) CHECK(f.empty());
    }
    SUBCASE("directed edge count equals twice an independent adjacency enumeration") {
        const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), 6);
        std::set<std::pair<int, int>> undirected;
        for (const auto& t : m.triangles())
            for (int e = 0; e < 3; ++e) {
                const int a = t[e], b = t[(e + 1) % 3];
                undirected.insert({std::min(a, b), std::max(a, b)});
            }
        const auto g = mesh_to_graph(m, std::vector<std::vector<double>>(m.node_count()));
        CHECK(g.edges.size() == 2 * undirected.size());
        // Edge-set collapse recovers the undirected edge set exactly.
        std::set<std::pair<int, int>> collapsed;
        for (const auto& [i, j] : g.edges) collapsed.insert({std::min(i, j), std::max(i, j)});
        CHECK(collapsed == undirected);
    }
}

TEST_CASE("polygon meshing") {
    SUBCASE("square as polygon tracks the structured construction") {
        const int n = 9;
        const auto domain = DomainSpec::polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
        const Mesh poly = build_polygon_mesh(domain, n - 1);
        const Mesh structured = build_unit_square_mesh(n);
        CHECK(std::abs(poly.node_count() - structured.node_count()) <=
              0.2 * structured.node_count());
        CHECK(std::abs(poly.triangle_count() - structured.triangle_count()) <=
              0.2 * structured.triangle_count());
    }
    SUBCASE("no inverted triangles and exact area cover") {
        for (int density : {5, 9, 13}) {
            const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), density);
            CHECK(inversion_fraction(m, m.nodes()) == 0.0);
            CHECK(m.total_area() ==
                  doctest::Approx(m.domain().area()).epsilon(1e-10));
        }
    }
    SUBCASE("deterministic") {
        const Mesh a = build_polygon_mesh(DomainSpec::heptagon(), 8);
        const Mesh b = build_polygon_mesh(DomainSpec::heptagon(), 8);
        REQUIRE(a.node_count() == b.node_count());
        REQUIRE(a.triangles() == b.triangles());
        for (int i = 0; i < a.node_count(); ++i) {
            CHECK(a.node(i).x == b.node(i).x);
            CHECK(a.node(i).y == b.node(i).y);
        }
    }
    SUBCASE("non-simple polygon rejected") {
        CHECK_THROWS_AS(DomainSpec::polygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), InvalidDomain);
    }
    SUBCASE("boundary tags on their segments") {
        const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), 7);
        for (int i = 0; i < m.node_count(); ++i) {
            const auto& tag = m.tag(i);
            if (tag.kind != BoundaryTag::Edge) continue;
            const Vec2 q = closest_point_on_segment(m.domain().segment_start(tag.segment),
                                                    m.domain().segment_end(tag.segment),
                                                    m.node(i));
            CHECK((q - m.node(i)).norm() < 1e-12);
        }
    }
}

TEST_CASE("mesh text format round trip") {
    const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), 6);
    std::stringstream ss;
    write_mesh(ss, m);
    const Mesh r = read_mesh(ss);
    REQUIRE(r.node_count() == m.node_count());
    REQUIRE(r.triangles() == m.triangles());
    for (int i = 0; i < m.node_count(); ++i) {
        CHECK(r.node(i).x == m.node(i).x);
        CHECK(r.node(i).y == m.node(i).y);
        CHECK(r.tag(i) == m.tag(i));
    }
}

TEST_CASE("values block round trip and svg output") {
    const Mesh m = build_unit_square_mesh(4);
    std::vector<double> v(m.node_count());
    for (int i = 0; i < m.node_count(); ++i) v[i] = std::sin(i * 0.7);
    std::stringstream ss;
    write_mesh(ss, m);
    write_values_block(ss, "u", {v});
    ss.seekg(0);
    const auto cols = read_values_block(ss, "u");
    REQUIRE(cols.size() == 1);
    CHECK(cols[0] == v);

    const std::string svg = mesh_to_svg(m, m.nodes(), &v, {.fill_field = true});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polygon") != std::string::npos);
}

TEST_CASE("convex hull membership predicate") {
    const std::vector<Vec2> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(in_convex_hull(pts, {0.5, 0.5}));
    CHECK(in_convex_hull(pts, {0.0, 0.0}));
    CHECK(!in_convex_hull(pts, {1.2, 0.5}));
}
