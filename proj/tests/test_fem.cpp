#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mm/errors.hpp"
#include "mm/fem.hpp"
#include "mm/mesh.hpp"

using namespace mm;

namespace {
constexpr double kPi = std::numbers::pi;

ScalarField nodal(const Mesh& m, const std::function<double(Vec2)>& f) {
    ScalarField out(m);
    for (int i = 0; i < m.node_count(); ++i) out[i] = f(m.node(i));
    return out;
}
}  // namespace

TEST_CASE("poisson reproduces linear fields exactly") {
    const Mesh m = build_unit_square_mesh(7);
    const ScalarField f(m, 0.0);
    const ScalarField u = solve_poisson(m, f, [](Vec2 p) { return p.x; });
    for (int i = 0; i < m.node_count(); ++i)
        CHECK(u[i] == doctest::Approx(m.node(i).x).epsilon(1e-10));
}

TEST_CASE("poisson manufactured-solution convergence rate") {
    // u = sin(pi x) sin(pi y), f = 2 pi^2 u.
    std::vector<double> errors;
    std::vector<double> hs;
    for (int n : {9, 17, 33}) {
        const Mesh m = build_unit_square_mesh(n);
        const ScalarField f = nodal(
            m, [](Vec2 p) { return 2 * kPi * kPi * std::sin(kPi * p.x) * std::sin(kPi * p.y); });
        const ScalarField u = solve_poisson(m, f, [](Vec2) { return 0.0; });
        const ScalarField exact =
            nodal(m, [](Vec2 p) { return std::sin(kPi * p.x) * std::sin(kPi * p.y); });
        errors.push_back(l2_error(u, exact));
        hs.push_back(1.0 / (n - 1));
    }
    const double rate1 = std::log(errors[0] / errors[1]) / std::log(hs[0] / hs[1]);
    const double rate2 = std::log(errors[1] / errors[2]) / std::log(hs[1] / hs[2]);
    CHECK(rate1 > 1.9);
    CHECK(rate1 < 2.1);
    CHECK(rate2 > 1.9);
    CHECK(rate2 < 2.1);
}

TEST_CASE("stiffness matrix is symmetric before boundary elimination") {
    const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), 6);
    const auto K = assemble_p1_stiffness(m);
    const Eigen::SparseMatrix<double> D = Eigen::SparseMatrix<double>(K.transpose()) - K;
    double maxabs = 0.0;
    for (int k = 0; k < D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
            maxabs = std::max(maxabs, std::abs(it.value()));
    CHECK(maxabs < 1e-12);
}

TEST_CASE("poisson discrete maximum principle sanity") {
    const Mesh m = build_unit_square_mesh(11);
    const ScalarField f = nodal(m, [](Vec2 p) { return 1.0 + p.x; });
    const ScalarField u = solve_poisson(m, f, [](Vec2) { return 0.0; });
    double umin = 0.0;
    for (double v : u.values) umin = std::min(umin, v);
    CHECK(umin >= -1e-10);
}

TEST_CASE("poisson invariant under node renumbering") {
    const Mesh m = build_unit_square_mesh(6);
    auto f_fn = [](Vec2 p) { return std::exp(p.x) * p.y; };
    auto g_fn = [](Vec2 p) { return p.x * p.y; };
    const ScalarField u = solve_poisson(m, nodal(m, f_fn), g_fn);

    // Reversed numbering.
    const int n = m.node_count();
    std::vector<Vec2> nodes(n);
    std::vector<BoundaryTag> tags(n);
    for (int i = 0; i < n; ++i) {
        nodes[n - 1 - i] = m.node(i);
        tags[n - 1 - i] = m.tag(i);
    }
    std::vector<Triangle> tris;
    for (auto t : m.triangles()) tris.push_back({n - 1 - t[0], n - 1 - t[1], n - 1 - t[2]});
    const Mesh perm(m.domain(), nodes, tags, tris);
    const ScalarField up = solve_poisson(perm, nodal(perm, f_fn), g_fn);
    for (int i = 0; i < n; ++i)
        CHECK(up[n - 1 - i] == doctest::Approx(u[i]).epsilon(1e-8));
}

TEST_CASE("poisson rejects inverted meshes") {
    const Mesh m = build_unit_square_mesh(3);
    auto coords = m.nodes();
    for (int i = 0; i < m.node_count(); ++i)
        if (!m.tag(i).is_boundary()) coords[i] = {0.5, 1.5};
    const ScalarField f(m, 0.0);
    CHECK_THROWS_AS(solve_poisson(m, f, [](Vec2) { return 0.0; }, &coords), InvalidMesh);
}

TEST_CASE("burgers fixed points") {
    const Mesh m = build_unit_square_mesh(8);
    SUBCASE("zero field stays zero") {
        const auto traj = solve_burgers(m, VectorField(m, 0.0, 0.0), 0.05, 0.02, 4);
        REQUIRE(traj.size() == 5);
        for (const auto& u : traj)
            for (int i = 0; i < m.node_count(); ++i) {
                CHECK(u.ux[i] == 0.0);
                CHECK(u.uy[i] == 0.0);
            }
    }
    SUBCASE("constant field stays constant") {
        const auto traj = solve_burgers(m, VectorField(m, 0.7, -0.3), 0.05, 0.02, 3);
        for (const auto& u : traj)
            for (int i = 0; i < m.node_count(); ++i) {
                CHECK(u.ux[i] == doctest::Approx(0.7).epsilon(1e-9));
                CHECK(u.uy[i] == doctest::Approx(-0.3).epsilon(1e-9));
            }
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(solve_burgers(m, VectorField(m), -1.0, 0.02, 1), InvalidArgument);
        CHECK_THROWS_AS(solve_burgers(m, VectorField(m), 0.05, 0.0, 1), InvalidArgument);
    }
}

TEST_CASE("burgers converges toward a fine-mesh reference") {
    auto bump = [](Vec2 p) {
        const double r2 = (p.x - 0.4) * (p.x - 0.4) + (p.y - 0.5) * (p.y - 0.5);
        return 0.5 * std::exp(-r2 / 0.02);
    };
    const double nu = 0.05, dt = 0.02;
    const int steps = 4;
    const Mesh fine = build_unit_square_mesh(41);
    VectorField uf(fine);
    for (int i = 0; i < fine.node_count(); ++i) {
        uf.ux[i] = bump(fine.node(i));
        uf.uy[i] = 0.3 * bump(fine.node(i));
    }
    const auto ref = solve_burgers(fine, uf, nu, dt, steps);

    std::vector<double> errs;
    for (int n : {11, 15, 21}) {
        const Mesh m = build_unit_square_mesh(n);
        VectorField u0(m);
        for (int i = 0; i < m.node_count(); ++i) {
            u0.ux[i] = bump(m.node(i));
            u0.uy[i] = 0.3 * bump(m.node(i));
        }
        const auto traj = solve_burgers(m, u0, nu, dt, steps);
        // Reference solution interpolated onto the coarse nodes.
        VectorField rc(m);
        rc.ux = transfer_values(fine, ref.back().ux, m.nodes()).values;
        rc.uy = transfer_values(fine, ref.back().uy, m.nodes()).values;
        errs.push_back(l2_error(traj.back(), rc));
    }
    CHECK(errs[1] < errs[0]);
    CHECK(errs[2] < errs[1]);
}

TEST_CASE("hessian recovery") {
    SUBCASE("linear fields have zero hessian") {
        const Mesh m = build_unit_square_mesh(9);
        const ScalarField u = nodal(m, [](Vec2 p) { return 3.0 * p.x - 2.0 * p.y + 1.0; });
        const NodalHessian h = recover_hessian(u);
        for (size_t i = 0; i < h.size(); ++i) {
            CHECK(std::abs(h.hxx[i]) < 1e-10);
            CHECK(std::abs(h.hxy[i]) < 1e-10);
            CHECK(std::abs(h.hyy[i]) < 1e-10);
        }
    }
    SUBCASE("quadratic field on n=21") {
        const Mesh m = build_unit_square_mesh(21);
        const ScalarField u = nodal(m, [](Vec2 p) { return p.x * p.x + p.y * p.y; });
        const NodalHessian h = recover_hessian(u);
        for (int i = 0; i < m.node_count(); ++i) {
            const Vec2 p = m.node(i);
            // Interior nodes away from the boundary layer of the recovery.
            if (p.x < 0.15 || p.x > 0.85 || p.y < 0.15 || p.y > 0.85) continue;
            CHECK(h.hxx[i] > 1.8);
            CHECK(h.hxx[i] < 2.2);
            CHECK(h.hyy[i] > 1.8);
            CHECK(h.hyy[i] < 2.2);
            CHECK(std::abs(h.hxy[i]) < 0.2);
        }
    }
}

TEST_CASE("l2 error") {
    const Mesh m = build_unit_square_mesh(6);
    SUBCASE("identity") {
        const ScalarField u = nodal(m, [](Vec2 p) { return std::sin(p.x + p.y); });
        CHECK(l2_error(u, u) == 0.0);
    }
    SUBCASE("unit constant difference on unit area") {
        const ScalarField a(m, 1.0), b(m, 0.0);
        CHECK(l2_error(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches exact per-triangle quadrature of quadratics") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        ScalarField u(m), v(m);
        for (int i = 0; i < m.node_count(); ++i) {
            u[i] = uni(rng);
            v[i] = uni(rng);
        }
        // Oracle: the squared difference of P1 fields is quadratic per
        // triangle; the 3-edge-midpoint rule integrates quadratics exactly.
        double acc = 0.0;
        for (const auto& t : m.triangles()) {
            const Vec2 a = m.node(t[0]), b = m.node(t[1]), c = m.node(t[2]);
            const double A = signed_area(a, b, c);
            auto e_at = [&](double l0, double l1, double l2) {
                const double e = l0 * (u[t[0]] - v[t[0]]) + l1 * (u[t[1]] - v[t[1]]) +
                                 l2 * (u[t[2]] - v[t[2]]);
                return e * e;
            };
            acc += A / 3.0 * (e_at(0.5, 0.5, 0) + e_at(0, 0.5, 0.5) + e_at(0.5, 0, 0.5));
        }
        CHECK(l2_error(u, v) == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));
    }
    SUBCASE("triangle inequality on random fields") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> uni(-2.0, 2.0);
        for (int rep = 0; rep < 20; ++rep) {
            ScalarField a(m), b(m), c(m);
            for (int i = 0; i < m.node_count(); ++i) {
                a[i] = uni(rng);
                b[i] = uni(rng);
                c[i] = uni(rng);
            }
            CHECK(l2_error(a, c) <= l2_error(a, b) + l2_error(b, c) + 1e-12);
        }
    }
    SUBCASE("mesh mismatch rejected") {
        const Mesh other = build_unit_square_mesh(6);
        CHECK_THROWS_AS(l2_error(ScalarField(m), ScalarField(other)), InvalidArgument);
    }
}

TEST_CASE("field transfer between meshes") {
    const Mesh m = build_unit_square_mesh(9);
    SUBCASE("identity deformation") {
        std::vector<double> vals(m.node_count());
        for (int i = 0; i < m.node_count(); ++i) vals[i] = std::cos(3 * m.node(i).x);
        const auto r = transfer_values(m, vals, m.nodes());
        CHECK(r.clamped_points == 0);
        for (int i = 0; i < m.node_count(); ++i)
            CHECK(r.values[i] == doctest::Approx(vals[i]).epsilon(1e-12));
    }
    SUBCASE("linear fields interpolate exactly at deformed points") {
        std::vector<double> vals(m.node_count());
        for (int i = 0; i < m.node_count(); ++i) vals[i] = m.node(i).x;
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> uni(0.05, 0.95);
        std::vector<Vec2> pts;
        for (int k = 0; k < 50; ++k) pts.push_back({uni(rng), uni(rng)});
        const auto r = transfer_values(m, vals, pts);
        for (size_t k = 0; k < pts.size(); ++k)
            CHECK(r.values[k] == doctest::Approx(pts[k].x).epsilon(1e-10));
    }
    SUBCASE("gaussian field under small deformation stays near the analytic value") {
        auto gauss = [](Vec2 p) {
            return std::exp(-((p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5)) / 0.05);
        };
        std::vector<double> vals(m.node_count());
        for (int i = 0; i < m.node_count(); ++i) vals[i] = gauss(m.node(i));
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> jit(-0.02, 0.02);
        std::vector<Vec2> pts;
        for (int i = 0; i < m.node_count(); ++i) {
            Vec2 p = m.node(i);
            if (!m.tag(i).is_boundary()) p += Vec2{jit(rng), jit(rng)};
            pts.push_back(p);
        }
        const auto r = transfer_values(m, vals, pts);
        // Interpolation error of the P1 representation bounds the deviation:
        // measure it directly on a dense sample as the oracle.
        double interp_err = 0.0;
        TriangleLocator loc(m, m.nodes());
        for (int k = 0; k < 400; ++k) {
            const Vec2 p{(k % 20 + 0.5) / 20.0, (k / 20 + 0.5) / 20.0};
            interp_err = std::max(interp_err,
                                  std::abs(interpolate_at(m, vals, p, loc) - gauss(p)));
        }
        for (size_t k = 0; k < pts.size(); ++k)
            CHECK(std::abs(r.values[k] - gauss(pts[k])) <= interp_err + 1e-12);
    }
    SUBCASE("points outside the hull are clamped and flagged") {
        std::vector<double> vals(m.node_count(), 1.0);
        const auto r = transfer_values(m, vals, {{2.0, 0.5}});
        CHECK(r.clamped_points == 1);
        CHECK(r.values[0] == doctest::Approx(1.0));
    }
}
