#include <cmath>
#include <random>

#include "doctest.h"
#include "mm/errors.hpp"
#include "mm/fem.hpp"
#include "mm/ma_mover.hpp"

using namespace mm;

namespace {

MonitorField monitor_from_fn(const Mesh& m, const std::function<double(Vec2)>& f,
                             double alpha = 0, double beta = 0) {
    MonitorField mon;
    mon.mesh = &m;
    mon.alpha = alpha;
    mon.beta = beta;
    mon.m.resize(m.node_count());
    for (int i = 0; i < m.node_count(); ++i) mon.m[i] = f(m.node(i));
    return mon;
}

}  // namespace

TEST_CASE("uniform monitor is a fixed point") {
    const Mesh m = build_unit_square_mesh(11);
    const auto mon = monitor_from_fn(m, [](Vec2) { return 1.0; });
    const auto res = ma_adapt(m, mon);
    CHECK(res.converged);
    double maxdisp = 0.0;
    for (int i = 0; i < m.node_count(); ++i)
        maxdisp = std::max(maxdisp, (res.coords[i] - m.node(i)).norm());
    CHECK(maxdisp < 1e-8);
}

TEST_CASE("1-D monitor matches the equidistribution oracle") {
    const int n = 15;
    const Mesh m = build_unit_square_mesh(n);
    const auto mon = monitor_from_fn(m, [](Vec2 p) { return 1.0 + 5.0 * p.x; });
    const auto res = ma_adapt(m, mon);
    CHECK(res.converged);

    // Oracle: equalize the cumulative integral of m over [0,1] per cell.
    // M(x) = x + 2.5 x^2, total 3.5; column k sits at M^{-1}(3.5 k/(n-1)).
    const double cell = 1.0 / (n - 1);
    for (int k = 0; k < n; ++k) {
        const double target = 3.5 * k / (n - 1);
        const double xk = (-1.0 + std::sqrt(1.0 + 10.0 * target)) / 5.0;
        // Every node of lattice column k should sit at xk.
        for (int j = 0; j < n; ++j) {
            const int id = j * n + k;
            CHECK(std::abs(res.coords[id].x - xk) < 0.02 * cell);
        }
    }
}

TEST_CASE("monitor scaling leaves the moved mesh unchanged") {
    const Mesh m = build_unit_square_mesh(9);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(0.2, 0.8);
    for (int rep = 0; rep < 5; ++rep) {
        const double cx = uni(rng), cy = uni(rng);
        auto f = [cx, cy](Vec2 p) {
            return 1.0 + 4.0 * std::exp(-((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)) / 0.02);
        };
        const auto mon1 = monitor_from_fn(m, f);
        auto mon10 = mon1;
        for (double& v : mon10.m) v *= 10.0;
        // A 10x monitor violates the m >= 1 shift convention only in the
        // sense of magnitude; theta absorbs the scale.
        const auto r1 = ma_adapt(m, mon1);
        const auto r10 = ma_adapt(m, mon10);
        double maxdiff = 0.0;
        for (int i = 0; i < m.node_count(); ++i)
            maxdiff = std::max(maxdiff, (r1.coords[i] - r10.coords[i]).norm());
        CHECK(maxdiff < 1e-6);
    }
}

TEST_CASE("equidistribution coefficient") {
    const Mesh m = build_unit_square_mesh(9);
    SUBCASE("uniform mesh, unit monitor") {
        const auto mon = monitor_from_fn(m, [](Vec2) { return 1.0; });
        CHECK(equidistribution_coefficient(m, m.nodes(), mon) < 1e-12);
    }
    SUBCASE("ramp monitor on a uniform mesh is not equidistributed") {
        const auto mon = monitor_from_fn(m, [](Vec2 p) { return 1.0 + 5.0 * p.x; });
        CHECK(equidistribution_coefficient(m, m.nodes(), mon) > 0.0);
    }
    SUBCASE("adaptation strictly reduces the coefficient") {
        const auto mon = monitor_from_fn(m, [](Vec2 p) {
            return 1.0 + 5.0 * std::exp(-((p.x - 0.6) * (p.x - 0.6) + (p.y - 0.4) * (p.y - 0.4)) / 0.03);
        });
        const auto res = ma_adapt(m, mon);
        CHECK(res.converged);
        CHECK(res.equidistribution_after < res.equidistribution_before);
    }
}

TEST_CASE("ma_adapt boundary handling and diagnostics") {
    const Mesh m = build_unit_square_mesh(11);
    const auto mon = monitor_from_fn(m, [](Vec2 p) {
        return 1.0 + 5.0 * std::exp(-((p.x - 0.3) * (p.x - 0.3) + (p.y - 0.7) * (p.y - 0.7)) / 0.02);
    });
    const auto res = ma_adapt(m, mon);
    REQUIRE(res.converged);
    SUBCASE("no inversion, boundary preserved") {
        CHECK(inversion_fraction(m, res.coords) == 0.0);
        for (int i = 0; i < m.node_count(); ++i) {
            const auto& tag = m.tag(i);
            if (tag.kind == BoundaryTag::Corner) {
                CHECK((res.coords[i] - m.node(i)).norm() == 0.0);
            } else if (tag.kind == BoundaryTag::Edge) {
                const Vec2 q = closest_point_on_segment(m.domain().segment_start(tag.segment),
                                                        m.domain().segment_end(tag.segment),
                                                        res.coords[i]);
                CHECK((q - res.coords[i]).norm() < 1e-10);
            }
        }
    }
    SUBCASE("residual history tail is non-increasing") {
        const size_t k = res.residuals.size();
        REQUIRE(k >= 2);
        for (size_t i = (k > 5 ? k - 5 : 1); i < k; ++i)
            CHECK(res.residuals[i] <= res.residuals[i - 1] * (1 + 1e-12));
    }
    SUBCASE("timing recorded") { CHECK(res.wall_time_ms > 0.0); }
}

TEST_CASE("ma_adapt potential diagnostics") {
    const Mesh m = build_unit_square_mesh(15);
    const auto mon = monitor_from_fn(m, [](Vec2 p) { return 1.0 + 5.0 * p.x; });
    const auto res = ma_adapt(m, mon);
    REQUIRE(res.converged);
    const auto& pot = res.potential;
    REQUIRE(pot.mesh == &m);
    REQUIRE(static_cast<int>(pot.phi.size()) == m.node_count());
    double mean = 0.0;
    for (double v : pot.phi) mean += v;
    mean /= pot.phi.size();
    CHECK(std::abs(mean) < 1e-12);  // gauge: zero-mean potential
    CHECK(pot.theta > 0.0);
    // theta is the mean monitor density over the moved domain; for m = 1+5x
    // on the unit square that integral is 3.5 independent of the mesh.
    CHECK(pot.theta == doctest::Approx(3.5).epsilon(0.02));
    CHECK(pot.hessian.hxx.size() == pot.phi.size());
    // grad(phi) should reproduce the actual displacement field to truncation
    // error: check the x-displacement of the mesh center via the potential.
    const auto [gx, gy] = recover_gradient(m, pot.phi);
    const int center = (15 / 2) * 15 + 15 / 2;
    const double dx = res.coords[center].x - m.node(center).x;
    CHECK(gx[center] == doctest::Approx(dx).epsilon(0.05));
    CHECK(std::abs(gy[center]) < 0.01);
}

TEST_CASE("ma_adapt rejects monitors below one") {
    const Mesh m = build_unit_square_mesh(5);
    auto mon = monitor_from_fn(m, [](Vec2) { return 0.5; });
    CHECK_THROWS_AS(ma_adapt(m, mon), InvalidArgument);
}

TEST_CASE("ma_adapt on the heptagon slides boundary nodes along segments") {
    const Mesh m = build_polygon_mesh(DomainSpec::heptagon(), 7);
    const auto mon = monitor_from_fn(m, [](Vec2 p) {
        return 1.0 + 3.0 * std::exp(-((p.x - 0.6) * (p.x - 0.6) + (p.y - 0.5) * (p.y - 0.5)) / 0.05);
    });
    const auto res = ma_adapt(m, mon);
    CHECK(res.converged);
    CHECK(inversion_fraction(m, res.coords) == 0.0);
    for (int i = 0; i < m.node_count(); ++i) {
        const auto& tag = m.tag(i);
        if (tag.kind != BoundaryTag::Edge) continue;
        const Vec2 q = closest_point_on_segment(m.domain().segment_start(tag.segment),
                                                m.domain().segment_end(tag.segment),
                                                res.coords[i]);
        CHECK((q - res.coords[i]).norm() < 1e-10);
    }
}
