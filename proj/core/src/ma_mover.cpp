#include "mm/ma_mover.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "mm/errors.hpp"
#include "mm/fem.hpp"

namespace mm {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

// Boundary nodes of one polygon segment, ordered from the start corner to the
// end corner. The sliding update equidistributes the monitor along each chain.
struct Chain {
    int segment = -1;
    Vec2 tangent;  // unit, start -> end
    Vec2 normal;   // unit, outward-ish (any fixed perpendicular)
    double offset = 0.0;  // normal . (any point on the segment)
    std::vector<int> nodes;  // corner, edge nodes ..., corner
};

std::vector<Chain> build_chains(const Mesh& mesh) {
    const auto& dom = mesh.domain();
    const int nseg = dom.segment_count();
    std::vector<int> corner_of_vertex(static_cast<size_t>(nseg), -1);
    for (int i = 0; i < mesh.node_count(); ++i)
        if (mesh.tag(i).kind == BoundaryTag::Corner)
            corner_of_vertex[static_cast<size_t>(mesh.tag(i).segment)] = i;
    std::vector<Chain> chains;
    for (int k = 0; k < nseg; ++k) {
        Chain c;
        c.segment = k;
        const Vec2 a = dom.segment_start(k), b = dom.segment_end(k);
        const Vec2 d = b - a;
        const double len = std::sqrt(d.dot(d));
        c.tangent = {d.x / len, d.y / len};
        c.normal = {c.tangent.y, -c.tangent.x};
        c.offset = c.normal.dot(a);
        std::vector<std::pair<double, int>> order;
        for (int i = 0; i < mesh.node_count(); ++i)
            if (mesh.tag(i).kind == BoundaryTag::Edge && mesh.tag(i).segment == k)
                order.emplace_back(c.tangent.dot(mesh.node(i) - a), i);
        std::sort(order.begin(), order.end());
        const int ca = corner_of_vertex[static_cast<size_t>(k)];
        const int cb = corner_of_vertex[static_cast<size_t>((k + 1) % nseg)];
        if (ca < 0 || cb < 0) throw InvalidMesh("ma_adapt: polygon corner node missing");
        c.nodes.push_back(ca);
        for (const auto& [s, i] : order) {
            (void)s;
            c.nodes.push_back(i);
        }
        c.nodes.push_back(cb);
        chains.push_back(std::move(c));
    }
    return chains;
}

}  // namespace

double equidistribution_coefficient(const Mesh& mesh, const std::vector<Vec2>& coords,
                                    const MonitorField& monitor) {
    TriangleLocator loc(mesh, mesh.nodes());
    std::vector<double> integrals;
    integrals.reserve(static_cast<size_t>(mesh.triangle_count()));
    for (const auto& t : mesh.triangles()) {
        const Vec2 a = coords[t[0]], b = coords[t[1]], c = coords[t[2]];
        const double A = std::abs(signed_area(a, b, c));
        // Edge-midpoint rule, exact for P1.
        const Vec2 mids[3] = {(a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5};
        double s = 0.0;
        for (const auto& p : mids) s += interpolate_at(mesh, monitor.m, p, loc);
        integrals.push_back(A * s / 3.0);
    }
    double mean = 0.0;
    for (double v : integrals) mean += v;
    mean /= integrals.size();
    if (std::abs(mean) < 1e-300) return 0.0;
    double var = 0.0;
    for (double v : integrals) var += (v - mean) * (v - mean);
    var /= integrals.size();
    return std::sqrt(var) / mean;
}

MAResult ma_adapt(const Mesh& mesh, const MonitorField& monitor, const MAOptions& opts) {
    if (monitor.mesh != &mesh) throw InvalidArgument("ma_adapt: monitor on a different mesh");
    for (double m : monitor.m)
        if (!(m >= 1.0 - 1e-12)) throw InvalidArgument("ma_adapt: monitor must be >= 1");
    const auto start = std::chrono::steady_clock::now();
    const int n = mesh.node_count();
    const auto& xi = mesh.nodes();
    TriangleLocator loc(mesh, xi);
    const std::vector<Chain> chains = build_chains(mesh);
    const Vec2 blo = mesh.domain().bbox_min(), bhi = mesh.domain().bbox_max();
    const double diag = std::sqrt((bhi - blo).dot(bhi - blo));

    MAResult res;
    res.equidistribution_before = equidistribution_coefficient(mesh, xi, monitor);

    std::vector<Vec2> x(xi);
    std::ostringstream log;

    // Unknowns z[2i] = x, z[2i+1] = y of node i. Each sweep solves the linear
    // equidistributing-diffusion problem
    //   div( m(x_old) grad x_new ) = 0   (componentwise, computational frame)
    // whose 1-D restriction m_left (x_i - x_{i-1}) = m_right (x_{i+1} - x_i)
    // is exactly the per-cell equidistribution the monitor asks for. Interior
    // rows are the P1 stiffness with element-mean monitor; sliding nodes keep
    // their normal coordinate fixed and equidistribute arc length along the
    // segment; corners are pinned.
    std::vector<double> m_node(static_cast<size_t>(n));
    const int N = 2 * n;
    for (int it = 0; it < opts.max_iters; ++it) {
        for (int i = 0; i < n; ++i)
            m_node[static_cast<size_t>(i)] =
                interpolate_at(mesh, monitor.m, x[static_cast<size_t>(i)], loc);

        std::vector<char> constrained(static_cast<size_t>(n), 0);
        for (int i = 0; i < n; ++i)
            if (mesh.tag(i).is_boundary()) constrained[static_cast<size_t>(i)] = 1;

        std::vector<Trip> trips;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
        for (const auto& t : mesh.triangles()) {
            const Vec2 a = xi[t[0]], b = xi[t[1]], c = xi[t[2]];
            const double A = signed_area(a, b, c);
            const double inv2A = 1.0 / (2.0 * A);
            const Vec2 g[3] = {{(b.y - c.y) * inv2A, (c.x - b.x) * inv2A},
                               {(c.y - a.y) * inv2A, (a.x - c.x) * inv2A},
                               {(a.y - b.y) * inv2A, (b.x - a.x) * inv2A}};
            const double me = (m_node[static_cast<size_t>(t[0])] +
                               m_node[static_cast<size_t>(t[1])] +
                               m_node[static_cast<size_t>(t[2])]) /
                              3.0;
            for (int i = 0; i < 3; ++i) {
                if (constrained[static_cast<size_t>(t[i])]) continue;
                for (int j = 0; j < 3; ++j) {
                    const double w = A * me * g[i].dot(g[j]);
                    trips.emplace_back(2 * t[i], 2 * t[j], w);
                    trips.emplace_back(2 * t[i] + 1, 2 * t[j] + 1, w);
                }
            }
        }
        for (const auto& ch : chains) {
            const int last = static_cast<int>(ch.nodes.size()) - 1;
            for (int p = 0; p <= last; ++p) {
                const int i = ch.nodes[static_cast<size_t>(p)];
                if (p == 0 || p == last) {
                    // corner rows (written once per corner; duplicates from the
                    // adjacent chain are summed, which keeps the pin exact)
                    trips.emplace_back(2 * i, 2 * i, 0.5);
                    trips.emplace_back(2 * i + 1, 2 * i + 1, 0.5);
                    rhs[2 * i] += 0.5 * xi[static_cast<size_t>(i)].x;
                    rhs[2 * i + 1] += 0.5 * xi[static_cast<size_t>(i)].y;
                    continue;
                }
                const int ip = ch.nodes[static_cast<size_t>(p - 1)];
                const int in = ch.nodes[static_cast<size_t>(p + 1)];
                // normal coordinate fixed: n . x_i = n . segment
                trips.emplace_back(2 * i, 2 * i, ch.normal.x);
                trips.emplace_back(2 * i, 2 * i + 1, ch.normal.y);
                rhs[2 * i] += ch.offset;
                // arc-length equidistribution with trapezoid monitor means:
                //   mL (s_i - s_prev) - mR (s_next - s_i) = 0, s = tangent . x
                const double mL = 0.5 * (m_node[static_cast<size_t>(ip)] +
                                         m_node[static_cast<size_t>(i)]);
                const double mR = 0.5 * (m_node[static_cast<size_t>(i)] +
                                         m_node[static_cast<size_t>(in)]);
                const auto add_tan = [&](int col, double w) {
                    trips.emplace_back(2 * i + 1, 2 * col, w * ch.tangent.x);
                    trips.emplace_back(2 * i + 1, 2 * col + 1, w * ch.tangent.y);
                };
                add_tan(i, mL + mR);
                add_tan(ip, -mL);
                add_tan(in, -mR);
            }
        }

        SpMat K(N, N);
        K.setFromTriplets(trips.begin(), trips.end());
        Eigen::SparseLU<SpMat> solver;
        solver.compute(K);
        if (solver.info() != Eigen::Success)
            throw NumericFailure("ma_adapt: sweep factorization failed");
        const Eigen::VectorXd z = solver.solve(rhs);

        double step = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vec2 d{z[2 * i] - x[static_cast<size_t>(i)].x,
                         z[2 * i + 1] - x[static_cast<size_t>(i)].y};
            step = std::max(step, std::sqrt(d.dot(d)));
        }
        const double residual = step / diag;
        res.residuals.push_back(residual);
        if (opts.record_log)
            log << it << " " << residual << " " << equidistribution_coefficient(mesh, x, monitor)
                << "\n";
        const double gamma = residual < opts.tol ? 1.0 : opts.relax;
        for (int i = 0; i < n; ++i) {
            x[static_cast<size_t>(i)].x += gamma * (z[2 * i] - x[static_cast<size_t>(i)].x);
            x[static_cast<size_t>(i)].y += gamma * (z[2 * i + 1] - x[static_cast<size_t>(i)].y);
        }
        // snap away the linear solver's last-bit drift off the boundary
        for (const auto& ch : chains) {
            const auto& dom = mesh.domain();
            const Vec2 a = dom.segment_start(ch.segment);
            const Vec2 b = dom.segment_end(ch.segment);
            for (size_t p = 0; p < ch.nodes.size(); ++p) {
                auto& xp = x[static_cast<size_t>(ch.nodes[p])];
                if (p == 0 || p + 1 == ch.nodes.size()) {
                    xp = xi[static_cast<size_t>(ch.nodes[p])];
                } else {
                    const Vec2 t = b - a;
                    double s = (xp - a).dot(t) / t.dot(t);
                    s = std::clamp(s, 0.0, 1.0);
                    xp = a + s * t;
                }
            }
        }
        if (residual < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.iterations = static_cast<int>(res.residuals.size());
    res.log = log.str();
    res.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (!res.converged) {
        if (opts.throw_on_failure)
            throw NumericFailure("ma_adapt: no convergence after " +
                                 std::to_string(res.iterations) + " iterations, residual " +
                                 std::to_string(res.residuals.back()));
        res.coords = std::move(x);
        return res;
    }
    if (inversion_fraction(mesh, x) > 0.0) {
        if (opts.throw_on_failure) throw InvalidMesh("ma_adapt: moved mesh has inverted elements");
        res.converged = false;
        res.coords = std::move(x);
        return res;
    }

    // Displacement potential: grad(phi) ~ x - xi via the homogeneous-Neumann
    // Poisson projection, with the Hessian recovered by the fem machinery and
    // theta the mean monitor density of the moved mesh.
    {
        SpMat K0 = assemble_p1_stiffness(mesh);
        std::vector<Trip> pin;
        pin.emplace_back(0, 0, 1.0);
        SpMat P(n, n);
        P.setFromTriplets(pin.begin(), pin.end());
        SpMat Kp = K0 + P;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        for (const auto& t : mesh.triangles()) {
            const Vec2 a = xi[t[0]], bb = xi[t[1]], c = xi[t[2]];
            const double A = signed_area(a, bb, c);
            const double inv2A = 1.0 / (2.0 * A);
            const Vec2 g[3] = {{(bb.y - c.y) * inv2A, (c.x - bb.x) * inv2A},
                               {(c.y - a.y) * inv2A, (a.x - c.x) * inv2A},
                               {(a.y - bb.y) * inv2A, (bb.x - a.x) * inv2A}};
            Vec2 dbar{0, 0};
            for (int v : t) dbar += (x[static_cast<size_t>(v)] - xi[static_cast<size_t>(v)]);
            dbar = dbar * (1.0 / 3.0);
            for (int i = 0; i < 3; ++i) b[t[i]] += A * g[i].dot(dbar);
        }
        b[0] = 0.0;
        Eigen::SimplicialLDLT<SpMat> ps(Kp);
        if (ps.info() != Eigen::Success)
            throw NumericFailure("ma_adapt: potential factorization failed");
        Eigen::VectorXd phi = ps.solve(b);
        phi.array() -= phi.mean();
        res.potential.mesh = &mesh;
        res.potential.phi.assign(phi.data(), phi.data() + n);
        res.potential.hessian = recover_hessian_values(mesh, res.potential.phi);
        double mass = 0.0, area = 0.0;
        for (const auto& t : mesh.triangles()) {
            area += signed_area(xi[t[0]], xi[t[1]], xi[t[2]]);
            const double Am = signed_area(x[t[0]], x[t[1]], x[t[2]]);
            double me = 0.0;
            for (int v : t) me += interpolate_at(mesh, monitor.m, x[static_cast<size_t>(v)], loc);
            mass += Am * me / 3.0;
        }
        res.potential.theta = mass / area;
        if (!(res.potential.theta > 0.0))
            throw NumericFailure("ma_adapt: non-positive theta");
    }

    res.equidistribution_after = equidistribution_coefficient(mesh, x, monitor);
    res.coords = std::move(x);
    return res;
}

}  // namespace mm
