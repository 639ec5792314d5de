#include "mm/fem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>

#include "mm/errors.hpp"

namespace mm {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

struct ElementGeometry {
    double area;
    Vec2 grad[3];  // gradients of the three P1 basis functions
};

ElementGeometry element_geometry(const Vec2& a, const Vec2& b, const Vec2& c) {
    ElementGeometry g;
    g.area = signed_area(a, b, c);
    const double inv2A = 1.0 / (2.0 * g.area);
    g.grad[0] = {(b.y - c.y) * inv2A, (c.x - b.x) * inv2A};
    g.grad[1] = {(c.y - a.y) * inv2A, (a.x - c.x) * inv2A};
    g.grad[2] = {(a.y - b.y) * inv2A, (b.x - a.x) * inv2A};
    return g;
}

const std::vector<Vec2>& coords_or_nodes(const Mesh& mesh, const std::vector<Vec2>* coords) {
    if (!coords) return mesh.nodes();
    if (coords->size() != mesh.nodes().size())
        throw InvalidArgument("coords length mismatch");
    return *coords;
}

void require_valid(const Mesh& mesh, const std::vector<Vec2>& xy, const char* who) {
    for (const auto& t : mesh.triangles())
        if (signed_area(xy[t[0]], xy[t[1]], xy[t[2]]) <= 0.0)
            throw InvalidMesh(std::string(who) + ": mesh has inverted elements");
}

SpMat assemble_stiffness(const Mesh& mesh, const std::vector<Vec2>& xy) {
    const int n = mesh.node_count();
    std::vector<Trip> trips;
    trips.reserve(mesh.triangle_count() * 9);
    for (const auto& t : mesh.triangles()) {
        const auto g = element_geometry(xy[t[0]], xy[t[1]], xy[t[2]]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(t[i], t[j], g.area * g.grad[i].dot(g.grad[j]));
    }
    SpMat K(n, n);
    K.setFromTriplets(trips.begin(), trips.end());
    return K;
}

SpMat assemble_mass(const Mesh& mesh, const std::vector<Vec2>& xy) {
    const int n = mesh.node_count();
    std::vector<Trip> trips;
    trips.reserve(mesh.triangle_count() * 9);
    for (const auto& t : mesh.triangles()) {
        const double A = signed_area(xy[t[0]], xy[t[1]], xy[t[2]]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(t[i], t[j], A / 12.0 * (i == j ? 2.0 : 1.0));
    }
    SpMat M(n, n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

// Advection matrix C_ij = integral (w . grad phi_j) phi_i with w taken
// element-wise constant (mean of nodal values).
SpMat assemble_advection(const Mesh& mesh, const std::vector<Vec2>& xy, const VectorField& w) {
    const int n = mesh.node_count();
    std::vector<Trip> trips;
    trips.reserve(mesh.triangle_count() * 9);
    for (const auto& t : mesh.triangles()) {
        const auto g = element_geometry(xy[t[0]], xy[t[1]], xy[t[2]]);
        const Vec2 wbar = (w.at(t[0]) + w.at(t[1]) + w.at(t[2])) * (1.0 / 3.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(t[i], t[j], g.area / 3.0 * wbar.dot(g.grad[j]));
    }
    SpMat C(n, n);
    C.setFromTriplets(trips.begin(), trips.end());
    return C;
}

// Strongly impose u = g on boundary nodes and solve K u = rhs on the interior.
ScalarField dirichlet_solve(const Mesh& mesh, const std::vector<Vec2>& xy, const SpMat& K,
                            const Eigen::VectorXd& rhs, const std::function<double(Vec2)>& g) {
    const int n = mesh.node_count();
    std::vector<int> reduced(n, -1);
    std::vector<int> interior;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (mesh.tag(i).is_boundary())
            u[i] = g(xy[i]);
        else {
            reduced[i] = static_cast<int>(interior.size());
            interior.push_back(i);
        }
    }
    const int ni = static_cast<int>(interior.size());
    if (ni > 0) {
        std::vector<Trip> trips;
        Eigen::VectorXd b(ni);
        for (int r = 0; r < ni; ++r) b[r] = rhs[interior[r]];
        for (int col = 0; col < K.outerSize(); ++col) {
            for (SpMat::InnerIterator it(K, col); it; ++it) {
                const int ri = reduced[it.row()];
                const int rj = reduced[it.col()];
                if (ri >= 0 && rj >= 0)
                    trips.emplace_back(ri, rj, it.value());
                else if (ri >= 0)
                    b[ri] -= it.value() * u[it.col()];
            }
        }
        SpMat A(ni, ni);
        A.setFromTriplets(trips.begin(), trips.end());
        Eigen::SimplicialLDLT<SpMat> solver(A);
        if (solver.info() != Eigen::Success)
            throw NumericFailure("solve_poisson: factorization failed");
        Eigen::VectorXd ui = solver.solve(b);
        const double res = (A * ui - b).norm() / std::max(b.norm(), 1e-300);
        if (res > 1e-10)
            throw NumericFailure("solve_poisson: relative residual " + std::to_string(res));
        for (int r = 0; r < ni; ++r) u[interior[r]] = ui[r];
    }
    ScalarField out(mesh);
    for (int i = 0; i < n; ++i) out[i] = u[i];
    return out;
}

}  // namespace

const double TriangleQuadrature::weight[6] = {0.223381589678011, 0.223381589678011,
                                              0.223381589678011, 0.109951743655322,
                                              0.109951743655322, 0.109951743655322};
const double TriangleQuadrature::bary[6][3] = {
    {0.108103018168070, 0.445948490915965, 0.445948490915965},
    {0.445948490915965, 0.108103018168070, 0.445948490915965},
    {0.445948490915965, 0.445948490915965, 0.108103018168070},
    {0.816847572980459, 0.091576213509771, 0.091576213509771},
    {0.091576213509771, 0.816847572980459, 0.091576213509771},
    {0.091576213509771, 0.091576213509771, 0.816847572980459}};

Eigen::SparseMatrix<double> assemble_p1_stiffness(const Mesh& mesh,
                                                  const std::vector<Vec2>* coords) {
    return assemble_stiffness(mesh, coords_or_nodes(mesh, coords));
}

Eigen::SparseMatrix<double> assemble_p1_mass(const Mesh& mesh, const std::vector<Vec2>* coords) {
    return assemble_mass(mesh, coords_or_nodes(mesh, coords));
}

ScalarField solve_poisson(const Mesh& mesh, const ScalarField& f,
                          const std::function<double(Vec2)>& g,
                          const std::vector<Vec2>* coords) {
    const auto& xy = coords_or_nodes(mesh, coords);
    require_valid(mesh, xy, "solve_poisson");
    if (f.mesh != &mesh) throw InvalidArgument("solve_poisson: f lives on a different mesh");
    const int n = mesh.node_count();

    const SpMat K = assemble_stiffness(mesh, xy);
    const SpMat M = assemble_mass(mesh, xy);
    Eigen::VectorXd fvec(n);
    for (int i = 0; i < n; ++i) fvec[i] = f[i];
    return dirichlet_solve(mesh, xy, K, M * fvec, g);
}

ScalarField solve_poisson(const Mesh& mesh, const std::function<double(Vec2)>& f,
                          const std::function<double(Vec2)>& g,
                          const std::vector<Vec2>* coords) {
    const auto& xy = coords_or_nodes(mesh, coords);
    require_valid(mesh, xy, "solve_poisson");
    if (!f) throw InvalidArgument("solve_poisson: missing source function");
    const int n = mesh.node_count();

    const SpMat K = assemble_stiffness(mesh, xy);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (const auto& t : mesh.triangles()) {
        const Vec2& a = xy[t[0]];
        const Vec2& b = xy[t[1]];
        const Vec2& c = xy[t[2]];
        const double area = signed_area(a, b, c);
        for (int q = 0; q < TriangleQuadrature::count; ++q) {
            const double* l = TriangleQuadrature::bary[q];
            const double fv = f(a * l[0] + b * l[1] + c * l[2]);
            const double s = TriangleQuadrature::weight[q] * area * fv;
            for (int i = 0; i < 3; ++i) rhs[t[i]] += s * l[i];
        }
    }
    return dirichlet_solve(mesh, xy, K, rhs, g);
}

std::vector<VectorField> solve_burgers(const Mesh& mesh, const VectorField& u0, double nu,
                                       double dt, int steps, BurgersOptions opts,
                                       const std::vector<Vec2>* coords) {
    if (nu <= 0.0) throw InvalidArgument("solve_burgers: nu must be positive");
    if (dt <= 0.0) throw InvalidArgument("solve_burgers: dt must be positive");
    const auto& xy = coords_or_nodes(mesh, coords);
    require_valid(mesh, xy, "solve_burgers");
    const int n = mesh.node_count();

    const SpMat K = assemble_stiffness(mesh, xy);
    const SpMat M = assemble_mass(mesh, xy);

    std::vector<VectorField> traj;
    traj.push_back(u0);
    Eigen::VectorXd ux(n), uy(n);
    for (int i = 0; i < n; ++i) {
        ux[i] = u0.ux[i];
        uy[i] = u0.uy[i];
    }
    for (int s = 0; s < steps; ++s) {
        const Eigen::VectorXd bx = M * ux / dt;
        const Eigen::VectorXd by = M * uy / dt;
        VectorField w = traj.back();
        Eigen::VectorXd nx = ux, ny = uy;
        double prev_update = std::numeric_limits<double>::infinity();
        int growth = 0;
        for (int p = 0; p < opts.max_picard; ++p) {
            const SpMat C = assemble_advection(mesh, xy, w);
            SpMat A = M / dt + C + nu * K;
            Eigen::SparseLU<SpMat> lu(A);
            if (lu.info() != Eigen::Success)
                throw NumericFailure("solve_burgers: LU factorization failed");
            const Eigen::VectorXd cand_x = lu.solve(bx);
            const Eigen::VectorXd cand_y = lu.solve(by);
            const double upd = std::max((cand_x - nx).lpNorm<Eigen::Infinity>(),
                                        (cand_y - ny).lpNorm<Eigen::Infinity>());
            const double scale = std::max({cand_x.lpNorm<Eigen::Infinity>(),
                                           cand_y.lpNorm<Eigen::Infinity>(), 1e-30});
            nx = cand_x;
            ny = cand_y;
            for (int i = 0; i < n; ++i) {
                w.ux[i] = nx[i];
                w.uy[i] = ny[i];
            }
            if (upd > prev_update) {
                if (++growth >= 3)
                    throw NumericFailure("solve_burgers: Picard iteration diverging");
            } else {
                growth = 0;
            }
            prev_update = upd;
            if (upd / scale < opts.picard_tol) break;
        }
        ux = nx;
        uy = ny;
        VectorField u(mesh);
        for (int i = 0; i < n; ++i) {
            u.ux[i] = ux[i];
            u.uy[i] = uy[i];
        }
        traj.push_back(std::move(u));
    }
    return traj;
}

std::pair<std::vector<double>, std::vector<double>> recover_gradient(
    const Mesh& mesh, const std::vector<double>& values, const std::vector<Vec2>* coords) {
    const auto& xy = coords_or_nodes(mesh, coords);
    const size_t n = static_cast<size_t>(mesh.node_count());
    if (values.size() != n) throw InvalidArgument("recover_gradient: values length mismatch");
    std::vector<double> gx(n, 0.0), gy(n, 0.0), wsum(n, 0.0);
    for (const auto& t : mesh.triangles()) {
        const auto g = element_geometry(xy[t[0]], xy[t[1]], xy[t[2]]);
        Vec2 grad{0, 0};
        for (int i = 0; i < 3; ++i) grad += values[static_cast<size_t>(t[i])] * g.grad[i];
        for (int i = 0; i < 3; ++i) {
            const auto idx = static_cast<size_t>(t[i]);
            gx[idx] += g.area * grad.x;
            gy[idx] += g.area * grad.y;
            wsum[idx] += g.area;
        }
    }
    for (size_t i = 0; i < n; ++i) {
        if (wsum[i] > 0.0) {
            gx[i] /= wsum[i];
            gy[i] /= wsum[i];
        }
    }
    return {std::move(gx), std::move(gy)};
}

NodalHessian recover_hessian_values(const Mesh& mesh, const std::vector<double>& values,
                                    const std::vector<Vec2>* coords) {
    auto [gx, gy] = recover_gradient(mesh, values, coords);
    auto [hxx, hxy_a] = recover_gradient(mesh, gx, coords);
    auto [hxy_b, hyy] = recover_gradient(mesh, gy, coords);
    NodalHessian h(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        h.hxx[i] = hxx[i];
        h.hyy[i] = hyy[i];
        h.hxy[i] = 0.5 * (hxy_a[i] + hxy_b[i]);
    }
    return h;
}

NodalHessian recover_hessian(const ScalarField& u, const std::vector<Vec2>* coords) {
    return recover_hessian_values(*u.mesh, u.values, coords);
}

namespace {

double l2_norm_squared(const Mesh& mesh, const std::vector<Vec2>& xy,
                       const std::vector<double>& e) {
    double s = 0.0;
    for (const auto& t : mesh.triangles()) {
        const double A = signed_area(xy[t[0]], xy[t[1]], xy[t[2]]);
        const double e0 = e[t[0]], e1 = e[t[1]], e2 = e[t[2]];
        s += A / 6.0 * (e0 * e0 + e1 * e1 + e2 * e2 + e0 * e1 + e0 * e2 + e1 * e2);
    }
    return s;
}

}  // namespace

double l2_error(const ScalarField& u, const ScalarField& u_ref, const std::vector<Vec2>* coords) {
    if (u.mesh != u_ref.mesh) throw InvalidArgument("l2_error: fields on different meshes");
    const auto& xy = coords_or_nodes(*u.mesh, coords);
    std::vector<double> e(u.values.size());
    for (size_t i = 0; i < e.size(); ++i) e[i] = u.values[i] - u_ref.values[i];
    return std::sqrt(std::max(0.0, l2_norm_squared(*u.mesh, xy, e)));
}

double l2_error(const VectorField& u, const VectorField& u_ref, const std::vector<Vec2>* coords) {
    if (u.mesh != u_ref.mesh) throw InvalidArgument("l2_error: fields on different meshes");
    const auto& xy = coords_or_nodes(*u.mesh, coords);
    std::vector<double> ex(u.ux.size()), ey(u.uy.size());
    for (size_t i = 0; i < ex.size(); ++i) {
        ex[i] = u.ux[i] - u_ref.ux[i];
        ey[i] = u.uy[i] - u_ref.uy[i];
    }
    return std::sqrt(std::max(
        0.0, l2_norm_squared(*u.mesh, xy, ex) + l2_norm_squared(*u.mesh, xy, ey)));
}

double interpolate_at(const Mesh& mesh, const std::vector<double>& values, const Vec2& p,
                      const TriangleLocator& loc) {
    Vec2 q = p;
    auto t = loc.locate(p);
    if (!t) {
        const int tn = loc.locate_nearest(p);
        const auto& tri = mesh.triangles()[tn];
        // Clamp to the nearest point of that triangle.
        double best = std::numeric_limits<double>::infinity();
        for (int e = 0; e < 3; ++e) {
            const Vec2 c = closest_point_on_segment(mesh.nodes()[tri[e]],
                                                    mesh.nodes()[tri[(e + 1) % 3]], p);
            if ((c - p).norm() < best) {
                best = (c - p).norm();
                q = c;
            }
        }
        t = tn;
    }
    const auto& tri = mesh.triangles()[*t];
    auto l = barycentric(mesh.nodes()[tri[0]], mesh.nodes()[tri[1]], mesh.nodes()[tri[2]], q);
    for (auto& li : l) li = std::clamp(li, 0.0, 1.0);
    const double lsum = l[0] + l[1] + l[2];
    return (l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]) / lsum;
}

TransferResult transfer_values(const Mesh& src_mesh, const std::vector<double>& values,
                               const std::vector<Vec2>& points,
                               const std::vector<Vec2>* src_coords) {
    const auto& xy = coords_or_nodes(src_mesh, src_coords);
    TriangleLocator loc(src_mesh, xy);
    TransferResult out;
    out.values.reserve(points.size());
    for (const auto& p : points) {
        Vec2 q = p;
        auto t = loc.locate(p);
        if (!t) {
            ++out.clamped_points;
            const int tn = loc.locate_nearest(p);
            const auto& tri = src_mesh.triangles()[tn];
            double best = std::numeric_limits<double>::infinity();
            for (int e = 0; e < 3; ++e) {
                const Vec2 c =
                    closest_point_on_segment(xy[tri[e]], xy[tri[(e + 1) % 3]], p);
                if ((c - p).norm() < best) {
                    best = (c - p).norm();
                    q = c;
                }
            }
            t = tn;
        }
        const auto& tri = src_mesh.triangles()[*t];
        auto l = barycentric(xy[tri[0]], xy[tri[1]], xy[tri[2]], q);
        for (auto& li : l) li = std::clamp(li, 0.0, 1.0);
        const double lsum = l[0] + l[1] + l[2];
        out.values.push_back(
            (l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]) / lsum);
    }
    return out;
}

}  // namespace mm
