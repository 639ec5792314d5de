#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <vector>

#include "mm/fields.hpp"
#include "mm/mesh.hpp"

namespace mm {

/// P1 stiffness matrix (no boundary conditions applied).
Eigen::SparseMatrix<double> assemble_p1_stiffness(const Mesh& mesh,
                                                  const std::vector<Vec2>* coords = nullptr);

/// Consistent P1 mass matrix.
Eigen::SparseMatrix<double> assemble_p1_mass(const Mesh& mesh,
                                             const std::vector<Vec2>* coords = nullptr);

/// P1 Galerkin solve of -div(grad u) = f with Dirichlet data g imposed
/// strongly on boundary nodes. `coords` defaults to the mesh's reference
/// coordinates; pass deformed coordinates to solve on a moved mesh.
ScalarField solve_poisson(const Mesh& mesh, const ScalarField& f,
                          const std::function<double(Vec2)>& g,
                          const std::vector<Vec2>* coords = nullptr);

/// Same solve with a closed-form source: the load vector integrates f by
/// degree-4 element quadrature instead of interpolating it at the nodes.
/// Near-singular sources (sharp Gaussians) lose substantial accuracy through
/// nodal interpolation; prefer this overload whenever f is known analytically.
ScalarField solve_poisson(const Mesh& mesh, const std::function<double(Vec2)>& f,
                          const std::function<double(Vec2)>& g,
                          const std::vector<Vec2>* coords = nullptr);

/// Degree-4 symmetric triangle quadrature: 6 (weight, barycentric) pairs
/// summing to 1; multiply by the element area when integrating.
struct TriangleQuadrature {
    static constexpr int count = 6;
    static const double weight[6];
    static const double bary[6][3];
};

struct BurgersOptions {
    int max_picard = 5;
    double picard_tol = 1e-8;
};

/// Semi-implicit viscous Burgers: backward Euler diffusion, advection
/// linearized about the previous Picard iterate, natural homogeneous Neumann
/// boundary. Returns the trajectory including the initial field.
std::vector<VectorField> solve_burgers(const Mesh& mesh, const VectorField& u0, double nu,
                                       double dt, int steps, BurgersOptions opts = {},
                                       const std::vector<Vec2>* coords = nullptr);

/// Lumped-mass L2 projection of the piecewise-constant P1 gradient to nodes.
std::pair<std::vector<double>, std::vector<double>> recover_gradient(
    const Mesh& mesh, const std::vector<double>& values,
    const std::vector<Vec2>* coords = nullptr);

/// Double L2 projection Hessian recovery, symmetrized.
NodalHessian recover_hessian(const ScalarField& u, const std::vector<Vec2>* coords = nullptr);
NodalHessian recover_hessian_values(const Mesh& mesh, const std::vector<double>& values,
                                    const std::vector<Vec2>* coords = nullptr);

/// L2 norm of (u - u_ref) via exact P1 mass-matrix quadrature.
double l2_error(const ScalarField& u, const ScalarField& u_ref,
                const std::vector<Vec2>* coords = nullptr);
double l2_error(const VectorField& u, const VectorField& u_ref,
                const std::vector<Vec2>* coords = nullptr);

struct TransferResult {
    std::vector<double> values;
    int clamped_points = 0;  // points outside the source hull, clamped to it
};

/// P1 interpolation of a discrete field at arbitrary points; points outside
/// the source mesh are clamped to the nearest boundary point and flagged.
TransferResult transfer_values(const Mesh& src_mesh, const std::vector<double>& values,
                               const std::vector<Vec2>& points,
                               const std::vector<Vec2>* src_coords = nullptr);

/// Interpolate a scalar field at a single point (clamping outside the hull).
double interpolate_at(const Mesh& mesh, const std::vector<double>& values, const Vec2& p,
                      const TriangleLocator& loc);

}  // namespace mm
