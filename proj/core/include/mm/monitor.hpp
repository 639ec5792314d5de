#pragma once

#include "mm/fem.hpp"
#include "mm/fields.hpp"

namespace mm {

/// Positive nodal density driving the mesh mover:
///   m = 1 + alpha * (u - u_exact)^2 / max(u - u_exact)^2
///         + beta * |H(u)|_F / max |H(u)|_F
/// Each normalized term is 0 when its maximum is below 1e-14.
struct MonitorField {
    const Mesh* mesh = nullptr;
    std::vector<double> m;
    double alpha = 0.0;
    double beta = 0.0;
};

MonitorField evaluate_monitor(const ScalarField& u, const ScalarField& u_exact,
                              const NodalHessian& hess, double alpha, double beta);

/// Vector-field variant: node-wise maximum of the per-component monitors.
MonitorField evaluate_monitor(const VectorField& u, const VectorField& u_exact,
                              const NodalHessian& hess_x, const NodalHessian& hess_y,
                              double alpha, double beta);

}  // namespace mm
