#pragma once

#include <string>
#include <vector>

#include "mm/fem.hpp"
#include "mm/monitor.hpp"

namespace mm {

struct MAOptions {
    double tol = 1e-6;         // relative node movement per sweep, vs bbox diagonal
    int max_iters = 500;
    double relax = 0.2;        // under-relaxation factor for the position update
    bool record_log = false;   // keep the per-iteration text log
    bool throw_on_failure = true;  // false: return with converged=false instead
};

/// Scalar potential of the converged movement: x ~ xi + grad(phi), with the
/// Hessian recovered on the computational mesh and the Monge-Ampere
/// normalization theta = (integral of m over the moved domain) / |domain|.
struct MAPotential {
    const Mesh* mesh = nullptr;
    std::vector<double> phi;   // per node, zero mean (gauge)
    NodalHessian hessian;      // recovered Hessian of phi
    double theta = 0.0;        // > 0
};

struct MAResult {
    std::vector<Vec2> coords;          // moved node positions
    std::vector<double> residuals;     // one entry per iteration
    int iterations = 0;
    bool converged = false;
    double equidistribution_before = 0.0;
    double equidistribution_after = 0.0;
    double wall_time_ms = 0.0;
    MAPotential potential;             // filled on success
    std::string log;                   // "iter residual equidistribution" lines
};

/// Monge-Ampere style mesh movement, m(x) * det(I + H(phi)) = theta: fixed
/// point of the equidistributing diffusion solve div(m(x) grad x) = 0 in the
/// computational frame, under-relaxed until the sweep-to-sweep movement drops
/// below opts.tol. Boundary nodes slide along their tagged segment (arc-length
/// equidistribution of m restricted to the segment); corners are pinned.
/// Throws NumericFailure on non-convergence, InvalidMesh on inverted output.
MAResult ma_adapt(const Mesh& mesh, const MonitorField& monitor, const MAOptions& opts = {});

/// Coefficient of variation (std/mean) of per-element monitor integrals under
/// the given coordinates. 0 means perfectly equidistributed.
double equidistribution_coefficient(const Mesh& mesh, const std::vector<Vec2>& coords,
                                    const MonitorField& monitor);

}  // namespace mm
