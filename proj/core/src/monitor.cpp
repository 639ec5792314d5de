#include "mm/monitor.hpp"

#include <algorithm>
#include <cmath>

#include "mm/errors.hpp"

namespace mm {

namespace {

constexpr double kGuard = 1e-14;

std::vector<double> monitor_values(const std::vector<double>& u, const std::vector<double>& u_exact,
                                   const NodalHessian& hess, double alpha, double beta) {
    const size_t n = u.size();
    std::vector<double> err2(n), hf(n);
    double max_err2 = 0.0, max_hf = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = u[i] - u_exact[i];
        err2[i] = e * e;
        hf[i] = hess.frobenius(i);
        max_err2 = std::max(max_err2, err2[i]);
        max_hf = std::max(max_hf, hf[i]);
    }
    std::vector<double> m(n, 1.0);
    for (size_t i = 0; i < n; ++i) {
        if (max_err2 >= kGuard) m[i] += alpha * err2[i] / max_err2;
        if (max_hf >= kGuard) m[i] += beta * hf[i] / max_hf;
    }
    return m;
}

}  // namespace

MonitorField evaluate_monitor(const ScalarField& u, const ScalarField& u_exact,
                              const NodalHessian& hess, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw InvalidArgument("evaluate_monitor: negative weight");
    if (u.mesh != u_exact.mesh) throw InvalidArgument("evaluate_monitor: mesh mismatch");
    if (hess.size() != u.values.size())
        throw InvalidArgument("evaluate_monitor: hessian size mismatch");
    MonitorField out;
    out.mesh = u.mesh;
    out.alpha = alpha;
    out.beta = beta;
    out.m = monitor_values(u.values, u_exact.values, hess, alpha, beta);
    return out;
}

MonitorField evaluate_monitor(const VectorField& u, const VectorField& u_exact,
                              const NodalHessian& hess_x, const NodalHessian& hess_y,
                              double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw InvalidArgument("evaluate_monitor: negative weight");
    if (u.mesh != u_exact.mesh) throw InvalidArgument("evaluate_monitor: mesh mismatch");
    const auto mx = monitor_values(u.ux, u_exact.ux, hess_x, alpha, beta);
    const auto my = monitor_values(u.uy, u_exact.uy, hess_y, alpha, beta);
    MonitorField out;
    out.mesh = u.mesh;
    out.alpha = alpha;
    out.beta = beta;
    out.m.resize(mx.size());
    for (size_t i = 0; i < mx.size(); ++i) out.m[i] = std::max(mx[i], my[i]);
    return out;
}

}  // namespace mm
