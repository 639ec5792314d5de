#pragma once

#include <vector>

#include "mm/errors.hpp"
#include "mm/mesh.hpp"

namespace mm {

/// P1 nodal scalar field over a mesh.
struct ScalarField {
    const Mesh* mesh = nullptr;
    std::vector<double> values;

    ScalarField() = default;
    ScalarField(const Mesh& m, double fill = 0.0)
        : mesh(&m), values(static_cast<size_t>(m.node_count()), fill) {}
    ScalarField(const Mesh& m, std::vector<double> v) : mesh(&m), values(std::move(v)) {
        if (static_cast<int>(values.size()) != m.node_count())
            throw InvalidArgument("ScalarField: values length mismatch");
    }
    double& operator[](int i) { return values[static_cast<size_t>(i)]; }
    double operator[](int i) const { return values[static_cast<size_t>(i)]; }
};

/// P1 nodal vector field (two components).
struct VectorField {
    const Mesh* mesh = nullptr;
    std::vector<double> ux, uy;

    VectorField() = default;
    VectorField(const Mesh& m, double fx = 0.0, double fy = 0.0)
        : mesh(&m),
          ux(static_cast<size_t>(m.node_count()), fx),
          uy(static_cast<size_t>(m.node_count()), fy) {}
    Vec2 at(int i) const { return {ux[static_cast<size_t>(i)], uy[static_cast<size_t>(i)]}; }
};

/// Per-node symmetric 2x2 matrices (H_xy stored once).
struct NodalHessian {
    std::vector<double> hxx, hxy, hyy;

    explicit NodalHessian(size_t n = 0) : hxx(n), hxy(n), hyy(n) {}
    size_t size() const { return hxx.size(); }
    double frobenius(size_t i) const {
        return std::sqrt(hxx[i] * hxx[i] + 2.0 * hxy[i] * hxy[i] + hyy[i] * hyy[i]);
    }
};

}  // namespace mm
