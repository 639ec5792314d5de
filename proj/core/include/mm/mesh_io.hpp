#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mm/fields.hpp"
#include "mm/mesh.hpp"

namespace mm {

/// Mesh text format:
///   meshfile v1
///   DOMAIN <unit_square|polygon> <vertex count>
///   <vx> <vy>            (one line per polygon vertex)
///   NODES <count>
///   <id> <x> <y> <tag>   tag = interior | edge:<k> | corner:<k>
///   ELEMENTS <count>
///   <id> <n0> <n1> <n2>
/// Optional trailing blocks:
///   VALUES <name> <components> <count>
///   <id> <v0> [<v1>]
void write_mesh(std::ostream& os, const Mesh& mesh);
void write_mesh_file(const std::string& path, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
Mesh read_mesh_file(const std::string& path);

void write_values_block(std::ostream& os, const std::string& name,
                        const std::vector<std::vector<double>>& columns);
/// Reads the named VALUES block from a mesh file stream positioned anywhere
/// before it. Returns one vector per component.
std::vector<std::vector<double>> read_values_block(std::istream& is, const std::string& name);

/// Field file helpers (mesh + a single VALUES block).
void write_scalar_field_file(const std::string& path, const ScalarField& f,
                             const std::string& name = "u");
void write_vector_field_file(const std::string& path, const VectorField& f,
                             const std::string& name = "u");

struct SvgOptions {
    int width = 640;
    double stroke = 0.5;
    bool fill_field = false;  // color triangles by mean nodal value
};

/// Wireframe SVG of the mesh under `coords`; optional scalar coloring.
std::string mesh_to_svg(const Mesh& mesh, const std::vector<Vec2>& coords,
                        const std::vector<double>* field = nullptr, SvgOptions opts = {});

}  // namespace mm
