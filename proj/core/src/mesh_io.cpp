#include "mm/mesh_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mm/errors.hpp"

namespace mm {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string tag_to_string(const BoundaryTag& t) {
    switch (t.kind) {
        case BoundaryTag::Interior: return "interior";
        case BoundaryTag::Edge: return "edge:" + std::to_string(t.segment);
        case BoundaryTag::Corner: return "corner:" + std::to_string(t.segment);
    }
    return "interior";
}

BoundaryTag tag_from_string(const std::string& s) {
    if (s == "interior") return {};
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw IoError("bad boundary tag: " + s);
    const int seg = std::stoi(s.substr(colon + 1));
    if (s.rfind("edge", 0) == 0) return {BoundaryTag::Edge, seg};
    if (s.rfind("corner", 0) == 0) return {BoundaryTag::Corner, seg};
    throw IoError("bad boundary tag: " + s);
}

}  // namespace

void write_mesh(std::ostream& os, const Mesh& mesh) {
    os << "meshfile v1\n";
    const auto& d = mesh.domain();
    os << "DOMAIN " << (d.kind == DomainSpec::Kind::UnitSquare ? "unit_square" : "polygon") << " "
       << d.vertices.size() << "\n";
    for (const auto& v : d.vertices) os << fmt_double(v.x) << " " << fmt_double(v.y) << "\n";
    os << "NODES " << mesh.node_count() << "\n";
    for (int i = 0; i < mesh.node_count(); ++i) {
        os << i << " " << fmt_double(mesh.node(i).x) << " " << fmt_double(mesh.node(i).y) << " "
           << tag_to_string(mesh.tag(i)) << "\n";
    }
    os << "ELEMENTS " << mesh.triangle_count() << "\n";
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[t];
        os << t << " " << tri[0] << " " << tri[1] << " " << tri[2] << "\n";
    }
}

void write_mesh_file(const std::string& path, const Mesh& mesh) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_mesh(os, mesh);
}

Mesh read_mesh(std::istream& is) {
    std::string header;
    std::getline(is, header);
    if (header != "meshfile v1") throw IoError("unrecognized mesh file header: " + header);
    std::string kw, kind;
    size_t nverts = 0;
    is >> kw >> kind >> nverts;
    if (kw != "DOMAIN") throw IoError("expected DOMAIN block");
    std::vector<Vec2> verts(nverts);
    for (auto& v : verts) is >> v.x >> v.y;
    DomainSpec domain = kind == "unit_square" ? DomainSpec::unit_square()
                                              : DomainSpec::polygon(std::move(verts));
    int nnodes = 0;
    is >> kw >> nnodes;
    if (kw != "NODES") throw IoError("expected NODES block");
    std::vector<Vec2> nodes(static_cast<size_t>(nnodes));
    std::vector<BoundaryTag> tags(static_cast<size_t>(nnodes));
    for (int i = 0; i < nnodes; ++i) {
        int id;
        std::string tag;
        is >> id >> nodes[id].x >> nodes[id].y >> tag;
        tags[id] = tag_from_string(tag);
    }
    int ntris = 0;
    is >> kw >> ntris;
    if (kw != "ELEMENTS") throw IoError("expected ELEMENTS block");
    std::vector<Triangle> tris(static_cast<size_t>(ntris));
    for (int t = 0; t < ntris; ++t) {
        int id;
        is >> id;
        is >> tris[id][0] >> tris[id][1] >> tris[id][2];
    }
    if (!is) throw IoError("truncated mesh file");
    return Mesh(std::move(domain), std::move(nodes), std::move(tags), std::move(tris));
}

Mesh read_mesh_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    return read_mesh(is);
}

void write_values_block(std::ostream& os, const std::string& name,
                        const std::vector<std::vector<double>>& columns) {
    if (columns.empty()) throw InvalidArgument("write_values_block: no columns");
    os << "VALUES " << name << " " << columns.size() << " " << columns[0].size() << "\n";
    for (size_t i = 0; i < columns[0].size(); ++i) {
        os << i;
        for (const auto& col : columns) os << " " << fmt_double(col[i]);
        os << "\n";
    }
}

std::vector<std::vector<double>> read_values_block(std::istream& is, const std::string& name) {
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string kw, blk;
        size_t ncomp = 0, count = 0;
        if (!(ls >> kw >> blk >> ncomp >> count)) continue;
        if (kw != "VALUES" || blk != name) continue;
        std::vector<std::vector<double>> cols(ncomp, std::vector<double>(count));
        for (size_t i = 0; i < count; ++i) {
            size_t id;
            is >> id;
            for (auto& col : cols) is >> col[id];
        }
        if (!is) throw IoError("truncated VALUES block: " + name);
        return cols;
    }
    throw IoError("VALUES block not found: " + name);
}

void write_scalar_field_file(const std::string& path, const ScalarField& f,
                             const std::string& name) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_mesh(os, *f.mesh);
    write_values_block(os, name, {f.values});
}

void write_vector_field_file(const std::string& path, const VectorField& f,
                             const std::string& name) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_mesh(os, *f.mesh);
    write_values_block(os, name, {f.ux, f.uy});
}

std::string mesh_to_svg(const Mesh& mesh, const std::vector<Vec2>& coords,
                        const std::vector<double>* field, SvgOptions opts) {
    Vec2 lo = coords[0], hi = coords[0];
    for (const auto& p : coords) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    const double span = std::max({hi.x - lo.x, hi.y - lo.y, 1e-12});
    const double scale = (opts.width - 20) / span;
    const int height = static_cast<int>((hi.y - lo.y) * scale) + 20;
    auto px = [&](const Vec2& p) {
        return Vec2{10 + (p.x - lo.x) * scale, height - 10 - (p.y - lo.y) * scale};
    };
    double fmin = 0, fmax = 1;
    if (field && !field->empty()) {
        fmin = *std::min_element(field->begin(), field->end());
        fmax = *std::max_element(field->begin(), field->end());
        if (fmax - fmin < 1e-300) fmax = fmin + 1;
    }
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
       << height << "\">\n";
    for (const auto& t : mesh.triangles()) {
        const Vec2 a = px(coords[t[0]]), b = px(coords[t[1]]), c = px(coords[t[2]]);
        std::string fill = "none";
        if (field && opts.fill_field) {
            const double v =
                ((*field)[t[0]] + (*field)[t[1]] + (*field)[t[2]]) / 3.0;
            const double s = (v - fmin) / (fmax - fmin);
            const int r = static_cast<int>(255 * s);
            const int bch = static_cast<int>(255 * (1 - s));
            fill = "rgb(" + std::to_string(r) + ",60," + std::to_string(bch) + ")";
        }
        os << "<polygon points=\"" << a.x << "," << a.y << " " << b.x << "," << b.y << " " << c.x
           << "," << c.y << "\" fill=\"" << fill << "\" stroke=\"black\" stroke-width=\""
           << opts.stroke << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace mm
