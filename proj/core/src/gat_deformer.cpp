#include <cmath>

#include "deformer_detail.hpp"
#include "mm/errors.hpp"

namespace mm {

std::vector<std::vector<double>> initial_edge_features(const MeshGraph& graph,
                                                       const std::vector<Vec2>& positions,
                                                       const std::vector<double>& node_state) {
    if (positions.size() != static_cast<size_t>(graph.node_count) ||
        node_state.size() != positions.size())
        throw InvalidArgument("initial_edge_features: positions/state size mismatch");
    std::vector<std::vector<double>> out;
    out.reserve(graph.edges.size());
    for (const auto& [i, j] : graph.edges) {
        const Vec2 d = positions[static_cast<size_t>(i)] - positions[static_cast<size_t>(j)];
        out.push_back({d.x, d.y, d.norm(), node_state[static_cast<size_t>(i)],
                       node_state[static_cast<size_t>(j)]});
    }
    return out;
}

Tensor gnn_block(const MeshGraph& graph, const Tensor& node_feats, const Tensor& edge_feats,
                 const std::function<Tensor(const Tensor&)>& f) {
    const int n = graph.node_count;
    const int ne = static_cast<int>(graph.edges.size());
    if (edge_feats.rank() != 2 || edge_feats.dim(0) != ne)
        throw ShapeError("gnn_block: edge features must have one row per edge");
    std::vector<int> tgt(static_cast<size_t>(ne)), src(static_cast<size_t>(ne));
    for (int e = 0; e < ne; ++e) {
        tgt[static_cast<size_t>(e)] = graph.edges[static_cast<size_t>(e)].first;
        src[static_cast<size_t>(e)] = graph.edges[static_cast<size_t>(e)].second;
    }
    Tensor in = edge_feats;
    if (node_feats.defined() && node_feats.numel() > 0) {
        if (node_feats.rank() != 2 || node_feats.dim(0) != n)
            throw ShapeError("gnn_block: node features must have one row per node");
        in = concat({edge_feats, gather_rows(node_feats, tgt), gather_rows(node_feats, src)}, 1);
    }
    return segment_sum(f(in), tgt, n);
}

namespace detail {

namespace {

struct GatGraph {
    std::vector<int> tgt, src;  // directed edges, self-loop first per node
};

GatGraph closed_ring(const Mesh& mesh) {
    GatGraph g;
    const auto& adj = mesh.adjacency();
    for (int i = 0; i < mesh.node_count(); ++i) {
        g.tgt.push_back(i);
        g.src.push_back(i);
        for (int j : adj[static_cast<size_t>(i)]) {
            g.tgt.push_back(i);
            g.src.push_back(j);
        }
    }
    return g;
}

// Per-node boundary constraint x' = A x + c: identity inside, projection onto
// the segment line for edge nodes, the fixed corner for corners.
struct NodeAffine {
    Tensor axx, axy, ayx, ayy, cx, cy;
};

NodeAffine boundary_affine(const Mesh& mesh) {
    const int n = mesh.node_count();
    std::vector<double> axx(static_cast<size_t>(n), 1.0), axy(static_cast<size_t>(n), 0.0);
    std::vector<double> ayx(static_cast<size_t>(n), 0.0), ayy(static_cast<size_t>(n), 1.0);
    std::vector<double> cx(static_cast<size_t>(n), 0.0), cy(static_cast<size_t>(n), 0.0);
    const DomainSpec& dom = mesh.domain();
    for (int i = 0; i < n; ++i) {
        const BoundaryTag& t = mesh.tag(i);
        const size_t k = static_cast<size_t>(i);
        if (t.kind == BoundaryTag::Corner) {
            const Vec2 v = dom.vertices[static_cast<size_t>(t.segment)];
            axx[k] = axy[k] = ayx[k] = ayy[k] = 0.0;
            cx[k] = v.x;
            cy[k] = v.y;
        } else if (t.kind == BoundaryTag::Edge) {
            const Vec2 a = dom.segment_start(t.segment);
            Vec2 th = dom.segment_end(t.segment) - a;
            th = th * (1.0 / th.norm());
            axx[k] = th.x * th.x;
            axy[k] = th.x * th.y;
            ayx[k] = th.y * th.x;
            ayy[k] = th.y * th.y;
            cx[k] = a.x - (axx[k] * a.x + axy[k] * a.y);
            cy[k] = a.y - (ayx[k] * a.x + ayy[k] * a.y);
        }
    }
    return {Tensor::from({n}, std::move(axx)), Tensor::from({n}, std::move(axy)),
            Tensor::from({n}, std::move(ayx)), Tensor::from({n}, std::move(ayy)),
            Tensor::from({n}, std::move(cx)),  Tensor::from({n}, std::move(cy))};
}

Tensor apply_affine(const NodeAffine& A, const Tensor& pos) {
    const int n = pos.dim(0);
    Tensor px = reshape(slice_cols(pos, 0, 1), {n});
    Tensor py = reshape(slice_cols(pos, 1, 2), {n});
    Tensor ox = add(add(mul(A.axx, px), mul(A.axy, py)), A.cx);
    Tensor oy = add(add(mul(A.ayx, px), mul(A.ayy, py)), A.cy);
    return concat({reshape(ox, {n, 1}), reshape(oy, {n, 1})}, 1);
}

std::vector<Vec2> to_vecs(const Tensor& pos) {
    std::vector<Vec2> out(static_cast<size_t>(pos.dim(0)));
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = {pos.data()[2 * i], pos.data()[2 * i + 1]};
    return out;
}

// Shared encoder + attention blocks. When `move_positions` is set the per-block
// attention weights also produce the convex position update (with boundary
// projection); otherwise positions stay fixed and only features evolve.
Tensor gat_backbone(const DeformerModel& model, const Mesh& mesh, const InputState& state,
                    bool move_positions, std::vector<std::vector<Vec2>>* block_positions,
                    Tensor* final_features) {
    const DeformerConfig& cfg = model.config;
    const ParameterStore& ps = model.params;
    const int n = mesh.node_count();
    const GatGraph g = closed_ring(mesh);
    const int ne = static_cast<int>(g.tgt.size());

    std::vector<double> ef0(static_cast<size_t>(ne) * 5);
    for (int e = 0; e < ne; ++e) {
        const Vec2& ui = mesh.node(g.tgt[static_cast<size_t>(e)]);
        const Vec2& uj = mesh.node(g.src[static_cast<size_t>(e)]);
        const Vec2 d = ui - uj;
        double* row = ef0.data() + static_cast<size_t>(e) * 5;
        row[0] = d.x;
        row[1] = d.y;
        row[2] = d.norm();
        row[3] = state.sampler(ui);
        row[4] = state.sampler(uj);
    }
    Tensor v = segment_sum(mlp_forward(ps, "enc", Tensor::from({ne, 5}, std::move(ef0))), g.tgt, n);

    Tensor I_rep = tile_rows(embed_tensor(model, state, mesh.domain()), n);
    std::vector<double> p0(static_cast<size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        p0[static_cast<size_t>(i) * 2] = mesh.node(i).x;
        p0[static_cast<size_t>(i) * 2 + 1] = mesh.node(i).y;
    }
    Tensor pos = Tensor::from({n, 2}, std::move(p0));
    const NodeAffine proj = move_positions ? boundary_affine(mesh) : NodeAffine{};

    for (int blk = 0; blk < cfg.gat_blocks; ++blk) {
        const std::string sb = std::to_string(blk);
        Tensor v_full = concat({v, pos, I_rep}, 1);
        Tensor vi = gather_rows(v_full, g.tgt);
        Tensor vj = gather_rows(v_full, g.src);
        Tensor logits = reshape(mlp_forward(ps, "att" + sb, concat({vi, vj}, 1)), {ne});
        Tensor alpha = segment_softmax(logits, g.tgt, n);
        if (move_positions) {
            Tensor update = segment_sum(scale_rows(gather_rows(pos, g.src), alpha), g.tgt, n);
            if (block_positions) block_positions->push_back(to_vecs(update));
            pos = apply_affine(proj, update);
            if (block_positions) block_positions->push_back(to_vecs(pos));
        }
        Tensor msg = add(matmul(vj, ps.get("msg" + sb + ".w")), ps.get("msg" + sb + ".b"));
        v = selu(segment_sum(scale_rows(msg, alpha), g.tgt, n));
    }
    if (final_features) *final_features = concat({v, pos, I_rep}, 1);
    return pos;
}

}  // namespace

Tensor gat_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state,
                   std::vector<std::vector<Vec2>>* block_positions) {
    return gat_backbone(model, mesh, state, /*move_positions=*/true, block_positions, nullptr);
}

Tensor gat_clip_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state) {
    Tensor v_full;
    Tensor pos = gat_backbone(model, mesh, state, /*move_positions=*/false, nullptr, &v_full);
    Tensor disp = add(matmul(v_full, model.params.get("head.w")), model.params.get("head.b"));
    return add(pos, disp);
}

}  // namespace detail

}  // namespace mm
