#include "deformer_detail.hpp"

namespace mm::detail {

Tensor mlp_clip_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state) {
    const int n = mesh.node_count();
    std::vector<double> p0(static_cast<size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        p0[static_cast<size_t>(i) * 2] = mesh.node(i).x;
        p0[static_cast<size_t>(i) * 2 + 1] = mesh.node(i).y;
    }
    Tensor pos = Tensor::from({n, 2}, std::move(p0));
    Tensor I_rep = tile_rows(embed_tensor(model, state, mesh.domain()), n);
    Tensor disp = mlp_forward(model.params, "head", concat({I_rep, pos}, 1));
    return add(pos, disp);
}

}  // namespace mm::detail
