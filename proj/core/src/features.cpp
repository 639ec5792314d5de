#include <cmath>

#include "deformer_detail.hpp"
#include "mm/errors.hpp"

namespace mm {

namespace detail {

Tensor embed_tensor(const DeformerModel& model, const InputState& state,
                    const DomainSpec& domain) {
    const int gn = model.config.grid_n;
    const Vec2 lo = domain.bbox_min(), hi = domain.bbox_max();
    std::vector<double> img(static_cast<size_t>(gn) * gn, 0.0);
    double maxabs = 0.0;
    for (int j = 0; j < gn; ++j) {
        for (int i = 0; i < gn; ++i) {
            const Vec2 p{lo.x + (i + 0.5) / gn * (hi.x - lo.x),
                         lo.y + (j + 0.5) / gn * (hi.y - lo.y)};
            if (!domain.contains(p)) continue;
            const double v = state.sampler(p);
            img[static_cast<size_t>(j) * gn + i] = v;
            maxabs = std::max(maxabs, std::abs(v));
        }
    }
    if (maxabs > 1e-14)
        for (auto& v : img) v /= maxabs;
    Tensor x = Tensor::from({1, gn, gn}, std::move(img));
    const ParameterStore& ps = model.params;
    for (int l = 1; l <= 3; ++l) {
        const std::string p = "conv" + std::to_string(l);
        x = selu(conv2d(x, ps.get(p + ".w"), ps.get(p + ".b"), /*stride=*/2));
    }
    Tensor e = global_average_pool(x);  // [embed_dim]
    if (state.params.empty()) return e;
    Tensor p = Tensor::from({static_cast<int>(state.params.size())}, state.params);
    return concat({e, p}, 0);
}

}  // namespace detail

GlobalEmbedding extract_global(const DeformerModel& model, const InputState& state,
                               const DomainSpec& domain) {
    if (!state.sampler) throw InvalidArgument("extract_global: InputState has no sampler");
    Tensor full = detail::embed_tensor(model, state, domain);
    GlobalEmbedding out;
    out.full = full.data();
    out.embed.assign(out.full.begin(), out.full.begin() + model.config.embed_dim);
    return out;
}

}  // namespace mm
