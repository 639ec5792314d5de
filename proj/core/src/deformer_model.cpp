#include <cmath>

#include "deformer_detail.hpp"
#include "json.hpp"
#include "mm/errors.hpp"

namespace mm {

namespace detail {

std::vector<double> dense_init(Rng& rng, int fan_in, size_t count) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(count);
    for (auto& x : v) x = s * rng.normal();
    return v;
}

void add_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out,
             Rng& rng, bool zero_final) {
    store.add(prefix + ".w1", {in, hidden}, dense_init(rng, in, static_cast<size_t>(in) * hidden));
    store.add(prefix + ".b1", {hidden}, std::vector<double>(static_cast<size_t>(hidden), 0.0));
    store.add(prefix + ".w2", {hidden, hidden},
              dense_init(rng, hidden, static_cast<size_t>(hidden) * hidden));
    store.add(prefix + ".b2", {hidden}, std::vector<double>(static_cast<size_t>(hidden), 0.0));
    store.add(prefix + ".w3", {hidden, out},
              zero_final ? std::vector<double>(static_cast<size_t>(hidden) * out, 0.0)
                         : dense_init(rng, hidden, static_cast<size_t>(hidden) * out));
    store.add(prefix + ".b3", {out}, std::vector<double>(static_cast<size_t>(out), 0.0));
}

Tensor mlp_forward(const ParameterStore& store, const std::string& prefix, const Tensor& x) {
    Tensor h = selu(add(matmul(x, store.get(prefix + ".w1")), store.get(prefix + ".b1")));
    h = selu(add(matmul(h, store.get(prefix + ".w2")), store.get(prefix + ".b2")));
    return add(matmul(h, store.get(prefix + ".w3")), store.get(prefix + ".b3"));
}

Tensor tile_rows(const Tensor& v, int n) {
    const int d = v.dim(0);
    Tensor ones = Tensor::full({n, 1}, 1.0);
    return matmul(ones, reshape(v, {1, d}));
}

}  // namespace detail

namespace {

void add_conv_stack(ParameterStore& store, const DeformerConfig& cfg, Rng& rng) {
    const int ch[4] = {1, 16, 32, cfg.embed_dim};
    for (int l = 0; l < 3; ++l) {
        const std::string p = "conv" + std::to_string(l + 1);
        const int ic = ch[l], oc = ch[l + 1];
        store.add(p + ".w", {oc, ic, 3, 3},
                  detail::dense_init(rng, ic * 9, static_cast<size_t>(oc) * ic * 9));
        store.add(p + ".b", {oc}, std::vector<double>(static_cast<size_t>(oc), 0.0));
    }
}

void add_gat_blocks(ParameterStore& store, const DeformerConfig& cfg, Rng& rng) {
    const int D = cfg.embed_dim + cfg.param_dim;
    const int F = cfg.gat_feat;
    const int vdim = F + 2 + D;  // [features, position, global]
    detail::add_mlp(store, "enc", 5, cfg.hidden, F, rng, /*zero_final=*/false);
    for (int b = 0; b < cfg.gat_blocks; ++b) {
        const std::string sb = std::to_string(b);
        detail::add_mlp(store, "att" + sb, 2 * vdim, cfg.hidden, 1, rng, /*zero_final=*/false);
        store.add("msg" + sb + ".w", {vdim, F},
                  detail::dense_init(rng, vdim, static_cast<size_t>(vdim) * F));
        store.add("msg" + sb + ".b", {F}, std::vector<double>(static_cast<size_t>(F), 0.0));
    }
}

}  // namespace

DeformerModel make_deformer(const std::string& kind, int param_dim, uint64_t seed) {
    if (kind != "m2n-spline" && kind != "m2n-gat" && kind != "mlp-clip" && kind != "gat-clip")
        throw InvalidArgument("make_deformer: unknown kind " + kind);
    if (param_dim < 0) throw InvalidArgument("make_deformer: negative param_dim");
    DeformerModel model;
    model.config.kind = kind;
    model.config.param_dim = param_dim;
    const DeformerConfig& cfg = model.config;
    Rng rng(seed, "init:" + kind);
    add_conv_stack(model.params, cfg, rng);
    const int D = cfg.embed_dim + cfg.param_dim;
    if (kind == "m2n-spline") {
        for (int b = 0; b < cfg.coupling_blocks; ++b)
            detail::add_mlp(model.params, "cond" + std::to_string(b), D + 1, cfg.hidden,
                            3 * cfg.spline_bins - 1, rng, /*zero_final=*/true);
    } else if (kind == "m2n-gat") {
        add_gat_blocks(model.params, cfg, rng);
    } else if (kind == "mlp-clip") {
        detail::add_mlp(model.params, "head", D + 2, cfg.hidden, 2, rng, /*zero_final=*/true);
    } else {  // gat-clip
        add_gat_blocks(model.params, cfg, rng);
        const int vdim = cfg.gat_feat + 2 + D;
        model.params.add("head.w", {vdim, 2}, std::vector<double>(static_cast<size_t>(vdim) * 2, 0.0));
        model.params.add("head.b", {2}, {0.0, 0.0});
    }
    return model;
}

void save_deformer(const DeformerModel& model, const std::string& path) {
    nlohmann::json cfg;
    cfg["kind"] = model.config.kind;
    cfg["param_dim"] = model.config.param_dim;
    cfg["grid_n"] = model.config.grid_n;
    cfg["embed_dim"] = model.config.embed_dim;
    cfg["hidden"] = model.config.hidden;
    cfg["spline_bins"] = model.config.spline_bins;
    cfg["coupling_blocks"] = model.config.coupling_blocks;
    cfg["gat_blocks"] = model.config.gat_blocks;
    cfg["gat_feat"] = model.config.gat_feat;
    cfg["min_bin"] = model.config.min_bin;
    save_checkpoint(model.params, cfg.dump(), path);
}

DeformerModel load_deformer(const std::string& path) {
    DeformerModel model;
    const std::string cfg_str = load_checkpoint(model.params, path);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(cfg_str);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_deformer: bad config block in " + path + ": " + e.what());
    }
    if (!cfg.contains("kind")) throw IoError("load_deformer: checkpoint lacks a model kind: " + path);
    model.config.kind = cfg["kind"].get<std::string>();
    model.config.param_dim = cfg.value("param_dim", 1);
    model.config.grid_n = cfg.value("grid_n", 32);
    model.config.embed_dim = cfg.value("embed_dim", 64);
    model.config.hidden = cfg.value("hidden", 64);
    model.config.spline_bins = cfg.value("spline_bins", 8);
    model.config.coupling_blocks = cfg.value("coupling_blocks", 4);
    model.config.gat_blocks = cfg.value("gat_blocks", 3);
    model.config.gat_feat = cfg.value("gat_feat", 32);
    model.config.min_bin = cfg.value("min_bin", 1e-3);
    return model;
}

Tensor deform_tensor(const DeformerModel& model, const Mesh& mesh, const InputState& state,
                     std::vector<std::vector<Vec2>>* block_positions) {
    if (!state.sampler) throw InvalidArgument("deform: InputState has no sampler");
    if (static_cast<int>(state.params.size()) != model.config.param_dim)
        throw InvalidArgument("deform: state has " + std::to_string(state.params.size()) +
                              " params, model expects " + std::to_string(model.config.param_dim));
    const std::string& kind = model.config.kind;
    if (kind == "m2n-spline") return detail::spline_forward(model, mesh, state);
    if (kind == "m2n-gat") return detail::gat_forward(model, mesh, state, block_positions);
    if (kind == "mlp-clip") return detail::mlp_clip_forward(model, mesh, state);
    if (kind == "gat-clip") return detail::gat_clip_forward(model, mesh, state);
    throw InvalidArgument("deform: unknown model kind " + kind);
}

namespace {

// Project p onto segment k of the domain, clamped to the segment extent.
Vec2 clamp_to_segment(const DomainSpec& dom, int k, const Vec2& p) {
    return closest_point_on_segment(dom.segment_start(k), dom.segment_end(k), p);
}

}  // namespace

std::vector<Vec2> deform(const DeformerModel& model, const Mesh& mesh, const InputState& state) {
    Tensor out = deform_tensor(model, mesh, state);
    const int n = mesh.node_count();
    std::vector<Vec2> coords(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        coords[static_cast<size_t>(i)] = {out.data()[static_cast<size_t>(i) * 2],
                                          out.data()[static_cast<size_t>(i) * 2 + 1]};
    const DomainSpec& dom = mesh.domain();
    const std::string& kind = model.config.kind;
    const bool clip_baseline = kind == "mlp-clip" || kind == "gat-clip";
    for (int i = 0; i < n; ++i) {
        const BoundaryTag& t = mesh.tag(i);
        Vec2& p = coords[static_cast<size_t>(i)];
        if (t.kind == BoundaryTag::Corner) {
            p = dom.vertices[static_cast<size_t>(t.segment)];
        } else if (t.kind == BoundaryTag::Edge) {
            if (kind == "m2n-spline" && dom.kind != DomainSpec::Kind::UnitSquare)
                continue;  // bbox-normalized polygon run: boundary not preserved by design
            if (clip_baseline) {
                // keep only tangential movement, then stay on the segment
                const Vec2 a = dom.segment_start(t.segment);
                const Vec2 ab = dom.segment_end(t.segment) - a;
                const double len2 = ab.dot(ab);
                p = a + ab * (ab.dot(p - a) / len2);
            }
            p = clamp_to_segment(dom, t.segment, p);
        } else if (clip_baseline && !dom.contains(p)) {
            p = closest_point_on_polygon(dom.vertices, p);
        }
    }
    return coords;
}

}  // namespace mm
