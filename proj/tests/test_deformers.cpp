#include <cmath>
#include <cstdio>
#include <functional>

#include "deformer_detail.hpp"
#include "doctest.h"
#include "mm/deformers.hpp"
#include "mm/errors.hpp"
#include "mm/rng.hpp"

using namespace mm;

namespace {

InputState gaussian_state() {
    InputState s;
    s.kind = InputState::Kind::PoissonSource;
    s.sampler = [](Vec2 p) {
        const double dx = p.x - 0.4, dy = p.y - 0.6;
        return std::exp(-(dx * dx + dy * dy) / 0.02);
    };
    s.params = {15.0};
    return s;
}

std::vector<double> random_raw(Rng& rng, int count, double amp = 2.0) {
    std::vector<double> raw(static_cast<size_t>(count));
    for (auto& v : raw) v = rng.uniform(-amp, amp);
    return raw;
}

// Add noise to every parameter whose name starts with one of the prefixes.
void perturb(DeformerModel& model, Rng& rng, double amp,
             const std::vector<std::string>& prefixes = {}) {
    for (auto& [name, e] : model.params.entries()) {
        bool hit = prefixes.empty();
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) hit = true;
        if (!hit) continue;
        for (auto& v : e.tensor.data()) v += rng.normal(0.0, amp);
    }
}

double max_node_dist(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
    return m;
}

double dist_to_segment(const DomainSpec& dom, int k, const Vec2& p) {
    return (closest_point_on_segment(dom.segment_start(k), dom.segment_end(k), p) - p).norm();
}

}  // namespace

TEST_CASE("rational-quadratic spline slices") {
    const int K = 8;
    SUBCASE("zero raw parameters give the identity") {
        SplineSlice s = activate_spline_params(std::vector<double>(3 * K - 1, 0.0), K);
        for (double x : {0.0, 0.07, 0.31, 0.5, 0.77, 0.999, 1.0}) {
            auto [y, dy] = rq_spline(x, s);
            CHECK(y == doctest::Approx(x).epsilon(1e-14));
            CHECK(dy == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("random slices: valid knots, exact endpoints, monotone") {
        Rng rng(3, "spline");
        for (int rep = 0; rep < 20; ++rep) {
            SplineSlice s = activate_spline_params(random_raw(rng, 3 * K - 1), K);
            CHECK(s.xk.front() == 0.0);
            CHECK(s.xk.back() == 1.0);
            CHECK(s.yk.back() == 1.0);
            CHECK(s.dk.front() == 1.0);
            CHECK(s.dk.back() == 1.0);
            for (int i = 0; i < K; ++i) {
                CHECK(s.xk[i + 1] - s.xk[i] >= 1e-3 - 1e-12);
                CHECK(s.yk[i + 1] - s.yk[i] >= 1e-3 - 1e-12);
            }
            for (double d : s.dk) CHECK(d > 0.0);
            CHECK(rq_spline(0.0, s).first == 0.0);
            CHECK(rq_spline(1.0, s).first == doctest::Approx(1.0).epsilon(1e-14));
            double prev = -1.0;
            for (int i = 0; i <= 200; ++i) {
                const double y = rq_spline(i / 200.0, s).first;
                CHECK(y > prev);
                prev = y;
            }
        }
    }
    SUBCASE("analytic derivative matches finite differences") {
        Rng rng(4, "splined");
        SplineSlice s = activate_spline_params(random_raw(rng, 3 * K - 1), K);
        for (int i = 1; i < 40; ++i) {
            const double x = i / 40.0;
            const double h = 1e-6;
            const double fd = (rq_spline(x + h, s).first - rq_spline(x - h, s).first) / (2 * h);
            CHECK(rq_spline(x, s).second == doctest::Approx(fd).epsilon(1e-5));
        }
    }
    SUBCASE("forward/inverse round trip") {
        Rng rng(5, "splinerta");
        for (int rep = 0; rep < 5; ++rep) {
            SplineSlice s = activate_spline_params(random_raw(rng, 3 * K - 1), K);
            for (int i = 0; i <= 400; ++i) {
                const double x = i / 400.0;
                const double y = rq_spline(x, s).first;
                CHECK(std::abs(rq_spline_inverse(y, s) - x) < 1e-9);
                const double x2 = rq_spline_inverse(x, s);
                CHECK(std::abs(rq_spline(x2, s).first - x) < 1e-9);
            }
        }
    }
    SUBCASE("malformed inputs throw") {
        CHECK_THROWS_AS(activate_spline_params({0.0, 0.0}, K), InvalidArgument);
        CHECK_THROWS_AS(activate_spline_params(std::vector<double>(3 * K - 1, 0.0), K, 0.5),
                        InvalidArgument);
    }
}

TEST_CASE("tensor spline path matches the scalar reference") {
    const int K = 8, n = 37;
    Rng rng(11, "rqs");
    std::vector<double> raw_all;
    for (int r = 0; r < n; ++r) {
        auto row = random_raw(rng, 3 * K - 1);
        raw_all.insert(raw_all.end(), row.begin(), row.end());
    }
    Tensor raw = Tensor::from({n, 3 * K - 1}, raw_all, /*requires_grad=*/true);
    std::vector<double> xv(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) xv[static_cast<size_t>(r)] = rng.uniform();
    xv[0] = 0.0;
    xv[1] = 1.0;
    Tensor x = Tensor::from({n}, xv, /*requires_grad=*/true);

    Tensor y = detail::rqs_forward(x, raw, K, 1e-3);
    for (int r = 0; r < n; ++r) {
        std::vector<double> row(raw_all.begin() + static_cast<ptrdiff_t>(r) * (3 * K - 1),
                                raw_all.begin() + static_cast<ptrdiff_t>(r + 1) * (3 * K - 1));
        SplineSlice s = activate_spline_params(row, K);
        CHECK(y.data()[static_cast<size_t>(r)] ==
              doctest::Approx(rq_spline(xv[static_cast<size_t>(r)], s).first).epsilon(1e-12));
    }

    // finite-difference check through the tape, including d/dx
    x.grad().assign(x.numel(), 0.0);
    raw.grad().assign(raw.numel(), 0.0);
    auto loss = [&] { return sum(detail::rqs_forward(x, raw, K, 1e-3)); };
    loss().backward();
    const std::vector<double> gx = x.grad(), graw = raw.grad();
    const double h = 1e-6;
    for (int r = 2; r < 6; ++r) {  // skip the pinned endpoints
        const double keep = x.data()[static_cast<size_t>(r)];
        x.data()[static_cast<size_t>(r)] = keep + h;
        const double fp = loss().value();
        x.data()[static_cast<size_t>(r)] = keep - h;
        const double fm = loss().value();
        x.data()[static_cast<size_t>(r)] = keep;
        CHECK(gx[static_cast<size_t>(r)] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4));
    }
    for (size_t i = 0; i < 30; ++i) {
        const size_t idx = i * 29 % raw.numel();
        const double keep = raw.data()[idx];
        raw.data()[idx] = keep + h;
        const double fp = loss().value();
        raw.data()[idx] = keep - h;
        const double fm = loss().value();
        raw.data()[idx] = keep;
        const double fd = (fp - fm) / (2 * h);
        CHECK(std::abs(graw[idx] - fd) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
}

TEST_CASE("untrained deformers with zeroed heads are the identity") {
    Mesh mesh = build_unit_square_mesh(6);
    InputState state = gaussian_state();
    for (const char* kind : {"m2n-spline", "mlp-clip", "gat-clip"}) {
        CAPTURE(kind);
        DeformerModel model = make_deformer(kind, 1, 7);
        std::vector<Vec2> out = deform(model, mesh, state);
        CHECK(max_node_dist(out, mesh.nodes()) < 1e-12);
    }
    CHECK_THROWS_AS(make_deformer("bogus", 1, 7), InvalidArgument);
}

TEST_CASE("randomized spline deformer respects the square boundary") {
    Mesh mesh = build_unit_square_mesh(9);
    InputState state = gaussian_state();
    Rng rng(21, "perturb");
    for (int rep = 0; rep < 5; ++rep) {
        DeformerModel model = make_deformer("m2n-spline", 1, 100 + static_cast<uint64_t>(rep));
        // moderate, smooth deformation: perturb only the conditioner heads
        for (auto& [name, e] : model.params.entries())
            if (name.rfind("cond", 0) == 0 &&
                (name.find(".w3") != std::string::npos || name.find(".b3") != std::string::npos))
                for (auto& v : e.tensor.data()) v += rng.normal(0.0, 0.05);
        Tensor raw_out = deform_tensor(model, mesh, state);
        const DomainSpec& dom = mesh.domain();
        bool moved = false;
        for (int i = 0; i < mesh.node_count(); ++i) {
            const Vec2 p{raw_out.data()[static_cast<size_t>(i) * 2],
                         raw_out.data()[static_cast<size_t>(i) * 2 + 1]};
            const BoundaryTag& t = mesh.tag(i);
            if (t.kind == BoundaryTag::Corner) {
                CHECK((p - dom.vertices[static_cast<size_t>(t.segment)]).norm() < 1e-12);
            } else if (t.kind == BoundaryTag::Edge) {
                CHECK(dist_to_segment(dom, t.segment, p) < 1e-12);
            }
            CHECK(p.x > -1e-12);
            CHECK(p.x < 1.0 + 1e-12);
            CHECK(p.y > -1e-12);
            CHECK(p.y < 1.0 + 1e-12);
            if ((p - mesh.node(i)).norm() > 1e-3) moved = true;
        }
        CHECK(moved);
        CHECK(inversion_fraction(mesh, deform(model, mesh, state)) == 0.0);
    }
}

TEST_CASE("gat deformer: hull containment and boundary sliding") {
    InputState state = gaussian_state();
    auto run = [&](const Mesh& mesh) {
        DeformerModel model = make_deformer("m2n-gat", 1, 13);
        std::vector<std::vector<Vec2>> blocks;
        deform_tensor(model, mesh, state, &blocks);
        REQUIRE(static_cast<int>(blocks.size()) == 2 * model.config.gat_blocks);
        const auto& adj = mesh.adjacency();
        std::vector<Vec2> prev = mesh.nodes();
        for (int b = 0; b < model.config.gat_blocks; ++b) {
            const auto& update = blocks[static_cast<size_t>(2 * b)];
            for (int i = 0; i < mesh.node_count(); ++i) {
                std::vector<Vec2> ring{prev[static_cast<size_t>(i)]};
                for (int j : adj[static_cast<size_t>(i)]) ring.push_back(prev[static_cast<size_t>(j)]);
                CHECK(in_convex_hull(ring, update[static_cast<size_t>(i)], 1e-9));
            }
            prev = blocks[static_cast<size_t>(2 * b + 1)];
        }
        std::vector<Vec2> out = deform(model, mesh, state);
        const DomainSpec& dom = mesh.domain();
        bool moved = false;
        for (int i = 0; i < mesh.node_count(); ++i) {
            const Vec2& p = out[static_cast<size_t>(i)];
            CHECK(std::isfinite(p.x));
            CHECK(std::isfinite(p.y));
            const BoundaryTag& t = mesh.tag(i);
            if (t.kind == BoundaryTag::Corner)
                CHECK((p - dom.vertices[static_cast<size_t>(t.segment)]).norm() == 0.0);
            else if (t.kind == BoundaryTag::Edge)
                CHECK(dist_to_segment(dom, t.segment, p) < 1e-12);
            if ((p - mesh.node(i)).norm() > 1e-3) moved = true;
        }
        CHECK(moved);
    };
    run(build_unit_square_mesh(6));
    run(build_polygon_mesh(DomainSpec::heptagon(), 6));
}

TEST_CASE("gnn_block aggregates incoming edge messages") {
    Mesh mesh = build_unit_square_mesh(3);
    std::vector<std::vector<double>> payload(static_cast<size_t>(mesh.node_count()));
    for (int i = 0; i < mesh.node_count(); ++i)
        payload[static_cast<size_t>(i)] = {mesh.node(i).x + 2.0 * mesh.node(i).y};
    MeshGraph graph = mesh_to_graph(mesh, payload);

    std::vector<double> flat;
    for (const auto& row : graph.edge_features) flat.insert(flat.end(), row.begin(), row.end());
    Tensor ef = Tensor::from({static_cast<int>(graph.edges.size()), 3}, flat);

    SUBCASE("stub f = identity reduces to a plain incoming sum") {
        Tensor v = gnn_block(graph, Tensor(), ef, [](const Tensor& x) { return x; });
        REQUIRE(v.shape() == std::vector<int>{mesh.node_count(), 3});
        for (int i = 0; i < mesh.node_count(); ++i) {
            double sx = 0.0, slen = 0.0;
            for (int j : mesh.adjacency()[static_cast<size_t>(i)]) {
                sx += mesh.node(i).x - mesh.node(j).x;
                slen += (mesh.node(i) - mesh.node(j)).norm();
            }
            CHECK(v.data()[static_cast<size_t>(i) * 3] == doctest::Approx(sx).epsilon(1e-12));
            CHECK(v.data()[static_cast<size_t>(i) * 3 + 2] == doctest::Approx(slen).epsilon(1e-12));
        }
    }
    SUBCASE("node features are appended to the per-edge input") {
        std::vector<double> nf;
        for (const auto& row : payload) nf.push_back(row[0]);
        Tensor v = gnn_block(graph, Tensor::from({mesh.node_count(), 1}, nf), ef,
                             [](const Tensor& x) { return slice_cols(x, 3, 5); });
        // column 0 is now sum over neighbors of own payload = degree * payload
        for (int i = 0; i < mesh.node_count(); ++i) {
            const double deg = static_cast<double>(mesh.adjacency()[static_cast<size_t>(i)].size());
            CHECK(v.data()[static_cast<size_t>(i) * 2] ==
                  doctest::Approx(deg * nf[static_cast<size_t>(i)]).epsilon(1e-12));
        }
    }
    SUBCASE("initial_edge_features layout") {
        std::vector<double> state_vals;
        for (const auto& row : payload) state_vals.push_back(row[0]);
        auto feats = initial_edge_features(graph, mesh.nodes(), state_vals);
        REQUIRE(feats.size() == graph.edges.size());
        const auto& [i, j] = graph.edges[2];
        const Vec2 d = mesh.node(i) - mesh.node(j);
        CHECK(feats[2][0] == d.x);
        CHECK(feats[2][1] == d.y);
        CHECK(feats[2][2] == doctest::Approx(d.norm()));
        CHECK(feats[2][3] == state_vals[static_cast<size_t>(i)]);
        CHECK(feats[2][4] == state_vals[static_cast<size_t>(j)]);
    }
}

TEST_CASE("global embedding") {
    DeformerModel model = make_deformer("m2n-spline", 1, 99);
    InputState state = gaussian_state();
    const DomainSpec dom = DomainSpec::unit_square();
    GlobalEmbedding e1 = extract_global(model, state, dom);
    CHECK(static_cast<int>(e1.embed.size()) == model.config.embed_dim);
    CHECK(e1.full.size() == e1.embed.size() + state.params.size());
    CHECK(e1.full.back() == 15.0);

    SUBCASE("invariant to field amplitude (max-abs normalization)") {
        InputState scaled = state;
        auto base = state.sampler;
        scaled.sampler = [base](Vec2 p) { return 7.5 * base(p); };
        GlobalEmbedding e2 = extract_global(model, scaled, dom);
        for (size_t i = 0; i < e1.embed.size(); ++i)
            CHECK(e2.embed[i] == doctest::Approx(e1.embed[i]).epsilon(1e-12));
    }
    SUBCASE("near-zero fields fall back to the unnormalized image") {
        InputState tiny = state;
        tiny.sampler = [](Vec2) { return 1e-16; };
        GlobalEmbedding e2 = extract_global(model, tiny, dom);
        for (double v : e2.embed) CHECK(std::isfinite(v));
    }
    SUBCASE("deterministic across identically seeded models") {
        DeformerModel model2 = make_deformer("m2n-spline", 1, 99);
        GlobalEmbedding e2 = extract_global(model2, state, dom);
        CHECK(e2.full == e1.full);
    }
}

TEST_CASE("composed deformer gradients match finite differences") {
    Mesh mesh = build_unit_square_mesh(3);
    InputState state = gaussian_state();
    Rng rng(31, "fdperturb");
    for (const char* kind : {"m2n-spline", "m2n-gat", "mlp-clip", "gat-clip"}) {
        CAPTURE(kind);
        DeformerModel model = make_deformer(kind, 1, 55);
        perturb(model, rng, 0.05);  // move off the zero-initialized saddle
        auto loss = [&] {
            Tensor out = deform_tensor(model, mesh, state);
            return sum(mul(out, out));
        };
        model.params.zero_grad();
        loss().backward();
        std::map<std::string, std::vector<double>> grads;
        for (auto& [name, e] : model.params.entries()) grads[name] = e.tensor.grad();
        const double h = 1e-5;
        int checked = 0;
        for (auto& [name, e] : model.params.entries()) {
            auto& data = e.tensor.data();
            const size_t idx = e.tensor.numel() / 2;
            const double keep = data[idx];
            data[idx] = keep + h;
            const double fp = loss().value();
            data[idx] = keep - h;
            const double fm = loss().value();
            data[idx] = keep;
            const double fd = (fp - fm) / (2 * h);
            const double got = grads[name][idx];
            const double rel = std::abs(got - fd) / std::max(1.0, std::abs(fd) + std::abs(got));
            if (rel >= 1e-4) FAIL("gradient mismatch for ", kind, " ", name, ": tape ", got, " fd ", fd);
            ++checked;
        }
        CHECK(checked > 10);
    }
}

TEST_CASE("deformer checkpoints round-trip") {
    Mesh mesh = build_unit_square_mesh(5);
    InputState state = gaussian_state();
    DeformerModel model = make_deformer("m2n-spline", 1, 77);
    Rng rng(1, "ckpt");
    perturb(model, rng, 0.3);
    const std::string path = "/tmp/mm_deformer_ckpt_test.json";
    save_deformer(model, path);
    DeformerModel back = load_deformer(path);
    CHECK(back.config.kind == "m2n-spline");
    CHECK(back.config.spline_bins == model.config.spline_bins);
    CHECK(back.config.param_dim == model.config.param_dim);
    std::vector<Vec2> a = deform(model, mesh, state);
    std::vector<Vec2> b = deform(back, mesh, state);
    CHECK(max_node_dist(a, b) == 0.0);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_deformer("/tmp/definitely_missing_ckpt.json"), IoError);
}

TEST_CASE("clip baselines are clipped back to the domain") {
    Mesh mesh = build_unit_square_mesh(7);
    InputState state = gaussian_state();
    Rng rng(9, "clip");
    DeformerModel model = make_deformer("mlp-clip", 1, 17);
    perturb(model, rng, 0.8, {"head"});
    Tensor raw_out = deform_tensor(model, mesh, state);
    const DomainSpec& dom = mesh.domain();
    bool raw_violates = false;
    for (int i = 0; i < mesh.node_count(); ++i) {
        const Vec2 p{raw_out.data()[static_cast<size_t>(i) * 2],
                     raw_out.data()[static_cast<size_t>(i) * 2 + 1]};
        if (!dom.contains(p, 1e-12)) raw_violates = true;
    }
    CHECK(raw_violates);  // the raw displacement field knows nothing about the boundary
    std::vector<Vec2> out = deform(model, mesh, state);
    for (int i = 0; i < mesh.node_count(); ++i) {
        const Vec2& p = out[static_cast<size_t>(i)];
        CHECK(dom.contains(p, 1e-9));
        const BoundaryTag& t = mesh.tag(i);
        if (t.kind == BoundaryTag::Corner)
            CHECK((p - dom.vertices[static_cast<size_t>(t.segment)]).norm() == 0.0);
        else if (t.kind == BoundaryTag::Edge)
            CHECK(dist_to_segment(dom, t.segment, p) < 1e-12);
    }
}
