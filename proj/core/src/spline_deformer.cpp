#include <algorithm>
#include <cmath>

#include "deformer_detail.hpp"
#include "mm/errors.hpp"

namespace mm {

namespace {

// softplus shift so a zero raw input yields derivative exactly 1
const double kDerivShift = std::log(std::exp(1.0) - 1.0);

double softplus_d(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

SplineSlice activate_spline_params(const std::vector<double>& raw, int bins, double min_bin) {
    const int K = bins;
    if (K < 1 || static_cast<int>(raw.size()) != 3 * K - 1)
        throw InvalidArgument("activate_spline_params: expected 3K-1 raw values");
    if (min_bin <= 0.0 || min_bin * K >= 1.0)
        throw InvalidArgument("activate_spline_params: min_bin out of range");
    auto knots = [&](int off) {
        double mx = raw[static_cast<size_t>(off)];
        for (int i = 1; i < K; ++i) mx = std::max(mx, raw[static_cast<size_t>(off + i)]);
        double denom = 0.0;
        std::vector<double> e(static_cast<size_t>(K));
        for (int i = 0; i < K; ++i) {
            e[static_cast<size_t>(i)] = std::exp(raw[static_cast<size_t>(off + i)] - mx);
            denom += e[static_cast<size_t>(i)];
        }
        std::vector<double> k(static_cast<size_t>(K) + 1, 0.0);
        double acc = 0.0;
        for (int i = 0; i < K; ++i) {
            acc += min_bin + (1.0 - K * min_bin) * e[static_cast<size_t>(i)] / denom;
            k[static_cast<size_t>(i) + 1] = acc;
        }
        k[static_cast<size_t>(K)] = 1.0;  // exact endpoint
        return k;
    };
    SplineSlice s;
    s.xk = knots(0);
    s.yk = knots(K);
    s.dk.assign(static_cast<size_t>(K) + 1, 1.0);
    for (int i = 0; i < K - 1; ++i)
        s.dk[static_cast<size_t>(i) + 1] = softplus_d(raw[static_cast<size_t>(2 * K + i)] + kDerivShift);
    return s;
}

std::pair<double, double> rq_spline(double x, const SplineSlice& s) {
    const int K = static_cast<int>(s.xk.size()) - 1;
    if (K < 1 || s.yk.size() != s.xk.size() || s.dk.size() != s.xk.size())
        throw InvalidArgument("rq_spline: malformed slice");
    x = std::clamp(x, 0.0, 1.0);
    int b = static_cast<int>(std::upper_bound(s.xk.begin(), s.xk.end(), x) - s.xk.begin()) - 1;
    b = std::clamp(b, 0, K - 1);
    const double xa = s.xk[static_cast<size_t>(b)], wk = s.xk[static_cast<size_t>(b) + 1] - xa;
    const double ya = s.yk[static_cast<size_t>(b)], hk = s.yk[static_cast<size_t>(b) + 1] - ya;
    const double da = s.dk[static_cast<size_t>(b)], db = s.dk[static_cast<size_t>(b) + 1];
    const double sk = hk / wk;
    const double t = (x - xa) / wk;
    const double u = t * (1.0 - t);
    const double den = sk + (da + db - 2.0 * sk) * u;
    const double y = ya + hk * (sk * t * t + da * u) / den;
    const double dy = sk * sk * (db * t * t + 2.0 * sk * u + da * (1.0 - t) * (1.0 - t)) / (den * den);
    return {y, dy};
}

double rq_spline_inverse(double y, const SplineSlice& s) {
    y = std::clamp(y, 0.0, 1.0);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rq_spline(mid, s).first < y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

namespace detail {

Tensor rqs_forward(const Tensor& x, const Tensor& raw, int bins, double min_bin) {
    const int K = bins;
    const int n = x.dim(0);
    if (raw.dim(0) != n || raw.dim(1) != 3 * K - 1)
        throw ShapeError("rqs_forward: conditioner output must be [n, 3K-1]");
    Tensor zeros_col = Tensor::zeros({n, 1});
    Tensor ones_col = Tensor::full({n, 1}, 1.0);
    auto knot_tensor = [&](int c0) {
        Tensor sm = softmax(slice_cols(raw, c0, c0 + K), 1);
        Tensor w = add_scalar(scale(sm, 1.0 - K * min_bin), min_bin);
        return concat({zeros_col, cumsum(w, 1)}, 1);  // [n, K+1]
    };
    Tensor xk = knot_tensor(0);
    Tensor yk = knot_tensor(K);
    Tensor dint = softplus(add_scalar(slice_cols(raw, 2 * K, 3 * K - 1), kDerivShift));
    Tensor dk = concat({ones_col, dint, ones_col}, 1);  // [n, K+1]

    std::vector<int> b(static_cast<size_t>(n)), b1(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        const double xv = std::clamp(x.data()[static_cast<size_t>(r)], 0.0, 1.0);
        const double* row = xk.data().data() + static_cast<size_t>(r) * (K + 1);
        int bi = static_cast<int>(std::upper_bound(row, row + K + 1, xv) - row) - 1;
        bi = std::clamp(bi, 0, K - 1);
        b[static_cast<size_t>(r)] = bi;
        b1[static_cast<size_t>(r)] = bi + 1;
    }
    Tensor xa = take_per_row(xk, b), xb = take_per_row(xk, b1);
    Tensor ya = take_per_row(yk, b), yb = take_per_row(yk, b1);
    Tensor da = take_per_row(dk, b), db = take_per_row(dk, b1);
    Tensor wk = sub(xb, xa), hk = sub(yb, ya);
    Tensor sk = div(hk, wk);
    Tensor t = div(sub(x, xa), wk);
    Tensor ones_n = Tensor::full({n}, 1.0);
    Tensor u = mul(t, sub(ones_n, t));
    Tensor num = mul(hk, add(mul(sk, mul(t, t)), mul(da, u)));
    Tensor den = add(sk, mul(sub(add(da, db), scale(sk, 2.0)), u));
    return add(ya, div(num, den));
}

Tensor spline_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state) {
    const DeformerConfig& cfg = model.config;
    const DomainSpec& dom = mesh.domain();
    const Vec2 lo = dom.bbox_min(), hi = dom.bbox_max();
    const int n = mesh.node_count();
    std::vector<double> xs(static_cast<size_t>(n)), ys(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        // bbox-normalized coordinates; the identity map for the unit square
        xs[static_cast<size_t>(i)] = (mesh.node(i).x - lo.x) / (hi.x - lo.x);
        ys[static_cast<size_t>(i)] = (mesh.node(i).y - lo.y) / (hi.y - lo.y);
    }
    Tensor coords[2] = {Tensor::from({n}, std::move(xs)), Tensor::from({n}, std::move(ys))};
    Tensor I = embed_tensor(model, state, dom);
    const int D = I.dim(0);
    std::vector<int> top(static_cast<size_t>(D));
    for (int i = 0; i < D; ++i) top[static_cast<size_t>(i)] = i;
    for (int blk = 0; blk < cfg.coupling_blocks; ++blk) {
        const int d = blk % 2;
        // Conditioner MLP on [I, xi_other]; the embedding rows are identical,
        // so the first layer's I part is one row-vector product instead of a
        // full [n, D+1] GEMM.
        const std::string p = "cond" + std::to_string(blk);
        const Tensor& w1 = model.params.get(p + ".w1");
        const int H = w1.dim(1);
        Tensor base = matmul(reshape(I, {1, D}), gather_rows(w1, top));          // [1,H]
        Tensor per = matmul(reshape(coords[1 - d], {n, 1}), gather_rows(w1, {D}));  // [n,H]
        Tensor h = selu(add(add(per, reshape(base, {H})), model.params.get(p + ".b1")));
        h = selu(add(matmul(h, model.params.get(p + ".w2")), model.params.get(p + ".b2")));
        Tensor raw = add(matmul(h, model.params.get(p + ".w3")), model.params.get(p + ".b3"));
        coords[d] = rqs_forward(coords[d], raw, cfg.spline_bins, cfg.min_bin);
    }
    Tensor ox = add_scalar(scale(coords[0], hi.x - lo.x), lo.x);
    Tensor oy = add_scalar(scale(coords[1], hi.y - lo.y), lo.y);
    return concat({reshape(ox, {n, 1}), reshape(oy, {n, 1})}, 1);
}

}  // namespace detail

}  // namespace mm
