#include "mm/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mm/errors.hpp"

namespace mm {

namespace {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
    throw ShapeError(op + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a) {
    throw ShapeError(op + ": bad shape " + shape_str(a.shape()));
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

// Wire an op result: parents/backprop only kept when a parent needs gradients.
Tensor wire(std::shared_ptr<TensorNode> out, std::vector<Tensor> parents,
            std::function<void(TensorNode&)> backprop) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        out->requires_grad = true;
        for (auto& p : parents) out->parents.push_back(p.handle());
        out->backprop = std::move(backprop);
    }
    return Tensor(std::move(out));
}

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = make_node(shape, std::vector<double>(shape_numel(shape), 0.0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto n = make_node(shape, std::vector<double>(shape_numel(shape), value));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("Tensor::from: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto n = make_node(std::move(shape), std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::value() const {
    if (numel() != 1) throw ShapeError("Tensor::value: not a scalar, shape " + shape_str(shape()));
    return n_->data[0];
}

void Tensor::backward() const {
    if (numel() != 1)
        throw ShapeError("backward: result must be scalar, shape " + shape_str(shape()));
    // iterative post-order topological sort
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack{{n_.get(), 0}};
    seen.insert(n_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    n_->ensure_grad();
    n_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backprop && !node->grad.empty()) node->backprop(*node);
    }
}

// ---- elementwise -----------------------------------------------------------

namespace {

// a op b with b either same-shape or a row vector broadcast over a's rows
template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const std::string& name, const Tensor& a, const Tensor& b, Fwd fwd,
                          Bwd bwd) {
    const bool rowcast = a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1);
    if (!rowcast && a.shape() != b.shape()) shape_fail(name, a, b);
    const size_t n = a.numel(), cols = rowcast ? static_cast<size_t>(b.dim(0)) : n;
    std::vector<double> out(n);
    if (rowcast) {
        for (size_t r = 0; r < n; r += cols)
            for (size_t c = 0; c < cols; ++c) out[r + c] = fwd(a.data()[r + c], b.data()[c]);
    } else {
        for (size_t i = 0; i < n; ++i) out[i] = fwd(a.data()[i], b.data()[i]);
    }
    auto node = make_node(a.shape(), std::move(out));
    return wire(node, {a, b}, [rowcast, cols, bwd](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t r = 0; r < o.data.size(); r += cols)
            for (size_t c = 0; c < cols; ++c) {
                const size_t i = r + c, j = rowcast ? c : i;
                const auto [da, db] = bwd(pa.data[i], pb.data[j], o.data[i]);
                pa.grad[i] += o.grad[i] * da;
                pb.grad[j] += o.grad[i] * db;
            }
    });
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Bwd bwd) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i]);
    auto node = make_node(a.shape(), std::move(out));
    return wire(node, {a}, [bwd](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < o.data.size(); ++i) p.grad[i] += o.grad[i] * bwd(p.data[i], o.data[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
    return unary_elementwise(
        a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_elementwise(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor sqrt_t(const Tensor& a) {
    return unary_elementwise(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp_t(const Tensor& a) {
    return unary_elementwise(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor selu(const Tensor& a) {
    return unary_elementwise(
        a,
        [](double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); },
        [](double x, double y) {
            return x > 0.0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha;
        });
}

Tensor softplus(const Tensor& a) {
    return unary_elementwise(
        a,
        [](double x) {
            // overflow-safe log(1+e^x)
            return x > 30.0 ? x : std::log1p(std::exp(x));
        },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor abs_t(const Tensor& a) {
    return unary_elementwise(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

// ---- linear algebra --------------------------------------------------------

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a, b);
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    std::vector<double> out(static_cast<size_t>(n) * m);
    Eigen::Map<Mat>(out.data(), n, m).noalias() =
        Eigen::Map<const Mat>(a.data().data(), n, k) * Eigen::Map<const Mat>(b.data().data(), k, m);
    auto node = make_node({n, m}, std::move(out));
    return wire(node, {a, b}, [n, k, m](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        // dA += dO * B^T ; dB += A^T * dO
        Eigen::Map<const Mat> go(o.grad.data(), n, m);
        Eigen::Map<Mat>(pa.grad.data(), n, k).noalias() +=
            go * Eigen::Map<const Mat>(pb.data.data(), k, m).transpose();
        Eigen::Map<Mat>(pb.grad.data(), k, m).noalias() +=
            Eigen::Map<const Mat>(pa.data.data(), n, k).transpose() * go;
    });
}

Tensor softmax(const Tensor& a, int axis) {
    if (a.rank() == 1) {
        if (axis != 0) shape_fail("softmax", a);
    } else if (a.rank() != 2 || (axis != 0 && axis != 1)) {
        shape_fail("softmax", a);
    }
    const int rows = a.rank() == 1 ? 1 : a.dim(0);
    const int cols = a.rank() == 1 ? a.dim(0) : a.dim(1);
    const bool along_cols = a.rank() == 1 || axis == 1;  // softmax within each row
    const int groups = along_cols ? rows : cols;
    const int glen = along_cols ? cols : rows;
    auto at = [along_cols, cols](int g, int e) -> size_t {
        return along_cols ? static_cast<size_t>(g) * cols + e : static_cast<size_t>(e) * cols + g;
    };
    std::vector<double> out(a.numel());
    for (int g = 0; g < groups; ++g) {
        double mx = -1e300;
        for (int e = 0; e < glen; ++e) mx = std::max(mx, a.data()[at(g, e)]);
        double s = 0.0;
        for (int e = 0; e < glen; ++e) s += std::exp(a.data()[at(g, e)] - mx);
        for (int e = 0; e < glen; ++e) out[at(g, e)] = std::exp(a.data()[at(g, e)] - mx) / s;
    }
    auto node = make_node(a.shape(), std::move(out));
    return wire(node, {a}, [groups, glen, at](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (int g = 0; g < groups; ++g) {
            double dot = 0.0;
            for (int e = 0; e < glen; ++e) dot += o.grad[at(g, e)] * o.data[at(g, e)];
            for (int e = 0; e < glen; ++e)
                p.grad[at(g, e)] += o.data[at(g, e)] * (o.grad[at(g, e)] - dot);
        }
    });
}

Tensor cumsum(const Tensor& a, int axis) {
    if (!((a.rank() == 1 && axis == 0) || (a.rank() == 2 && axis == 1))) shape_fail("cumsum", a);
    const int rows = a.rank() == 1 ? 1 : a.dim(0);
    const int cols = a.rank() == 1 ? a.dim(0) : a.dim(1);
    std::vector<double> out(a.numel());
    for (int r = 0; r < rows; ++r) {
        double run = 0.0;
        for (int c = 0; c < cols; ++c) {
            run += a.data()[static_cast<size_t>(r) * cols + c];
            out[static_cast<size_t>(r) * cols + c] = run;
        }
    }
    auto node = make_node(a.shape(), std::move(out));
    return wire(node, {a}, [rows, cols](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            double run = 0.0;
            for (int c = cols - 1; c >= 0; --c) {
                run += o.grad[static_cast<size_t>(r) * cols + c];
                p.grad[static_cast<size_t>(r) * cols + c] += run;
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto node = make_node({1}, {s});
    return wire(node, {a}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (double& g : p.grad) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("l1_loss", a, b);
    return mean(abs_t(sub(a, b)));
}

// ---- shape plumbing --------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    auto node = make_node(std::move(shape), a.data());
    return wire(node, {a}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rank = parts[0].rank();
    if (rank == 1 && axis == 0) {
        int total = 0;
        for (const auto& p : parts) {
            if (p.rank() != 1) shape_fail("concat", parts[0], p);
            total += p.dim(0);
        }
        std::vector<double> out;
        out.reserve(static_cast<size_t>(total));
        for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
        auto node = make_node({total}, std::move(out));
        return wire(node, parts, [](TensorNode& o) {
            size_t off = 0;
            for (auto& pp : o.parents) {
                pp->ensure_grad();
                for (size_t i = 0; i < pp->data.size(); ++i) pp->grad[i] += o.grad[off + i];
                off += pp->data.size();
            }
        });
    }
    if (rank != 2 || (axis != 0 && axis != 1)) shape_fail("concat", parts[0]);
    if (axis == 0) {
        const int cols = parts[0].dim(1);
        int rows = 0;
        for (const auto& p : parts) {
            if (p.rank() != 2 || p.dim(1) != cols) shape_fail("concat", parts[0], p);
            rows += p.dim(0);
        }
        std::vector<double> out;
        out.reserve(static_cast<size_t>(rows) * cols);
        for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
        auto node = make_node({rows, cols}, std::move(out));
        return wire(node, parts, [](TensorNode& o) {
            size_t off = 0;
            for (auto& pp : o.parents) {
                pp->ensure_grad();
                for (size_t i = 0; i < pp->data.size(); ++i) pp->grad[i] += o.grad[off + i];
                off += pp->data.size();
            }
        });
    }
    const int rows = parts[0].dim(0);
    int cols = 0;
    std::vector<int> widths;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) shape_fail("concat", parts[0], p);
        widths.push_back(p.dim(1));
        cols += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(rows) * cols);
    int coff = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const int w = widths[k];
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c)
                out[static_cast<size_t>(r) * cols + coff + c] =
                    parts[k].data()[static_cast<size_t>(r) * w + c];
        coff += w;
    }
    auto node = make_node({rows, cols}, std::move(out));
    return wire(node, parts, [rows, cols, widths](TensorNode& o) {
        int off = 0;
        for (size_t k = 0; k < o.parents.size(); ++k) {
            auto& pp = *o.parents[k];
            pp.ensure_grad();
            const int w = widths[k];
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < w; ++c)
                    pp.grad[static_cast<size_t>(r) * w + c] +=
                        o.grad[static_cast<size_t>(r) * cols + off + c];
            off += w;
        }
    });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (a.rank() != 2 || c0 < 0 || c1 > a.dim(1) || c0 >= c1) shape_fail("slice_cols", a);
    const int rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(rows) * w);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < w; ++c)
            out[static_cast<size_t>(r) * w + c] = a.data()[static_cast<size_t>(r) * cols + c0 + c];
    auto node = make_node({rows, w}, std::move(out));
    return wire(node, {a}, [rows, cols, w, c0](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c)
                p.grad[static_cast<size_t>(r) * cols + c0 + c] +=
                    o.grad[static_cast<size_t>(r) * w + c];
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
    if (a.rank() != 2) shape_fail("gather_rows", a);
    const int cols = a.dim(1);
    std::vector<double> out(rows.size() * static_cast<size_t>(cols));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= a.dim(0))
            throw ShapeError("gather_rows: index " + std::to_string(rows[r]) + " out of " +
                             shape_str(a.shape()));
        for (int c = 0; c < cols; ++c)
            out[r * cols + c] = a.data()[static_cast<size_t>(rows[r]) * cols + c];
    }
    auto node = make_node({static_cast<int>(rows.size()), cols}, std::move(out));
    return wire(node, {a}, [rows, cols](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (size_t r = 0; r < rows.size(); ++r)
            for (int c = 0; c < cols; ++c)
                p.grad[static_cast<size_t>(rows[r]) * cols + c] += o.grad[r * cols + c];
    });
}

Tensor take_per_row(const Tensor& a, const std::vector<int>& idx) {
    if (a.rank() != 2 || idx.size() != static_cast<size_t>(a.dim(0))) shape_fail("take_per_row", a);
    const int cols = a.dim(1);
    std::vector<double> out(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= cols)
            throw ShapeError("take_per_row: index " + std::to_string(idx[r]) + " out of " +
                             shape_str(a.shape()));
        out[r] = a.data()[r * cols + static_cast<size_t>(idx[r])];
    }
    auto node = make_node({static_cast<int>(idx.size())}, std::move(out));
    return wire(node, {a}, [idx, cols](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            p.grad[r * cols + static_cast<size_t>(idx[r])] += o.grad[r];
    });
}

// ---- graph ops -------------------------------------------------------------

Tensor segment_softmax(const Tensor& logits, const std::vector<int>& segment, int nseg) {
    if (logits.rank() != 1 || logits.numel() != segment.size()) shape_fail("segment_softmax", logits);
    const size_t n = segment.size();
    std::vector<double> mx(static_cast<size_t>(nseg), -1e300), denom(static_cast<size_t>(nseg), 0.0);
    for (size_t i = 0; i < n; ++i)
        mx[static_cast<size_t>(segment[i])] =
            std::max(mx[static_cast<size_t>(segment[i])], logits.data()[i]);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logits.data()[i] - mx[static_cast<size_t>(segment[i])]);
        denom[static_cast<size_t>(segment[i])] += out[i];
    }
    for (size_t i = 0; i < n; ++i) out[i] /= denom[static_cast<size_t>(segment[i])];
    auto node = make_node(logits.shape(), std::move(out));
    return wire(node, {logits}, [segment, nseg](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        std::vector<double> dot(static_cast<size_t>(nseg), 0.0);
        for (size_t i = 0; i < o.data.size(); ++i)
            dot[static_cast<size_t>(segment[i])] += o.grad[i] * o.data[i];
        for (size_t i = 0; i < o.data.size(); ++i)
            p.grad[i] += o.data[i] * (o.grad[i] - dot[static_cast<size_t>(segment[i])]);
    });
}

Tensor segment_sum(const Tensor& a, const std::vector<int>& segment, int nseg) {
    if (a.rank() != 2 || static_cast<size_t>(a.dim(0)) != segment.size())
        shape_fail("segment_sum", a);
    const int cols = a.dim(1);
    std::vector<double> out(static_cast<size_t>(nseg) * cols, 0.0);
    for (size_t r = 0; r < segment.size(); ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(segment[r]) * cols + c] += a.data()[r * cols + c];
    auto node = make_node({nseg, cols}, std::move(out));
    return wire(node, {a}, [segment, cols](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (size_t r = 0; r < segment.size(); ++r)
            for (int c = 0; c < cols; ++c)
                p.grad[r * cols + c] += o.grad[static_cast<size_t>(segment[r]) * cols + c];
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
    if (a.rank() != 2 || s.rank() != 1 || s.dim(0) != a.dim(0)) shape_fail("scale_rows", a, s);
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(a.numel());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(r) * cols + c] =
                a.data()[static_cast<size_t>(r) * cols + c] * s.data()[static_cast<size_t>(r)];
    auto node = make_node(a.shape(), std::move(out));
    return wire(node, {a, s}, [rows, cols](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& ps = *o.parents[1];
        pa.ensure_grad();
        ps.ensure_grad();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const size_t i = static_cast<size_t>(r) * cols + c;
                pa.grad[i] += o.grad[i] * ps.data[static_cast<size_t>(r)];
                ps.grad[static_cast<size_t>(r)] += o.grad[i] * pa.data[i];
            }
    });
}

// ---- conv ------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0)) shape_fail("conv2d", x, w);
    if (bias.rank() != 1 || bias.dim(0) != w.dim(0)) shape_fail("conv2d", w, bias);
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int OC = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = (H + stride - 1) / stride, OW = (W + stride - 1) / stride;
    // "same" padding: output pixel (i,j) reads input rows i*s - ph .. +kh
    const int ph = ((OH - 1) * stride + kh - H) / 2;
    const int pw = ((OW - 1) * stride + kw - W) / 2;
    // im2col: col[(ic,a,b), (i,j)] = x[ic, i*s-ph+a, j*s-pw+b] (0 when padded),
    // so the convolution is a single GEMM w[OC, C*kh*kw] * col.
    const int K = C * kh * kw, P = OH * OW;
    auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(K) * P, 0.0);
    for (int ic = 0; ic < C; ++ic)
        for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
                double* row = col->data() + static_cast<size_t>((ic * kh + a) * kw + b) * P;
                for (int i = 0; i < OH; ++i) {
                    const int ii = i * stride - ph + a;
                    if (ii < 0 || ii >= H) continue;
                    const double* src = x.data().data() + (static_cast<size_t>(ic) * H + ii) * W;
                    for (int j = 0; j < OW; ++j) {
                        const int jj = j * stride - pw + b;
                        if (jj >= 0 && jj < W) row[static_cast<size_t>(i) * OW + j] = src[jj];
                    }
                }
            }
    std::vector<double> out(static_cast<size_t>(OC) * P);
    {
        Eigen::Map<const Mat> mw(w.data().data(), OC, K);
        Eigen::Map<const Mat> mc(col->data(), K, P);
        Eigen::Map<Mat> mo(out.data(), OC, P);
        mo.noalias() = mw * mc;
        for (int oc = 0; oc < OC; ++oc) mo.row(oc).array() += bias.data()[static_cast<size_t>(oc)];
    }
    auto node = make_node({OC, OH, OW}, std::move(out));
    return wire(node, {x, w, bias}, [=](TensorNode& o) {
        auto& px = *o.parents[0];
        auto& pw_ = *o.parents[1];
        auto& pb = *o.parents[2];
        px.ensure_grad();
        pw_.ensure_grad();
        pb.ensure_grad();
        Eigen::Map<const Mat> go(o.grad.data(), OC, P);
        Eigen::Map<const Mat> mc(col->data(), K, P);
        Eigen::Map<Mat> gw(pw_.grad.data(), OC, K);
        gw.noalias() += go * mc.transpose();
        for (int oc = 0; oc < OC; ++oc) pb.grad[static_cast<size_t>(oc)] += go.row(oc).sum();
        // dx via col2im of w^T * dOut.
        Mat gcol(K, P);
        Eigen::Map<const Mat> mw(pw_.data.data(), OC, K);
        gcol.noalias() = mw.transpose() * go;
        for (int ic = 0; ic < C; ++ic)
            for (int a = 0; a < kh; ++a)
                for (int b = 0; b < kw; ++b) {
                    const double* row = gcol.data() + static_cast<size_t>((ic * kh + a) * kw + b) * P;
                    for (int i = 0; i < OH; ++i) {
                        const int ii = i * stride - ph + a;
                        if (ii < 0 || ii >= H) continue;
                        double* dst = px.grad.data() + (static_cast<size_t>(ic) * H + ii) * W;
                        for (int j = 0; j < OW; ++j) {
                            const int jj = j * stride - pw + b;
                            if (jj >= 0 && jj < W) dst[jj] += row[static_cast<size_t>(i) * OW + j];
                        }
                    }
                }
    });
}

Tensor global_average_pool(const Tensor& x) {
    if (x.rank() != 3) shape_fail("global_average_pool", x);
    const int C = x.dim(0);
    const size_t hw = static_cast<size_t>(x.dim(1)) * x.dim(2);
    std::vector<double> out(static_cast<size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
        for (size_t i = 0; i < hw; ++i) out[static_cast<size_t>(c)] += x.data()[c * hw + i];
        out[static_cast<size_t>(c)] /= static_cast<double>(hw);
    }
    auto node = make_node({C}, std::move(out));
    return wire(node, {x}, [C, hw](TensorNode& o) {
        auto& p = *o.parents[0];
        p.ensure_grad();
        for (int c = 0; c < C; ++c)
            for (size_t i = 0; i < hw; ++i)
                p.grad[c * hw + i] += o.grad[static_cast<size_t>(c)] / static_cast<double>(hw);
    });
}

}  // namespace mm
