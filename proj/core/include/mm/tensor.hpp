#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mm {

/// Reverse-mode autodiff over dense 64-bit tensors. A Tensor is a cheap handle
/// onto a tape node; ops build the graph eagerly and `backward()` on a scalar
/// result accumulates exact gradients into every `requires_grad` leaf.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // scatter node.grad to parents
    bool requires_grad = false;

    size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    size_t numel() const { return n_->numel(); }
    std::vector<double>& data() { return n_->data; }
    const std::vector<double>& data() const { return n_->data; }
    std::vector<double>& grad() { return n_->grad; }
    const std::vector<double>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    double value() const;  // scalar tensors only

    TensorNode* node() const { return n_.get(); }
    const std::shared_ptr<TensorNode>& handle() const { return n_; }

    /// Reverse pass from a scalar result. Gradients accumulate (callers clear
    /// leaves between steps via ParameterStore::zero_grad).
    void backward() const;

private:
    std::shared_ptr<TensorNode> n_;
};

// ---- elementwise / linear algebra ------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b is a row [c] vs a [n,c]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sqrt_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor selu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor abs_t(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // [n,k] x [k,m]

/// Softmax along the given axis (1-D: whole vector; 2-D: axis 0 or 1).
Tensor softmax(const Tensor& a, int axis);
/// Inclusive cumulative sum along axis (2-D, axis 1; or 1-D).
Tensor cumsum(const Tensor& a, int axis);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
/// Mean absolute difference (the paper's l1 training loss).
Tensor l1_loss(const Tensor& a, const Tensor& b);

// ---- shape plumbing --------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);  // 1-D axis 0 / 2-D axis 0 or 1
Tensor slice_cols(const Tensor& a, int c0, int c1);         // [n, c1-c0]
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
/// out[r] = a[r, idx[r]] (one element per row of a [n,c] tensor).
Tensor take_per_row(const Tensor& a, const std::vector<int>& idx);

// ---- graph / conv ops ------------------------------------------------------

/// Per-segment softmax of a flat logit vector (segments need not be sorted).
Tensor segment_softmax(const Tensor& logits, const std::vector<int>& segment, int nseg);
/// Row-sum of a [rows, c] tensor into segments: out[s] = sum_{i: segment[i]=s} a[i].
Tensor segment_sum(const Tensor& a, const std::vector<int>& segment, int nseg);
/// Each row i of a scaled by s[i] (s flat of length rows).
Tensor scale_rows(const Tensor& a, const Tensor& s);

/// conv2d on a single [C,H,W] image with [OC,IC,kh,kw] kernels, zero "same"
/// padding and the given stride; output [OC, ceil(H/s), ceil(W/s)].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride);
/// [C,H,W] -> [C] spatial mean.
Tensor global_average_pool(const Tensor& x);

// ---- parameters / optimizer ------------------------------------------------

/// Named parameter tensors plus Adam moment buffers. Iteration order is the
/// (deterministic) lexicographic name order.
class ParameterStore {
public:
    struct Entry {
        Tensor tensor;
        std::vector<double> m, v;  // Adam first/second moments
    };

    Tensor& add(const std::string& name, std::vector<int> shape, std::vector<double> init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    void zero_grad();

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }
    long step() const { return step_; }
    void set_step(long s) { step_ = s; }

private:
    std::map<std::string, Entry> entries_;
    long step_ = 0;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Standard bias-corrected Adam over every parameter; gradients must be
/// populated (StateError otherwise) and are cleared afterwards.
void adam_step(ParameterStore& store, const AdamOptions& opts = {});

/// JSON checkpoint: parameters, moments, step counter, and an opaque
/// architecture-config block the caller round-trips.
void save_checkpoint(const ParameterStore& store, const std::string& config_json,
                     const std::string& path);
std::string load_checkpoint(ParameterStore& store, const std::string& path);

}  // namespace mm
