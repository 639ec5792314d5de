#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mm/mesh.hpp"
#include "mm/tensor.hpp"

namespace mm {

/// Problem information the deformers condition on: a scalar sampler of the
/// state over the domain's bounding box (zero outside the domain) plus the
/// physical parameters p (viscosity, mesh density, ...).
struct InputState {
    enum class Kind { PoissonSource, BurgersVelocity };
    Kind kind = Kind::PoissonSource;
    std::function<double(Vec2)> sampler;
    std::vector<double> params;
};

/// Resolution-invariant global embedding E of the state and the concatenated
/// conditioner input I = [E, p].
struct GlobalEmbedding {
    std::vector<double> embed;  // E, length = config.embed_dim
    std::vector<double> full;   // I = [E, p]
};

struct DeformerConfig {
    std::string kind;     // m2n-spline | m2n-gat | mlp-clip | gat-clip
    int param_dim = 1;    // length of InputState::params
    int grid_n = 32;      // feature-extractor sampling grid
    int embed_dim = 64;   // E length (conv channels of the last layer)
    int hidden = 64;      // MLP width everywhere
    int spline_bins = 8;  // K
    int coupling_blocks = 4;  // B, alternating dimensions
    int gat_blocks = 3;       // N
    int gat_feat = 32;        // per-node feature width between blocks
    double min_bin = 1e-3;
};

/// One of the four mesh deformation models: architecture config + parameters.
struct DeformerModel {
    DeformerConfig config;
    ParameterStore params;
};

/// Fresh model of the given kind. Spline conditioners and displacement heads
/// are zero-initialized so the untrained model is the identity deformation.
DeformerModel make_deformer(const std::string& kind, int param_dim, uint64_t seed);

void save_deformer(const DeformerModel& model, const std::string& path);
DeformerModel load_deformer(const std::string& path);

/// Sample the state on a grid_n x grid_n grid over the domain bounding box
/// (zero outside the domain), normalize by max |value|, run the conv stack,
/// global-average-pool, append p.
GlobalEmbedding extract_global(const DeformerModel& model, const InputState& state,
                               const DomainSpec& domain);

// ---- rational-quadratic spline (scalar reference path) ---------------------

/// Post-activation spline slice: K+1 knot positions in x and y (first 0, last
/// 1) and K+1 positive derivatives with the two endpoints fixed at 1.
struct SplineSlice {
    std::vector<double> xk, yk, dk;
};

/// Turn 3K-1 raw conditioner outputs into a valid slice: widths and heights
/// by min_bin-floored softmax, interior derivatives by a softplus shifted so
/// zero raw input gives derivative exactly 1.
SplineSlice activate_spline_params(const std::vector<double>& raw, int bins,
                                   double min_bin = 1e-3);

/// Monotone rational-quadratic interpolation through the slice's knots.
/// Returns (y, dy/dx); x outside [0,1] is clamped (tolerance for boundary
/// noise). S(0)=0 and S(1)=1 exactly.
std::pair<double, double> rq_spline(double x, const SplineSlice& s);

/// Inverse by bisection to 1e-12 interval width.
double rq_spline_inverse(double y, const SplineSlice& s);

// ---- graph block (exposed for tests) ---------------------------------------

/// Directed edge features [u_i - u_j, |u_i - u_j|, s_i, s_j] for each edge of
/// the graph (i = target/receiver, j = source).
std::vector<std::vector<double>> initial_edge_features(const MeshGraph& graph,
                                                       const std::vector<Vec2>& positions,
                                                       const std::vector<double>& node_state);

/// Message passing: e'_e = f([e_e, v_i, v_j]) per edge, then node i sums its
/// incoming e'. `f` maps [E, ce + 2 cv] to [E, c']; pass node_feats with zero
/// columns to drop the v terms.
Tensor gnn_block(const MeshGraph& graph, const Tensor& node_feats, const Tensor& edge_feats,
                 const std::function<Tensor(const Tensor&)>& f);

// ---- deformer forward passes -----------------------------------------------

/// Differentiable forward pass: [n,2] coordinates as a function of the model
/// parameters. For the clip baselines this is the raw (unclipped) xi + d.
/// For m2n-gat, block_positions (if given) receives two snapshots per block:
/// the raw convex attention update, then the boundary-projected positions.
Tensor deform_tensor(const DeformerModel& model, const Mesh& mesh, const InputState& state,
                     std::vector<std::vector<Vec2>>* block_positions = nullptr);

/// Inference wrapper: runs deform_tensor and applies the model's boundary
/// rules (spline: exact hypercube snap; gat: segment clamp; clip baselines:
/// pull outside points to the domain, keep only tangential boundary movement,
/// pin corners).
std::vector<Vec2> deform(const DeformerModel& model, const Mesh& mesh, const InputState& state);

}  // namespace mm
