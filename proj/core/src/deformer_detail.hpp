#pragma once

// Shared plumbing between the deformer translation units. Not installed.

#include <string>
#include <vector>

#include "mm/deformers.hpp"
#include "mm/rng.hpp"

namespace mm::detail {

// Gaussian fan-in init for a dense layer stored row-major [in, out].
std::vector<double> dense_init(Rng& rng, int fan_in, size_t count);

// Register a 3-layer MLP prefix.{w1,b1,w2,b2,w3,b3}; the final layer is
// zeroed when `zero_final` (identity-at-init heads).
void add_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out,
             Rng& rng, bool zero_final);

// selu(x W1 + b1) -> selu(.. W2 + b2) -> .. W3 + b3
Tensor mlp_forward(const ParameterStore& store, const std::string& prefix, const Tensor& x);

// Differentiable global embedding I = [E, p] as a rank-1 tensor.
Tensor embed_tensor(const DeformerModel& model, const InputState& state, const DomainSpec& domain);

// Tile a rank-1 embedding into n identical rows.
Tensor tile_rows(const Tensor& v, int n);

// Monotone rational-quadratic transform of x in [0,1] given raw conditioner
// outputs [n, 3K-1]; both directions of the tape are exact.
Tensor rqs_forward(const Tensor& x, const Tensor& raw, int bins, double min_bin);

// Forward passes per architecture (coordinates [n,2] on the tape).
Tensor spline_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state);
Tensor gat_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state,
                   std::vector<std::vector<Vec2>>* block_positions);
Tensor mlp_clip_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state);
Tensor gat_clip_forward(const DeformerModel& model, const Mesh& mesh, const InputState& state);

}  // namespace mm::detail
