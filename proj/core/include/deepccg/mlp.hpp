#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "deepccg/types.hpp"

// The embedding function f: X -> Z as a small fully connected network with
// ReLU hidden layers and a linear output layer, plus exact reverse-mode
// gradients and a finite-difference verification oracle. All arithmetic is
// in 64-bit floats and all operations are pure and deterministic.

namespace deepccg {

/// Layer weights (row-major, out x in) and biases for dims
/// [d_in, h_1, ..., d_z].
struct MlpParams {
    std::vector<int> dims;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
};

/// Co-shaped with an MlpParams.
struct Gradient {
    std::vector<int> dims;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

/// Per-layer activations for a forward batch; acts[0] is the input batch,
/// acts[l+1] the output of layer l (post-ReLU for hidden layers).
struct ForwardCache {
    std::vector<std::vector<Vec>> acts;
};

/// Weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
MlpParams init_mlp(const std::vector<int>& dims, std::uint64_t seed);

/// Zero gradient co-shaped with params.
Gradient zero_gradient(const MlpParams& params);

std::pair<std::vector<Vec>, ForwardCache> forward(const MlpParams& params,
                                                  const std::vector<Vec>& xs);

/// Embeddings only, for callers that do not need gradients.
std::vector<Vec> embed(const MlpParams& params, const std::vector<Vec>& xs);

/// Exact gradient of sum_i <dLdz[i], z_i> with respect to every parameter;
/// linear in dLdz.
Gradient backward(const MlpParams& params, const ForwardCache& cache,
                  const std::vector<Vec>& dLdz);

/// Ascent update: params + eta * grad. Refuses non-finite gradients.
MlpParams sgd_step(const MlpParams& params, const Gradient& grad, double eta);

Gradient scaled(const Gradient& grad, double factor);
Gradient add(const Gradient& a, const Gradient& b);

/// Central-difference gradient of a scalar function of the parameters;
/// the verification oracle for backward().
Gradient finite_diff_grad(const MlpParams& params,
                          const std::function<double(const MlpParams&)>& scalar_loss_fn, double h);

/// Text checkpoint (hexfloat values); round-trips bit-exactly.
void save_mlp(std::ostream& out, const MlpParams& params);
MlpParams load_mlp(std::istream& in);

}  // namespace deepccg
