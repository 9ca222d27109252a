#ifndef OODLAB_NETWORK_HPP
#define OODLAB_NETWORK_HPP

#include <cstdint>
#include <vector>

#include "oodlab/numerics.hpp"

namespace oodlab {

enum class HeadKind { logits, embedding };

const char* head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

/// Feedforward architecture: ReLU hidden layers, linear head. The head emits
/// either C class logits or an ED-dimensional embedding.
struct NetworkConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    HeadKind head = HeadKind::logits;
    std::size_t head_dim = 0;

    std::size_t layer_count() const { return hidden.size() + 1; }
    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

/// Intermediate activations of one forward pass: activations[0] is the input
/// batch, activations[l] the post-ReLU output of hidden layer l, and the last
/// entry the linear head output.
struct ForwardCache {
    std::vector<Matrix> activations;
};

/// Per-layer parameter gradients, shaped like the network parameters.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

struct Network {
    NetworkConfig config;
    std::vector<Matrix> weights;  // layer l: out x in
    std::vector<Vector> biases;

    /// Glorot-uniform init: each weight drawn from
    /// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), biases zero.
    static Network init(const NetworkConfig& config, Rng& rng);

    static Network zeros(const NetworkConfig& config);

    Matrix forward(const Matrix& batch) const;
    Matrix forward(const Matrix& batch, ForwardCache& cache) const;
    Vector forward_one(const Vector& x) const;

    std::size_t parameter_count() const;
    /// Parameters packed layer by layer (weights row-major, then bias).
    Vector flatten() const;
    void unflatten(const Vector& params);

    Gradients zero_gradients() const;

    bool operator==(const Network&) const = default;
};

/// Backpropagates output gradients (shaped like the head output batch)
/// through the cached forward pass; returns parameter gradients.
Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& grad_outputs);

/// Epoch-level cosine annealing without restarts: lr_t = lr0/2 (1+cos(pi t/T)),
/// so lr_0 = lr0 and lr_T = 0. Throws if t < 0 or t > T.
double cosine_lr(int t, int total_epochs, double lr0);

struct OptimizerConfig {
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int epochs = 1;
    int batch_size = 128;

    void validate() const;
    bool operator==(const OptimizerConfig&) const = default;
};

/// Momentum buffers, one per parameter tensor.
struct SgdState {
    std::vector<Matrix> w_velocity;
    std::vector<Vector> b_velocity;

    static SgdState zeros_like(const Network& net);
};

/// One momentum-SGD step with L2 weight decay folded into the gradient:
/// v <- momentum * v + (g + weight_decay * w); w <- w - lr * v.
/// Throws std::runtime_error naming the layer if a gradient is non-finite.
void sgd_apply(Network& net, const Gradients& grads, SgdState& state, double lr,
               double momentum, double weight_decay);

}  // namespace oodlab

#endif
