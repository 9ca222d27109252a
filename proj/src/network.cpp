#include "oodlab/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace oodlab {

namespace {

// out[n x rows(W)] = in[n x cols(W)] * W^T + b
Matrix affine(const Matrix& in, const Matrix& w, const Vector& b) {
    Matrix out(in.rows(), w.rows());
    for (std::size_t n = 0; n < in.rows(); ++n) {
        const double* x = in.row(n);
        double* y = out.row(n);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double* wr = w.row(r);
            double acc = b[r];
            for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
            y[r] = acc;
        }
    }
    return out;
}

void relu_inplace(Matrix& m) {
    for (double& v : m.storage()) {
        if (v < 0.0) v = 0.0;
    }
}

}  // namespace

const char* head_kind_name(HeadKind kind) {
    return kind == HeadKind::logits ? "logits" : "embedding";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "logits") return HeadKind::logits;
    if (name == "embedding") return HeadKind::embedding;
    throw std::invalid_argument("unknown head kind: " + name);
}

void NetworkConfig::validate() const {
    if (input_dim < 1) {
        throw std::invalid_argument("network config: input_dim must be >= 1");
    }
    for (std::size_t h : hidden) {
        if (h < 1) throw std::invalid_argument("network config: hidden size must be >= 1");
    }
    if (head_dim < 1) {
        throw std::invalid_argument("network config: head_dim must be >= 1");
    }
}

Network Network::init(const NetworkConfig& config, Rng& rng) {
    config.validate();
    Network net = zeros(config);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        Matrix& w = net.weights[l];
        double bound = std::sqrt(6.0 / static_cast<double>(w.cols() + w.rows()));
        for (double& v : w.storage()) {
            v = bound * (2.0 * rng.next_double() - 1.0);
        }
    }
    return net;
}

Network Network::zeros(const NetworkConfig& config) {
    config.validate();
    Network net;
    net.config = config;
    std::size_t in_dim = config.input_dim;
    for (std::size_t h : config.hidden) {
        net.weights.emplace_back(h, in_dim);
        net.biases.emplace_back(h, 0.0);
        in_dim = h;
    }
    net.weights.emplace_back(config.head_dim, in_dim);
    net.biases.emplace_back(config.head_dim, 0.0);
    return net;
}

Matrix Network::forward(const Matrix& batch) const {
    ForwardCache cache;
    return forward(batch, cache);
}

Matrix Network::forward(const Matrix& batch, ForwardCache& cache) const {
    if (batch.cols() != config.input_dim) {
        throw std::invalid_argument("forward: batch dimension " + std::to_string(batch.cols()) +
                                    " does not match input_dim " +
                                    std::to_string(config.input_dim));
    }
    cache.activations.clear();
    cache.activations.push_back(batch);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Matrix z = affine(cache.activations.back(), weights[l], biases[l]);
        if (l + 1 < weights.size()) relu_inplace(z);  // head stays linear
        cache.activations.push_back(std::move(z));
    }
    return cache.activations.back();
}

Vector Network::forward_one(const Vector& x) const {
    Matrix batch(1, x.size());
    batch.set_row(0, x);
    return forward(batch).row_vector(0);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].storage().size() + biases[l].size();
    }
    return n;
}

Vector Network::flatten() const {
    Vector out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Vector& w = weights[l].storage();
        out.insert(out.end(), w.begin(), w.end());
        out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
    return out;
}

void Network::unflatten(const Vector& params) {
    if (params.size() != parameter_count()) {
        throw std::invalid_argument("unflatten: expected " + std::to_string(parameter_count()) +
                                    " parameters, got " + std::to_string(params.size()));
    }
    std::size_t cursor = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Vector& w = weights[l].storage();
        std::copy(params.begin() + cursor, params.begin() + cursor + w.size(), w.begin());
        cursor += w.size();
        std::copy(params.begin() + cursor, params.begin() + cursor + biases[l].size(),
                  biases[l].begin());
        cursor += biases[l].size();
    }
}

Gradients Network::zero_gradients() const {
    Gradients g;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        g.weights.emplace_back(weights[l].rows(), weights[l].cols());
        g.biases.emplace_back(biases[l].size(), 0.0);
    }
    return g;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& grad_outputs) {
    const std::size_t layers = net.weights.size();
    if (cache.activations.size() != layers + 1) {
        throw std::invalid_argument("backward: cache does not match network depth");
    }
    if (grad_outputs.rows() != cache.activations.back().rows() ||
        grad_outputs.cols() != cache.activations.back().cols()) {
        throw std::invalid_argument("backward: gradient shape does not match head output");
    }

    Gradients grads = net.zero_gradients();
    Matrix delta = grad_outputs;  // dL/dz for the current layer
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& input = cache.activations[l];
        Matrix& gw = grads.weights[l];
        Vector& gb = grads.biases[l];
        for (std::size_t n = 0; n < delta.rows(); ++n) {
            const double* d = delta.row(n);
            const double* x = input.row(n);
            for (std::size_t r = 0; r < gw.rows(); ++r) {
                double dr = d[r];
                gb[r] += dr;
                double* gwr = gw.row(r);
                for (std::size_t c = 0; c < gw.cols(); ++c) gwr[c] += dr * x[c];
            }
        }
        if (l == 0) break;
        // Propagate to the previous layer, masking the ReLU (inactive at 0).
        const Matrix& w = net.weights[l];
        Matrix prev(delta.rows(), w.cols());
        for (std::size_t n = 0; n < delta.rows(); ++n) {
            const double* d = delta.row(n);
            const double* act = input.row(n);
            double* p = prev.row(n);
            for (std::size_t c = 0; c < w.cols(); ++c) {
                if (act[c] <= 0.0) {
                    p[c] = 0.0;
                    continue;
                }
                double acc = 0.0;
                for (std::size_t r = 0; r < w.rows(); ++r) acc += d[r] * w.at(r, c);
                p[c] = acc;
            }
        }
        delta = std::move(prev);
    }
    return grads;
}

double cosine_lr(int t, int total_epochs, double lr0) {
    if (total_epochs < 1) {
        throw std::invalid_argument("cosine_lr: total_epochs must be >= 1");
    }
    if (t < 0 || t > total_epochs) {
        throw std::invalid_argument("cosine_lr: t=" + std::to_string(t) +
                                    " outside [0, " + std::to_string(total_epochs) + "]");
    }
    return 0.5 * lr0 * (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                       static_cast<double>(total_epochs)));
}

void OptimizerConfig::validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("optimizer: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("optimizer: momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
    if (epochs < 1) throw std::invalid_argument("optimizer: epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("optimizer: batch_size must be >= 2");
}

SgdState SgdState::zeros_like(const Network& net) {
    SgdState s;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        s.w_velocity.emplace_back(net.weights[l].rows(), net.weights[l].cols());
        s.b_velocity.emplace_back(net.biases[l].size(), 0.0);
    }
    return s;
}

void sgd_apply(Network& net, const Gradients& grads, SgdState& state, double lr,
               double momentum, double weight_decay) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (!all_finite(grads.weights[l]) || !all_finite(grads.biases[l])) {
            throw std::runtime_error("sgd_apply: non-finite gradient in layer " +
                                     std::to_string(l));
        }
        Vector& w = net.weights[l].storage();
        const Vector& gw = grads.weights[l].storage();
        Vector& vw = state.w_velocity[l].storage();
        for (std::size_t i = 0; i < w.size(); ++i) {
            vw[i] = momentum * vw[i] + (gw[i] + weight_decay * w[i]);
            w[i] -= lr * vw[i];
        }
        Vector& b = net.biases[l];
        const Vector& gb = grads.biases[l];
        Vector& vb = state.b_velocity[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = momentum * vb[i] + (gb[i] + weight_decay * b[i]);
            b[i] -= lr * vb[i];
        }
    }
}

}  // namespace oodlab
