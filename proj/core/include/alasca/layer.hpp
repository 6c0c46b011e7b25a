#pragma once

#include <span>
#include <string>
#include <vector>

#include "alasca/tensor.hpp"

namespace alasca {

enum class LayerKind : std::uint8_t {
    kLinear,
    kRelu,
    kSoftplus,
    kResidualBlock,  // x + W2 act(W1 x + b1) + b2, in == out
    kBottleneck,     // linear to a narrower width
    kSoftmaxHead,
};

enum class Activation : std::uint8_t { kRelu, kSoftplus };

const char* to_string(LayerKind kind);
const char* to_string(Activation act);
Activation activation_from_string(const std::string& s);

// One network building block. params layout by kind:
//   linear / bottleneck: {W (out x in), b (out)}
//   residual-block:      {W1 (dim x dim), b1, W2 (dim x dim), b2}
//   relu / softplus / softmax-head: none
struct Layer {
    LayerKind kind;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation act = Activation::kRelu;  // residual-block inner activation
    double softmax_scale = 1.0;
    std::vector<Tensor> params;

    static Layer linear(std::size_t in, std::size_t out);
    static Layer relu(std::size_t dim);
    static Layer softplus(std::size_t dim);
    static Layer residual_block(std::size_t dim, Activation act);
    static Layer bottleneck(std::size_t in, std::size_t out);
    static Layer softmax_head(std::size_t dim, double scale = 1.0);

    // He-style fan-in init for weights, zero biases.
    void init(Rng& rng);
    void validate() const;
};

// Records the layer's computation on the tape. Throws ShapeError naming the
// layer when the input width does not match.
NodeId forward_layer(Tape& tape, Layer& layer, NodeId x, std::size_t layer_index);

// Same computation with parameters entering as tape constants: no gradients
// flow to them and the layer stays untouched. Read-only probes (Jacobians,
// evaluation sweeps) use this, which keeps them safe to run in parallel.
NodeId forward_layer_const(Tape& tape, const Layer& layer, NodeId x, std::size_t layer_index);

// Runs an ordered chain, x flowing through every layer.
NodeId forward(Tape& tape, std::vector<Layer>& layers, NodeId x);
NodeId forward_const(Tape& tape, std::span<const Layer* const> layers, NodeId x);

}  // namespace alasca
