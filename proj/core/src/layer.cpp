#include "alasca/layer.hpp"

#include <cmath>

namespace alasca {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::kLinear: return "linear";
        case LayerKind::kRelu: return "relu";
        case LayerKind::kSoftplus: return "softplus";
        case LayerKind::kResidualBlock: return "residual-block";
        case LayerKind::kBottleneck: return "bottleneck";
        case LayerKind::kSoftmaxHead: return "softmax-head";
    }
    return "?";
}

const char* to_string(Activation act) {
    return act == Activation::kRelu ? "relu" : "softplus";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::kRelu;
    if (s == "softplus") return Activation::kSoftplus;
    throw ContractError("unknown activation: " + s);
}

Layer Layer::linear(std::size_t in, std::size_t out) {
    Layer l;
    l.kind = LayerKind::kLinear;
    l.in_dim = in;
    l.out_dim = out;
    l.params.push_back(Tensor::zeros({out, in}));
    l.params.push_back(Tensor::zeros({out}));
    return l;
}

Layer Layer::relu(std::size_t dim) {
    Layer l;
    l.kind = LayerKind::kRelu;
    l.in_dim = l.out_dim = dim;
    return l;
}

Layer Layer::softplus(std::size_t dim) {
    Layer l;
    l.kind = LayerKind::kSoftplus;
    l.in_dim = l.out_dim = dim;
    return l;
}

Layer Layer::residual_block(std::size_t dim, Activation act) {
    Layer l;
    l.kind = LayerKind::kResidualBlock;
    l.in_dim = l.out_dim = dim;
    l.act = act;
    l.params.push_back(Tensor::zeros({dim, dim}));
    l.params.push_back(Tensor::zeros({dim}));
    l.params.push_back(Tensor::zeros({dim, dim}));
    l.params.push_back(Tensor::zeros({dim}));
    return l;
}

Layer Layer::bottleneck(std::size_t in, std::size_t out) {
    if (out >= in) throw ContractError("bottleneck: output width must be below input width");
    Layer l = linear(in, out);
    l.kind = LayerKind::kBottleneck;
    return l;
}

Layer Layer::softmax_head(std::size_t dim, double scale) {
    Layer l;
    l.kind = LayerKind::kSoftmaxHead;
    l.in_dim = l.out_dim = dim;
    l.softmax_scale = scale;
    return l;
}

void Layer::init(Rng& rng) {
    // params come in (W, b) pairs; weights get fan-in normal init, biases stay 0.
    for (std::size_t p = 0; p < params.size(); p += 2) {
        Tensor& w = params[p];
        const double fan_in = static_cast<double>(w.shape[1]);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : w.data) v = dist(rng);
    }
}

void Layer::validate() const {
    switch (kind) {
        case LayerKind::kLinear:
        case LayerKind::kBottleneck:
            if (params.size() != 2 || params[0].shape != std::vector<std::size_t>{out_dim, in_dim} ||
                params[1].shape != std::vector<std::size_t>{out_dim}) {
                throw ShapeError(std::string(to_string(kind)) + ": parameter shapes inconsistent");
            }
            break;
        case LayerKind::kResidualBlock:
            if (in_dim != out_dim) throw ShapeError("residual-block: in/out dims must match");
            if (params.size() != 4) throw ShapeError("residual-block: expected 4 parameter tensors");
            break;
        default:
            if (!params.empty()) throw ShapeError(std::string(to_string(kind)) + ": no parameters expected");
            break;
    }
}

namespace {

void check_in_dim(const Tape& tape, const Layer& layer, NodeId x, std::size_t layer_index) {
    const std::size_t got = tape.value(x).size();
    if (got != layer.in_dim) {
        throw ShapeError("layer " + std::to_string(layer_index) + " (" + to_string(layer.kind) +
                         "): expected input dim " + std::to_string(layer.in_dim) + ", got " +
                         std::to_string(got));
    }
}

template <typename BindFn>
NodeId run_layer(Tape& tape, const Layer& layer, NodeId x, BindFn&& bind) {
    switch (layer.kind) {
        case LayerKind::kLinear:
        case LayerKind::kBottleneck: {
            NodeId w = bind(0);
            NodeId b = bind(1);
            return tape.linear(w, b, x);
        }
        case LayerKind::kRelu:
            return tape.relu(x);
        case LayerKind::kSoftplus:
            return tape.softplus(x);
        case LayerKind::kResidualBlock: {
            NodeId w1 = bind(0);
            NodeId b1 = bind(1);
            NodeId w2 = bind(2);
            NodeId b2 = bind(3);
            NodeId h = tape.linear(w1, b1, x);
            h = layer.act == Activation::kRelu ? tape.relu(h) : tape.softplus(h);
            h = tape.linear(w2, b2, h);
            return tape.add(x, h);
        }
        case LayerKind::kSoftmaxHead:
            return tape.softmax(x, layer.softmax_scale);
    }
    throw ContractError("forward_layer: unknown layer kind");
}

}  // namespace

NodeId forward_layer(Tape& tape, Layer& layer, NodeId x, std::size_t layer_index) {
    check_in_dim(tape, layer, x, layer_index);
    return run_layer(tape, layer, x, [&](std::size_t p) { return tape.bind(layer.params[p]); });
}

NodeId forward_layer_const(Tape& tape, const Layer& layer, NodeId x, std::size_t layer_index) {
    check_in_dim(tape, layer, x, layer_index);
    return run_layer(tape, layer, x,
                     [&](std::size_t p) { return tape.constant(layer.params[p].data); });
}

NodeId forward(Tape& tape, std::vector<Layer>& layers, NodeId x) {
    NodeId cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        cur = forward_layer(tape, layers[i], cur, i);
    }
    return cur;
}

NodeId forward_const(Tape& tape, std::span<const Layer* const> layers, NodeId x) {
    NodeId cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        cur = forward_layer_const(tape, *layers[i], cur, i);
    }
    return cur;
}

}  // namespace alasca
