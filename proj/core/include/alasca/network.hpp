#pragma once

#include <vector>

#include "alasca/layer.hpp"

namespace alasca {

struct NetConfig {
    std::size_t input_dim = 20;
    std::size_t classes = 4;
    std::size_t width = 32;        // feature width Q
    std::size_t stages = 2;        // residual blocks; C = stages + 1 classifiers
    std::size_t bottleneck = 0;    // sub-head bottleneck width, 0 -> width/2
    Activation activation = Activation::kRelu;

    std::size_t bottleneck_width() const { return bottleneck > 0 ? bottleneck : width / 2; }
};

// Feature extractor (stem + residual stages) with one sub-classifier per
// stage end (bottleneck + fully connected) and a linear main classifier.
// Classifier logits are ordered q^1..q^{C-1} (sub heads, shallow to deep),
// then q^C (main head).
class MultiExitNet {
  public:
    explicit MultiExitNet(const NetConfig& cfg);

    void init(std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    std::size_t classifier_count() const { return cfg_.stages + 1; }

    struct Exits {
        std::vector<NodeId> features;  // one per stage
        std::vector<NodeId> logits;    // q^1..q^C
    };
    Exits forward_all(Tape& tape, NodeId x);

    // Main path only (stem -> stages -> main head); the plain-CE reference
    // loop uses this.
    NodeId forward_main(Tape& tape, NodeId x);

    // Read-only forward passes (parameters enter as tape constants). Safe to
    // call concurrently with per-thread tapes.
    NodeId forward_main_const(Tape& tape, NodeId x) const;
    NodeId forward_features_const(Tape& tape, NodeId x, std::size_t stage) const;

    // Layers composing the input -> stage feature map, for Jacobian probes.
    std::vector<const Layer*> feature_chain(std::size_t upto_stage) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

  private:
    struct SubHead {
        Layer bottleneck;
        Layer act;
        Layer fc;
    };

    NetConfig cfg_;
    std::vector<Layer> feature_layers_;  // stem linear, stem act, blocks...
    std::vector<std::size_t> stage_end_; // feature_layers_ index of each stage's last layer
    std::vector<SubHead> sub_heads_;
    Layer main_head_;
};

// argmax over logits; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace alasca
