#include "alasca/network.hpp"

namespace alasca {

MultiExitNet::MultiExitNet(const NetConfig& cfg) : cfg_(cfg), main_head_(Layer::linear(cfg.width, cfg.classes)) {
    if (cfg.stages < 1) throw ContractError("MultiExitNet: at least one stage required");
    if (cfg.classes < 2) throw ContractError("MultiExitNet: at least two classes required");
    feature_layers_.push_back(Layer::linear(cfg.input_dim, cfg.width));
    feature_layers_.push_back(cfg.activation == Activation::kRelu ? Layer::relu(cfg.width)
                                                                  : Layer::softplus(cfg.width));
    for (std::size_t s = 0; s < cfg.stages; ++s) {
        feature_layers_.push_back(Layer::residual_block(cfg.width, cfg.activation));
        stage_end_.push_back(feature_layers_.size() - 1);
    }
    const std::size_t qb = cfg.bottleneck_width();
    for (std::size_t s = 0; s < cfg.stages; ++s) {
        SubHead h{Layer::bottleneck(cfg.width, qb),
                  cfg.activation == Activation::kRelu ? Layer::relu(qb) : Layer::softplus(qb),
                  Layer::linear(qb, cfg.classes)};
        sub_heads_.push_back(std::move(h));
    }
}

void MultiExitNet::init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& l : feature_layers_) l.init(rng);
    for (auto& h : sub_heads_) {
        h.bottleneck.init(rng);
        h.fc.init(rng);
    }
    main_head_.init(rng);
}

MultiExitNet::Exits MultiExitNet::forward_all(Tape& tape, NodeId x) {
    Exits out;
    NodeId cur = x;
    std::size_t stage = 0;
    for (std::size_t i = 0; i < feature_layers_.size(); ++i) {
        cur = forward_layer(tape, feature_layers_[i], cur, i);
        if (stage < stage_end_.size() && i == stage_end_[stage]) {
            out.features.push_back(cur);
            ++stage;
        }
    }
    for (std::size_t s = 0; s < sub_heads_.size(); ++s) {
        SubHead& h = sub_heads_[s];
        NodeId b = forward_layer(tape, h.bottleneck, out.features[s], 0);
        b = forward_layer(tape, h.act, b, 1);
        out.logits.push_back(forward_layer(tape, h.fc, b, 2));
    }
    out.logits.push_back(forward_layer(tape, main_head_, cur, feature_layers_.size()));
    return out;
}

NodeId MultiExitNet::forward_main(Tape& tape, NodeId x) {
    NodeId cur = x;
    for (std::size_t i = 0; i < feature_layers_.size(); ++i) {
        cur = forward_layer(tape, feature_layers_[i], cur, i);
    }
    return forward_layer(tape, main_head_, cur, feature_layers_.size());
}

NodeId MultiExitNet::forward_main_const(Tape& tape, NodeId x) const {
    NodeId cur = x;
    for (std::size_t i = 0; i < feature_layers_.size(); ++i) {
        cur = forward_layer_const(tape, feature_layers_[i], cur, i);
    }
    return forward_layer_const(tape, main_head_, cur, feature_layers_.size());
}

NodeId MultiExitNet::forward_features_const(Tape& tape, NodeId x, std::size_t stage) const {
    if (stage >= stage_end_.size()) throw ContractError("forward_features: stage out of range");
    NodeId cur = x;
    for (std::size_t i = 0; i <= stage_end_[stage]; ++i) {
        cur = forward_layer_const(tape, feature_layers_[i], cur, i);
    }
    return cur;
}

std::vector<const Layer*> MultiExitNet::feature_chain(std::size_t upto_stage) const {
    if (upto_stage >= stage_end_.size()) throw ContractError("feature_chain: stage out of range");
    std::vector<const Layer*> chain;
    for (std::size_t i = 0; i <= stage_end_[upto_stage]; ++i) chain.push_back(&feature_layers_[i]);
    return chain;
}

std::vector<Tensor*> MultiExitNet::parameters() {
    std::vector<Tensor*> ps;
    for (auto& l : feature_layers_) {
        for (auto& p : l.params) ps.push_back(&p);
    }
    for (auto& h : sub_heads_) {
        for (auto& p : h.bottleneck.params) ps.push_back(&p);
        for (auto& p : h.fc.params) ps.push_back(&p);
    }
    for (auto& p : main_head_.params) ps.push_back(&p);
    return ps;
}

std::vector<const Tensor*> MultiExitNet::parameters() const {
    std::vector<const Tensor*> ps;
    for (auto* p : const_cast<MultiExitNet*>(this)->parameters()) ps.push_back(p);
    return ps;
}

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace alasca
