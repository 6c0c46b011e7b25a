#include "alasca/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace alasca {

double logsumexp(std::span<const double> v) {
    require_finite(v, "logsumexp");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> v, double scale) {
    if (!(scale > 0.0)) throw ContractError("softmax: scale must be > 0");
    require_finite(v, "softmax");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, scale * x);
    std::vector<double> p(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        p[i] = std::exp(scale * v[i] - m);
        s += p[i];
    }
    for (auto& x : p) x /= s;
    return p;
}

double cross_entropy(std::span<const double> logits, std::span<const double> target) {
    if (logits.size() != target.size()) throw ShapeError("cross_entropy: size mismatch");
    require_finite(logits, "cross_entropy");
    double mass = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] < 0.0) throw ContractError("cross_entropy: negative target entry");
        mass += target[i];
        dot += target[i] * logits[i];
    }
    if (mass == 0.0) return 0.0;
    return mass * logsumexp(logits) - dot;
}

double omega(std::span<const double> logits) {
    require_finite(logits, "omega");
    const double lse = logsumexp(logits);
    double s = 0.0;
    for (double x : logits) s += x;
    return static_cast<double>(logits.size()) * lse - s;
}

std::vector<double> omega_gradient(std::span<const double> logits) {
    std::vector<double> g = softmax(logits);
    const double L = static_cast<double>(logits.size());
    for (auto& x : g) x = L * x - 1.0;
    return g;
}

std::vector<double> smooth_target(std::size_t y, const SmoothingSpec& spec) {
    if (spec.num_classes < 2) throw ContractError("smooth_target: num_classes must be >= 2");
    if (y >= spec.num_classes) throw ContractError("smooth_target: label out of range");
    if (spec.alpha < 0.0 || spec.alpha > 1.0) throw ContractError("smooth_target: alpha outside [0,1]");
    const double off = spec.convention == SmoothingConvention::kNormalized
                           ? spec.alpha / static_cast<double>(spec.num_classes)
                           : spec.alpha;
    std::vector<double> t(spec.num_classes, off);
    t[y] = (1.0 - spec.alpha) + off;
    return t;
}

double ls_decomposition_residual(std::span<const double> logits, std::size_t y, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ContractError("ls_decomposition_residual: alpha must lie strictly in (0,1)");
    }
    const std::size_t L = logits.size();
    SmoothingSpec spec{alpha, SmoothingConvention::kNormalized, L};
    const std::vector<double> smoothed = smooth_target(y, spec);
    std::vector<double> onehot(L, 0.0);
    onehot[y] = 1.0;
    const double lhs = cross_entropy(logits, smoothed);
    const double rhs = (1.0 - alpha) * (cross_entropy(logits, onehot) +
                                        alpha / ((1.0 - alpha) * static_cast<double>(L)) * omega(logits));
    return lhs - rhs;
}

double ls_decomposition_residual_unnormalized(std::span<const double> logits, std::size_t y,
                                              double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ContractError("ls_decomposition_residual: alpha must lie strictly in (0,1)");
    }
    const std::size_t L = logits.size();
    SmoothingSpec spec{alpha, SmoothingConvention::kUnnormalized, L};
    const std::vector<double> smoothed = smooth_target(y, spec);
    std::vector<double> onehot(L, 0.0);
    onehot[y] = 1.0;
    const double lhs = cross_entropy(logits, smoothed);
    const double rhs = (1.0 - alpha) * cross_entropy(logits, onehot) + alpha * omega(logits);
    return lhs - rhs;
}

double als_loss(std::span<const double> logits, std::size_t y) {
    if (y >= logits.size()) throw ContractError("als_loss: label out of range");
    const double beta = softmax(logits)[y];
    std::vector<double> onehot(logits.size(), 0.0);
    onehot[y] = 1.0;
    return beta * cross_entropy(logits, onehot) + (1.0 - beta) * omega(logits);
}

// ---------------------------------------------------------------------------
// Tape builders
// ---------------------------------------------------------------------------

NodeId cross_entropy_node(Tape& tape, NodeId logits, std::span<const double> target) {
    double mass = 0.0;
    for (double t : target) {
        if (t < 0.0) throw ContractError("cross_entropy: negative target entry");
        mass += t;
    }
    NodeId lse = tape.logsumexp(logits);
    NodeId dot = tape.dot_const(logits, target);
    return tape.affine(lse, dot, mass, -1.0);
}

NodeId cross_entropy_node(Tape& tape, NodeId logits, std::size_t y) {
    std::vector<double> onehot(tape.value(logits).size(), 0.0);
    if (y >= onehot.size()) throw ContractError("cross_entropy: label out of range");
    onehot[y] = 1.0;
    return cross_entropy_node(tape, logits, onehot);
}

NodeId omega_node(Tape& tape, NodeId logits) {
    const double L = static_cast<double>(tape.value(logits).size());
    NodeId lse = tape.logsumexp(logits);
    NodeId s = tape.sum(logits);
    return tape.affine(lse, s, L, -1.0);
}

NodeId als_loss_node(Tape& tape, NodeId logits, std::size_t y) {
    auto vals = tape.value(logits);
    if (y >= vals.size()) throw ContractError("als_loss: label out of range");
    const double beta = softmax(vals)[y];  // detached
    NodeId ce = cross_entropy_node(tape, logits, y);
    NodeId om = omega_node(tape, logits);
    return tape.affine(ce, om, beta, 1.0 - beta);
}

const char* to_string(LnlKind kind) {
    switch (kind) {
        case LnlKind::kCe: return "ce";
        case LnlKind::kGce: return "gce";
        case LnlKind::kSce: return "sce";
        case LnlKind::kSmallLoss: return "small-loss";
    }
    return "?";
}

LnlKind lnl_kind_from_string(const std::string& s) {
    if (s == "ce") return LnlKind::kCe;
    if (s == "gce") return LnlKind::kGce;
    if (s == "sce") return LnlKind::kSce;
    if (s == "small-loss") return LnlKind::kSmallLoss;
    throw ContractError("unknown lnl loss kind: " + s);
}

NodeId lnl_loss_node(Tape& tape, const LnlSpec& spec, NodeId logits, std::size_t y) {
    switch (spec.kind) {
        case LnlKind::kCe:
        case LnlKind::kSmallLoss:
            return cross_entropy_node(tape, logits, y);
        case LnlKind::kGce: {
            if (!(spec.gce_q > 0.0)) throw ContractError("gce: q must be > 0");
            NodeId p = tape.softmax(logits);
            NodeId py = tape.pick(p, y);
            NodeId pq = tape.pow_const(py, spec.gce_q);
            return tape.affine(pq, -1.0 / spec.gce_q, 1.0 / spec.gce_q);
        }
        case LnlKind::kSce: {
            NodeId ce = cross_entropy_node(tape, logits, y);
            NodeId p = tape.softmax(logits);
            NodeId py = tape.pick(p, y);
            // RCE with one-hot target reduces to clamp * (1 - p_y).
            return tape.affine(ce, py, spec.sce_w1, -spec.sce_w2 * spec.sce_clamp,
                               spec.sce_w2 * spec.sce_clamp);
        }
    }
    throw ContractError("lnl_loss_node: unknown kind");
}

double lnl_loss(const LnlSpec& spec, std::span<const double> logits, std::size_t y) {
    if (y >= logits.size()) throw ContractError("lnl_loss: label out of range");
    std::vector<double> onehot(logits.size(), 0.0);
    onehot[y] = 1.0;
    switch (spec.kind) {
        case LnlKind::kCe:
        case LnlKind::kSmallLoss:
            return cross_entropy(logits, onehot);
        case LnlKind::kGce: {
            const double py = softmax(logits)[y];
            return (1.0 - std::pow(py, spec.gce_q)) / spec.gce_q;
        }
        case LnlKind::kSce: {
            const double py = softmax(logits)[y];
            return spec.sce_w1 * cross_entropy(logits, onehot) +
                   spec.sce_w2 * spec.sce_clamp * (1.0 - py);
        }
    }
    throw ContractError("lnl_loss: unknown kind");
}

}  // namespace alasca
