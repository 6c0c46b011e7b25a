#include "alasca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <thread>

namespace alasca {

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_product(shape)) {
        throw ShapeError("Tensor: data length does not match shape product");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> d(shape_product(shape), 0.0);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::vector(std::vector<double> d) {
    std::vector<std::size_t> s{d.size()};
    return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

double& Tensor::at(std::size_t r, std::size_t c) {
    return data[r * shape[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
}

void Tensor::zero_grad() {
    grad.assign(data.size(), 0.0);
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

int eval_thread_cap() {
    const char* env = std::getenv("ALASCA_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    int v = std::atoi(env);
    return v < 1 ? 1 : v;
}

void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const int cap = eval_thread_cap();
    if (cap <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cap), n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

// --------------------------------------------------------------------------
// Tape
// --------------------------------------------------------------------------

Tape::Node& Tape::fresh(Op op, std::size_t value_size) {
    if (used_ == pool_.size()) pool_.emplace_back();
    Node& n = pool_[used_++];
    n.op = op;
    n.parent = {kNoNode, kNoNode};
    n.aux_parent = kNoNode;
    n.k0 = n.k1 = n.k2 = 0.0;
    n.i0 = 0;
    n.value.assign(value_size, 0.0);
    n.grad.clear();
    n.payload.clear();
    n.extra.clear();
    return n;
}

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= used_) {
        throw ContractError("Tape: invalid node id");
    }
    return pool_[static_cast<std::size_t>(id)];
}

NodeId Tape::push_leaf(std::span<const double> data) {
    Node& n = fresh(Op::kLeaf, data.size());
    std::copy(data.begin(), data.end(), n.value.begin());
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::input(std::span<const double> data) { return push_leaf(data); }
NodeId Tape::constant(std::span<const double> data) { return push_leaf(data); }

NodeId Tape::bind(Tensor& t) {
    auto it = bindings_.find(&t);
    if (it != bindings_.end()) return it->second;
    NodeId id = push_leaf(t.data);
    bindings_.emplace(&t, id);
    bound_.push_back(&t);
    t.node = id;
    return id;
}

NodeId Tape::linear(NodeId w, NodeId b, NodeId x) {
    const Node& wn = node(w);
    const Node& bn = node(b);
    const Node& xn = node(x);
    const std::size_t in = xn.value.size();
    const std::size_t out = bn.value.size();
    if (wn.value.size() != in * out) {
        throw ShapeError("linear: weight size does not match in*out dims");
    }
    Node& n = fresh(Op::kLinear, out);
    n.parent = {w, b};
    n.aux_parent = x;
    n.i0 = in;
    const double* W = pool_[static_cast<std::size_t>(w)].value.data();
    const double* bv = pool_[static_cast<std::size_t>(b)].value.data();
    const double* xv = pool_[static_cast<std::size_t>(x)].value.data();
    for (std::size_t r = 0; r < out; ++r) {
        double acc = bv[r];
        const double* row = W + r * in;
        for (std::size_t c = 0; c < in; ++c) acc += row[c] * xv[c];
        n.value[r] = acc;
    }
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::relu(NodeId x) {
    const Node& xn = node(x);
    Node& n = fresh(Op::kRelu, xn.value.size());
    n.parent[0] = x;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::softplus(NodeId x) {
    const Node& xn = node(x);
    Node& n = fresh(Op::kSoftplus, xn.value.size());
    n.parent[0] = x;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        n.value[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    }
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::add(NodeId x, NodeId y) {
    const Node& xn = node(x);
    const Node& yn = node(y);
    if (xn.value.size() != yn.value.size()) {
        throw ShapeError("add: operand sizes differ");
    }
    Node& n = fresh(Op::kAdd, xn.value.size());
    n.parent = {x, y};
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    const auto& yv = pool_[static_cast<std::size_t>(y)].value;
    for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] + yv[i];
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::softmax(NodeId x, double scale) {
    if (!(scale > 0.0)) throw ContractError("softmax: scale must be > 0");
    const Node& xn = node(x);
    require_finite(xn.value, "softmax");
    Node& n = fresh(Op::kSoftmax, xn.value.size());
    n.parent[0] = x;
    n.k0 = scale;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    double m = -std::numeric_limits<double>::infinity();
    for (double v : xv) m = std::max(m, scale * v);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        n.value[i] = std::exp(scale * xv[i] - m);
        s += n.value[i];
    }
    for (auto& p : n.value) p /= s;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::logsumexp(NodeId x) {
    const Node& xn = node(x);
    require_finite(xn.value, "logsumexp");
    Node& n = fresh(Op::kLogSumExp, 1);
    n.parent[0] = x;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    double m = -std::numeric_limits<double>::infinity();
    for (double v : xv) m = std::max(m, v);
    double s = 0.0;
    for (double v : xv) s += std::exp(v - m);
    n.value[0] = m + std::log(s);
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::dot_const(NodeId x, std::span<const double> coeff) {
    const Node& xn = node(x);
    if (xn.value.size() != coeff.size()) {
        throw ShapeError("dot_const: coefficient length differs from operand");
    }
    Node& n = fresh(Op::kDotConst, 1);
    n.parent[0] = x;
    n.payload.assign(coeff.begin(), coeff.end());
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += coeff[i] * xv[i];
    n.value[0] = acc;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::pick(NodeId x, std::size_t index) {
    const Node& xn = node(x);
    if (index >= xn.value.size()) throw ContractError("pick: index out of range");
    Node& n = fresh(Op::kPick, 1);
    n.parent[0] = x;
    n.i0 = index;
    n.value[0] = pool_[static_cast<std::size_t>(x)].value[index];
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::sum(NodeId x) {
    node(x);
    Node& n = fresh(Op::kSum, 1);
    n.parent[0] = x;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    double acc = 0.0;
    for (double v : xv) acc += v;
    n.value[0] = acc;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::square_norm_half(NodeId x) {
    node(x);
    Node& n = fresh(Op::kSquareNormHalf, 1);
    n.parent[0] = x;
    const auto& xv = pool_[static_cast<std::size_t>(x)].value;
    double acc = 0.0;
    for (double v : xv) acc += v * v;
    n.value[0] = 0.5 * acc;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::pow_const(NodeId a, double exponent) {
    const Node& an = node(a);
    if (an.value.size() != 1) throw ContractError("pow_const: scalar operand required");
    Node& n = fresh(Op::kPowConst, 1);
    n.parent[0] = a;
    n.k0 = exponent;
    n.value[0] = std::pow(pool_[static_cast<std::size_t>(a)].value[0], exponent);
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::log_scalar(NodeId a) {
    const Node& an = node(a);
    if (an.value.size() != 1) throw ContractError("log_scalar: scalar operand required");
    Node& n = fresh(Op::kLogScalar, 1);
    n.parent[0] = a;
    n.value[0] = std::log(pool_[static_cast<std::size_t>(a)].value[0]);
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::affine(NodeId a, NodeId b, double ka, double kb, double k0) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (an.value.size() != 1 || bn.value.size() != 1) {
        throw ContractError("affine: scalar operands required");
    }
    Node& n = fresh(Op::kAffine, 1);
    n.parent = {a, b};
    n.k0 = ka;
    n.k1 = kb;
    n.k2 = k0;
    n.value[0] = ka * pool_[static_cast<std::size_t>(a)].value[0] +
                 kb * pool_[static_cast<std::size_t>(b)].value[0] + k0;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::affine(NodeId a, double ka, double k0) {
    const Node& an = node(a);
    if (an.value.size() != 1) throw ContractError("affine: scalar operand required");
    Node& n = fresh(Op::kAffine, 1);
    n.parent[0] = a;
    n.k0 = ka;
    n.k2 = k0;
    n.value[0] = ka * pool_[static_cast<std::size_t>(a)].value[0] + k0;
    return static_cast<NodeId>(used_ - 1);
}

NodeId Tape::mean_scalars(std::span<const NodeId> terms) {
    if (terms.empty()) throw ContractError("mean_scalars: empty term list");
    double acc = 0.0;
    for (NodeId t : terms) {
        const Node& tn = node(t);
        if (tn.value.size() != 1) throw ContractError("mean_scalars: scalar terms required");
        acc += tn.value[0];
    }
    Node& n = fresh(Op::kMeanScalars, 1);
    n.extra.assign(terms.begin(), terms.end());
    n.value[0] = acc / static_cast<double>(terms.size());
    return static_cast<NodeId>(used_ - 1);
}

std::span<const double> Tape::value(NodeId id) const { return node(id).value; }

std::span<const double> Tape::grad(NodeId id) const {
    const Node& n = node(id);
    if (n.grad.empty()) throw ContractError("Tape::grad: no backward pass has reached this node");
    return n.grad;
}

double Tape::scalar_value(NodeId id) const {
    const Node& n = node(id);
    if (n.value.size() != 1) throw ContractError("scalar_value: node is not scalar");
    return n.value[0];
}

void Tape::pull(Node& n) {
    const auto& g = n.grad;
    auto pgrad = [&](NodeId id) -> std::vector<double>& {
        Node& p = pool_[static_cast<std::size_t>(id)];
        if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
        return p.grad;
    };
    switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kLinear: {
            const std::size_t in = n.i0;
            const std::size_t out = n.value.size();
            auto& gw = pgrad(n.parent[0]);
            auto& gb = pgrad(n.parent[1]);
            auto& gx = pgrad(n.aux_parent);
            const auto& W = pool_[static_cast<std::size_t>(n.parent[0])].value;
            const auto& xv = pool_[static_cast<std::size_t>(n.aux_parent)].value;
            for (std::size_t r = 0; r < out; ++r) {
                const double gr = g[r];
                gb[r] += gr;
                double* gwrow = gw.data() + r * in;
                const double* wrow = W.data() + r * in;
                for (std::size_t c = 0; c < in; ++c) {
                    gwrow[c] += gr * xv[c];
                    gx[c] += gr * wrow[c];
                }
            }
            break;
        }
        case Op::kRelu: {
            auto& gx = pgrad(n.parent[0]);
            const auto& xv = pool_[static_cast<std::size_t>(n.parent[0])].value;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xv[i] > 0.0) gx[i] += g[i];
            }
            break;
        }
        case Op::kSoftplus: {
            auto& gx = pgrad(n.parent[0]);
            const auto& xv = pool_[static_cast<std::size_t>(n.parent[0])].value;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] / (1.0 + std::exp(-xv[i]));
            }
            break;
        }
        case Op::kAdd: {
            auto& gx = pgrad(n.parent[0]);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            auto& gy = pgrad(n.parent[1]);
            for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i];
            break;
        }
        case Op::kSoftmax: {
            auto& gx = pgrad(n.parent[0]);
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += n.k0 * n.value[i] * (g[i] - dot);
            }
            break;
        }
        case Op::kLogSumExp: {
            auto& gx = pgrad(n.parent[0]);
            const auto& xv = pool_[static_cast<std::size_t>(n.parent[0])].value;
            const double lse = n.value[0];
            for (std::size_t i = 0; i < xv.size(); ++i) {
                gx[i] += g[0] * std::exp(xv[i] - lse);
            }
            break;
        }
        case Op::kDotConst: {
            auto& gx = pgrad(n.parent[0]);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * n.payload[i];
            break;
        }
        case Op::kPick: {
            auto& gx = pgrad(n.parent[0]);
            gx[n.i0] += g[0];
            break;
        }
        case Op::kSum: {
            auto& gx = pgrad(n.parent[0]);
            for (auto& v : gx) v += g[0];
            break;
        }
        case Op::kSquareNormHalf: {
            auto& gx = pgrad(n.parent[0]);
            const auto& xv = pool_[static_cast<std::size_t>(n.parent[0])].value;
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * xv[i];
            break;
        }
        case Op::kPowConst: {
            auto& ga = pgrad(n.parent[0]);
            const double a = pool_[static_cast<std::size_t>(n.parent[0])].value[0];
            ga[0] += g[0] * n.k0 * std::pow(a, n.k0 - 1.0);
            break;
        }
        case Op::kLogScalar: {
            auto& ga = pgrad(n.parent[0]);
            ga[0] += g[0] / pool_[static_cast<std::size_t>(n.parent[0])].value[0];
            break;
        }
        case Op::kAffine: {
            pgrad(n.parent[0])[0] += g[0] * n.k0;
            if (n.parent[1] != kNoNode) pgrad(n.parent[1])[0] += g[0] * n.k1;
            break;
        }
        case Op::kMeanScalars: {
            const double share = g[0] / static_cast<double>(n.extra.size());
            for (NodeId t : n.extra) pgrad(t)[0] += share;
            break;
        }
    }
}

void Tape::backward(NodeId root, bool retain) {
    if (released_) throw ContractError("Tape::backward: tape was released; use retain=true");
    const Node& rn = node(root);
    if (rn.value.size() != 1) throw ContractError("backward: loss must be scalar");
    if (!std::isfinite(rn.value[0])) throw NumericError("backward: loss is not finite");
    for (std::size_t i = 0; i < used_; ++i) {
        if (!pool_[i].grad.empty()) {
            std::fill(pool_[i].grad.begin(), pool_[i].grad.end(), 0.0);
        }
    }
    Node& r = pool_[static_cast<std::size_t>(root)];
    if (r.grad.empty()) r.grad.assign(1, 0.0);
    r.grad[0] = 1.0;
    for (std::size_t i = static_cast<std::size_t>(root) + 1; i-- > 0;) {
        Node& n = pool_[i];
        if (!n.grad.empty()) pull(n);
    }
    if (!retain) released_ = true;
}

void Tape::export_grads() {
    for (Tensor* t : bound_) {
        const Node& n = pool_[static_cast<std::size_t>(bindings_.at(t))];
        if (n.grad.empty()) continue;
        if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
        for (std::size_t i = 0; i < n.grad.size(); ++i) t->grad[i] += n.grad[i];
    }
}

void Tape::reset() {
    used_ = 0;
    bindings_.clear();
    bound_.clear();
    released_ = false;
}

}  // namespace alasca
