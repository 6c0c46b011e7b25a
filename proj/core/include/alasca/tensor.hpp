#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "alasca/common.hpp"

namespace alasca {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

// Dense row-major tensor of 64-bit floats. `grad` is empty until a backward
// pass touches the tensor; once populated it always matches `data` in length.
// `node` links the tensor to the tape it was last bound on (kNoNode if none).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    NodeId node = kNoNode;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor vector(std::vector<double> d);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> d);
    static Tensor scalar(double v);

    std::size_t size() const { return data.size(); }
    bool has_grad() const { return !grad.empty(); }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    void zero_grad();
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Reverse-mode tape over vector-valued nodes. Nodes only reference earlier
// nodes, so creation order is a topological order and backward is a single
// reverse sweep. Node storage is pooled: reset() keeps capacity so a tape can
// be reused batch after batch without reallocating.
//
// Tape policy: backward(root) releases the graph unless retain=true is
// passed; a retained tape supports repeated backward calls from different
// roots (used for row-by-row Jacobians).
class Tape {
  public:
    enum class Op : std::uint8_t {
        kLeaf,         // bound parameter, input, or constant
        kLinear,       // W x + b              parents: W, b, x
        kRelu,         // max(x, 0)            parents: x
        kSoftplus,     // log(1 + e^x)         parents: x
        kAdd,          // x + y (same shape)   parents: x, y
        kSoftmax,      // softmax(k0 * x)      parents: x
        kLogSumExp,    // scalar               parents: x
        kDotConst,     // sum_i c_i x_i        parents: x   (c in payload)
        kPick,         // x[i0]                parents: x
        kSum,          // sum_i x_i            parents: x
        kSquareNormHalf,  // 0.5 * sum_i x_i^2 parents: x
        kPowConst,     // a^k0 (scalar)        parents: a
        kLogScalar,    // log(a) (scalar)      parents: a
        kAffine,       // k0*a + k1*b + k2     parents: a [, b]
        kMeanScalars,  // (sum_i a_i) / n      parents: in extra list
    };

    Tape() = default;

    // Leaves -----------------------------------------------------------
    NodeId input(std::span<const double> data);
    NodeId constant(std::span<const double> data);
    // Binds an external tensor as a leaf. Repeated binds of the same tensor
    // on this tape return the same node, so per-batch parameter gradients
    // accumulate on one leaf. export_grads() adds leaf gradients into the
    // bound tensors' grad buffers.
    NodeId bind(Tensor& t);

    // Ops ---------------------------------------------------------------
    NodeId linear(NodeId w, NodeId b, NodeId x);  // w: {out,in}, b/x: vectors
    NodeId relu(NodeId x);
    NodeId softplus(NodeId x);
    NodeId add(NodeId x, NodeId y);
    NodeId softmax(NodeId x, double scale = 1.0);
    NodeId logsumexp(NodeId x);
    NodeId dot_const(NodeId x, std::span<const double> coeff);
    NodeId pick(NodeId x, std::size_t index);
    NodeId sum(NodeId x);
    NodeId square_norm_half(NodeId x);
    NodeId pow_const(NodeId a, double exponent);
    NodeId log_scalar(NodeId a);
    NodeId affine(NodeId a, NodeId b, double ka, double kb, double k0 = 0.0);
    NodeId affine(NodeId a, double ka, double k0 = 0.0);
    NodeId mean_scalars(std::span<const NodeId> terms);

    // Access -------------------------------------------------------------
    std::span<const double> value(NodeId id) const;
    std::span<const double> grad(NodeId id) const;
    double scalar_value(NodeId id) const;

    // Backward ------------------------------------------------------------
    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse creation
    // order, accumulating gradients into every reachable node. root must be
    // scalar. With retain=false (default) the graph is released afterwards
    // and only export_grads()/grad() reads remain valid until reset().
    void backward(NodeId root, bool retain = false);

    // Adds leaf gradients into the grad buffers of tensors bound via bind().
    void export_grads();

    void reset();
    std::size_t node_count() const { return used_; }

  private:
    struct Node {
        Op op = Op::kLeaf;
        std::array<NodeId, 2> parent{kNoNode, kNoNode};
        NodeId aux_parent = kNoNode;  // third parent (kLinear input)
        double k0 = 0.0, k1 = 0.0, k2 = 0.0;
        std::size_t i0 = 0;           // kPick index
        std::vector<double> value;
        std::vector<double> grad;
        std::vector<double> payload;  // kDotConst coefficients
        std::vector<NodeId> extra;    // kMeanScalars terms
    };

    Node& fresh(Op op, std::size_t value_size);
    NodeId push_leaf(std::span<const double> data);
    void pull(Node& n);
    const Node& node(NodeId id) const;

    std::vector<Node> pool_;
    std::size_t used_ = 0;
    std::unordered_map<const Tensor*, NodeId> bindings_;
    std::vector<Tensor*> bound_;
    bool released_ = false;
};

}  // namespace alasca
