#pragma once

#include <span>
#include <string>
#include <vector>

#include "alasca/tensor.hpp"

namespace alasca {

// ---------------------------------------------------------------------------
// Plain (tape-free) numerics. These double as the independent evaluation
// route in tests that cross-check the tape builders below.
// ---------------------------------------------------------------------------

double logsumexp(std::span<const double> v);
std::vector<double> softmax(std::span<const double> v, double scale = 1.0);

// -sum_i t_i log softmax(f)_i for a nonnegative weight vector t. t does not
// have to sum to 1 (the sub-classifier target gamma*e + (1-gamma)*1 does not).
double cross_entropy(std::span<const double> logits, std::span<const double> target);

// Omega(f) = L*logsumexp(f) - sum_i f_i. Minimum L*log L at equal logits.
double omega(std::span<const double> logits);

// Closed-form d Omega / d f = L*softmax(f) - 1.
std::vector<double> omega_gradient(std::span<const double> logits);

// ---------------------------------------------------------------------------
// Smoothing targets
// ---------------------------------------------------------------------------

enum class SmoothingConvention : std::uint8_t {
    kNormalized,    // (1-a)e_y + (a/L)1, sums to 1
    kUnnormalized,  // (1-a)e_y + a*1,    sums to (1-a) + a*L
};

struct SmoothingSpec {
    double alpha = 0.0;
    SmoothingConvention convention = SmoothingConvention::kNormalized;
    std::size_t num_classes = 2;
};

std::vector<double> smooth_target(std::size_t y, const SmoothingSpec& spec);

// CE(f, normalized smooth target) - (1-a)*[CE(f, e_y) + a/((1-a)L) * Omega(f)].
// Identically zero; exposed so the cancellation can be measured.
double ls_decomposition_residual(std::span<const double> logits, std::size_t y, double alpha);

// Same for the unnormalized target, whose exact decomposition is
// CE(f, t) = (1-a)*CE(f, e_y) + a*Omega(f).
double ls_decomposition_residual_unnormalized(std::span<const double> logits, std::size_t y,
                                              double alpha);

// beta * CE(f, e_y) + (1-beta) * Omega(f) with beta = softmax(f)_y held constant.
double als_loss(std::span<const double> logits, std::size_t y);

// ---------------------------------------------------------------------------
// Tape builders (differentiable versions used in training)
// ---------------------------------------------------------------------------

NodeId cross_entropy_node(Tape& tape, NodeId logits, std::span<const double> target);
NodeId cross_entropy_node(Tape& tape, NodeId logits, std::size_t y);
NodeId omega_node(Tape& tape, NodeId logits);
// beta is computed from the logits' current values and enters as a constant.
NodeId als_loss_node(Tape& tape, NodeId logits, std::size_t y);

// ---------------------------------------------------------------------------
// Pluggable main-classifier losses
// ---------------------------------------------------------------------------

enum class LnlKind : std::uint8_t { kCe, kGce, kSce, kSmallLoss };

struct LnlSpec {
    LnlKind kind = LnlKind::kCe;
    double gce_q = 0.7;
    double sce_w1 = 0.1;
    double sce_w2 = 1.0;
    double sce_clamp = 4.0;     // RCE uses log(0) := -sce_clamp
    double keep_fraction = 1.0; // small-loss: fraction of lowest-CE instances kept
};

const char* to_string(LnlKind kind);
LnlKind lnl_kind_from_string(const std::string& s);

// Per-instance main loss. Small-loss selection is a batch-level construct and
// is handled by the trainer masking these per-instance CE nodes.
NodeId lnl_loss_node(Tape& tape, const LnlSpec& spec, NodeId logits, std::size_t y);

// Plain evaluation of the same losses (for ranking and tests).
double lnl_loss(const LnlSpec& spec, std::span<const double> logits, std::size_t y);

}  // namespace alasca
