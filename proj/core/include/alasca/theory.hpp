#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "alasca/dataset.hpp"
#include "alasca/network.hpp"

namespace alasca {

// Fixed linear classifier weights W (Q x L, columns W_i) for the convexity
// and unique-minimizer checks on Phi(z) = Omega(W^T z).
struct ClassifierWeights {
    Eigen::MatrixXd W;  // Q x L

    std::size_t feature_dim() const { return static_cast<std::size_t>(W.rows()); }
    std::size_t classes() const { return static_cast<std::size_t>(W.cols()); }

    // Columns form an affine basis of R^Q: rank of [W_2-W_1 | ... | W_L-W_1]
    // equals Q, with singular values below 1e-10 * sigma_max treated as zero.
    bool affine_basis_ok() const;

    static ClassifierWeights random(std::size_t q, std::size_t classes, Rng& rng);
    // Duplicates column `dup_from` into `dup_to`, breaking the affine basis.
    ClassifierWeights with_duplicated_column(std::size_t dup_to, std::size_t dup_from) const;
};

double phi_value(const ClassifierWeights& w, const Eigen::VectorXd& z);

// Closed-form grad: L * sum_i s_i W_i - sum_i W_i with s = softmax(W^T z).
// Exponentials are max-subtracted. At z = 0 the two sums coincide.
Eigen::VectorXd phi_gradient(const ClassifierWeights& w, const Eigen::VectorXd& z);

// Closed-form Hessian: L * (sum_i s_i W_i W_i^T - m m^T), m = sum_i s_i W_i.
// Symmetric PSD by Cauchy-Schwarz.
Eigen::MatrixXd phi_hessian(const ClassifierWeights& w, const Eigen::VectorXd& z);

struct MinimizerReport {
    bool affine_basis = false;
    int trials = 0;
    double grad_norm_at_zero = 0.0;  // inf-norm of phi_gradient at z = 0
    double min_gap = 0.0;            // min over sampled z of Phi(z) - Phi(0)
    bool unique_certified = false;
    // Stacked-difference system (W_i - W_{i+1})^T z = 0: smallest singular
    // value; a strictly positive value certifies z = 0 as the only solution.
    double stacked_system_min_singular = 0.0;
    bool equivalence_ok = false;     // grad(z)=0 <=> differences orthogonal to z, spot-checked
    bool witness_found = false;      // degenerate case: z != 0 with Phi(z) = Phi(0)
    Eigen::VectorXd witness;
    double witness_phi_gap = 0.0;
    double witness_grad_norm = 0.0;
};

// Samples `trials` z with 1e-3 <= ||z|| <= 10 and requires Phi(z) > Phi(0)
// strictly when the affine-basis condition holds; otherwise exhibits a unit
// null-space direction along which Phi is flat.
MinimizerReport unique_minimizer_check(const ClassifierWeights& w, int trials, Rng& rng);

enum class JacobianMode : std::uint8_t { kAutodiff, kFiniteDiff };

// Frobenius norm of d(chain output)/dx. Autodiff assembles the Jacobian one
// backward pass per output coordinate; finite differences use central steps
// of 1e-5 per input coordinate.
double jacobian_frobenius(std::span<const Layer* const> chain, std::span<const double> x,
                          JacobianMode mode = JacobianMode::kAutodiff);
double jacobian_frobenius(const MultiExitNet& net, std::span<const double> x, std::size_t stage,
                          JacobianMode mode = JacobianMode::kAutodiff);

// Rows of d(chain output)/dx via one retained backward pass per coordinate.
std::vector<std::vector<double>> jacobian_rows(std::span<const Layer* const> chain,
                                               std::span<const double> x);

// R(x) = sqrt(sum over stages of ||J^(stage)(x)||_F^2).
double aggregate_R(const MultiExitNet& net, std::span<const double> x,
                   JacobianMode mode = JacobianMode::kAutodiff);

struct LipschitzProbe {
    std::size_t stage = 0;
    double jacobian_norm = 0.0;     // ||J^(stage)(x)||_F
    double aggregate = 0.0;         // R(x)
    double grad_lipschitz_estimate = 0.0;  // max FD ratio over sampled pairs
};

// Empirical gradient-Lipschitz estimate for the stage map h: max over sampled
// pairs and output coordinates of ||grad h_i(x1) - grad h_i(x2)|| / ||x1-x2||.
double estimate_grad_lipschitz(const MultiExitNet& net, std::size_t stage, int pairs,
                               double radius, Rng& rng);
LipschitzProbe probe_lipschitz(const MultiExitNet& net, std::span<const double> x,
                               std::size_t stage, int pairs, Rng& rng);

struct MseDecompReport {
    double max_spread = 0.0;  // max_f c(f) - min_f c(f); identically 0 in exact arithmetic
    double c_mean = 0.0;
    double c_expected = 0.0;  // -a(1-a)^2/(2-a) for y in {-1,+1}
};

// c(f) = (f-(1-a)y)^2 - (1-a)^2 (f-y)^2 - a(2-a) (f - (1-a)y/(2-a))^2 must be
// constant in f; the report measures its spread over f_vals.
MseDecompReport mse_ls_decomposition_check(std::span<const double> f_vals, int y, double alpha);

struct ShrinkagePoint {
    double alpha = 0.0;
    double mean_clean = 0.0;
    double mean_noisy = 0.0;
    double mean_all = 0.0;
};

// Mean final-stage Jacobian norms per smoothing factor over a seeded
// subsample of ds, for nets trained at those factors.
std::vector<ShrinkagePoint> shrinkage_trend(
    std::span<const std::pair<double, const MultiExitNet*>> nets, const NoisyDataset& ds,
    std::size_t stage, std::size_t subsample, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Theory report
// ---------------------------------------------------------------------------

struct TheoryCheck {
    std::string name;
    std::string digest;   // hex FNV-1a of the check's principal inputs
    double statistic = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct TheoryOptions {
    std::uint64_t seed = 1;
    int trials = 1000;       // uniqueness samples per W
    int draws = 100;         // random (W, z) draws for Hessian checks
    double tol_scale = 1.0;  // multiplies every tolerance
    bool expect_degenerate = false;  // corrupt W and expect the witness path
};

std::vector<TheoryCheck> run_theory_suite(const TheoryOptions& opt);
bool all_passed(std::span<const TheoryCheck> checks);
void write_theory_report(std::span<const TheoryCheck> checks, const std::filesystem::path& path);

}  // namespace alasca
