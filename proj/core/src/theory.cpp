#include "alasca/theory.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "alasca/losses.hpp"
#include "alasca/metrics.hpp"

namespace alasca {

namespace {

constexpr double kRankTol = 1e-10;

Eigen::VectorXd class_softmax(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    Eigen::VectorXd logits = w.W.transpose() * z;
    const double m = logits.maxCoeff();
    Eigen::VectorXd s = (logits.array() - m).exp();
    return s / s.sum();
}

Eigen::MatrixXd stacked_differences(const ClassifierWeights& w) {
    // Rows (W_i - W_{i+1})^T, i = 1..L-1; the proof's square system when L = Q+1.
    const auto L = w.W.cols();
    Eigen::MatrixXd m(L - 1, w.W.rows());
    for (Eigen::Index i = 0; i + 1 < L; ++i) {
        m.row(i) = (w.W.col(i) - w.W.col(i + 1)).transpose();
    }
    return m;
}

std::uint64_t digest_matrix(const Eigen::MatrixXd& m, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
}

}  // namespace

bool ClassifierWeights::affine_basis_ok() const {
    const auto q = W.rows();
    const auto L = W.cols();
    if (L < 2) return false;
    Eigen::MatrixXd diffs(q, L - 1);
    for (Eigen::Index i = 1; i < L; ++i) diffs.col(i - 1) = W.col(i) - W.col(0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(diffs);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return false;
    const double cutoff = kRankTol * sv(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) ++rank;
    }
    return rank == q;
}

ClassifierWeights ClassifierWeights::random(std::size_t q, std::size_t classes, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd W(q, classes);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = unit(rng);
    return ClassifierWeights{std::move(W)};
}

ClassifierWeights ClassifierWeights::with_duplicated_column(std::size_t dup_to,
                                                            std::size_t dup_from) const {
    ClassifierWeights out{W};
    out.W.col(static_cast<Eigen::Index>(dup_to)) = W.col(static_cast<Eigen::Index>(dup_from));
    return out;
}

double phi_value(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    Eigen::VectorXd logits = w.W.transpose() * z;
    return omega(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

Eigen::VectorXd phi_gradient(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    if (!z.allFinite() || !w.W.allFinite()) throw NumericError("phi_gradient: non-finite input");
    const double L = static_cast<double>(w.W.cols());
    const Eigen::VectorXd s = class_softmax(w, z);
    return w.W * (L * s - Eigen::VectorXd::Ones(w.W.cols()));
}

Eigen::MatrixXd phi_hessian(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    if (!z.allFinite() || !w.W.allFinite()) throw NumericError("phi_hessian: non-finite input");
    const double L = static_cast<double>(w.W.cols());
    const Eigen::VectorXd s = class_softmax(w, z);
    const Eigen::VectorXd m = w.W * s;
    Eigen::MatrixXd h = w.W * s.asDiagonal() * w.W.transpose() - m * m.transpose();
    return L * h;
}

MinimizerReport unique_minimizer_check(const ClassifierWeights& w, int trials, Rng& rng) {
    MinimizerReport rep;
    rep.affine_basis = w.affine_basis_ok();
    rep.trials = trials;
    const auto q = w.W.rows();
    rep.grad_norm_at_zero =
        phi_gradient(w, Eigen::VectorXd::Zero(q)).lpNorm<Eigen::Infinity>();

    const Eigen::MatrixXd stacked = stacked_differences(w);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
    rep.stacked_system_min_singular = svd.singularValues().minCoeff();

    const double phi0 = phi_value(w, Eigen::VectorXd::Zero(q));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> logr(std::log(1e-3), std::log(10.0));

    if (rep.affine_basis) {
        double min_gap = std::numeric_limits<double>::infinity();
        for (int t = 0; t < trials; ++t) {
            Eigen::VectorXd z(q);
            for (Eigen::Index i = 0; i < q; ++i) z(i) = unit(rng);
            z *= std::exp(logr(rng)) / z.norm();
            min_gap = std::min(min_gap, phi_value(w, z) - phi0);
        }
        rep.min_gap = min_gap;

        // Proof equivalence: grad Phi(z) = 0 <=> <W_i - W_1, z> = 0 for all i.
        bool ok = rep.grad_norm_at_zero < 1e-12;
        for (int t = 0; t < 32 && ok; ++t) {
            Eigen::VectorXd z(q);
            for (Eigen::Index i = 0; i < q; ++i) z(i) = unit(rng);
            z.normalize();
            const bool diffs_zero = (stacked * z).lpNorm<Eigen::Infinity>() < 1e-10;
            const bool grad_zero = phi_gradient(w, z).lpNorm<Eigen::Infinity>() < 1e-10;
            ok = diffs_zero == grad_zero;
        }
        rep.equivalence_ok = ok;
        rep.unique_certified = rep.min_gap > 0.0 &&
                               rep.stacked_system_min_singular > kRankTol &&
                               rep.equivalence_ok;
    } else {
        // Null direction of the difference system: Phi is flat along it.
        const Eigen::MatrixXd& v = svd.matrixV();
        Eigen::VectorXd dir = v.col(v.cols() - 1);
        dir.normalize();
        rep.witness = dir;
        rep.witness_phi_gap = std::abs(phi_value(w, dir) - phi0);
        rep.witness_grad_norm = phi_gradient(w, dir).lpNorm<Eigen::Infinity>();
        rep.witness_found = rep.witness_phi_gap < 1e-10 && rep.witness_grad_norm < 1e-10;
        rep.equivalence_ok = rep.witness_found;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Jacobians
// ---------------------------------------------------------------------------

namespace {

std::vector<double> chain_values(std::span<const Layer* const> chain, std::span<const double> x) {
    Tape tape;
    NodeId out = forward_const(tape, chain, tape.input(x));
    auto v = tape.value(out);
    return {v.begin(), v.end()};
}

}  // namespace

std::vector<std::vector<double>> jacobian_rows(std::span<const Layer* const> chain,
                                               std::span<const double> x) {
    Tape tape;
    const NodeId xid = tape.input(x);
    const NodeId out = forward_const(tape, chain, xid);
    const std::size_t rows = tape.value(out).size();
    std::vector<NodeId> roots;
    roots.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) roots.push_back(tape.pick(out, r));
    std::vector<std::vector<double>> jac(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        tape.backward(roots[r], /*retain=*/true);
        auto g = tape.grad(xid);
        jac[r].assign(g.begin(), g.end());
    }
    return jac;
}

double jacobian_frobenius(std::span<const Layer* const> chain, std::span<const double> x,
                          JacobianMode mode) {
    double ss = 0.0;
    if (mode == JacobianMode::kAutodiff) {
        for (const auto& row : jacobian_rows(chain, x)) {
            for (double v : row) ss += v * v;
        }
    } else {
        constexpr double h = 1e-5;
        std::vector<double> xp(x.begin(), x.end());
        for (std::size_t k = 0; k < x.size(); ++k) {
            xp[k] = x[k] + h;
            const std::vector<double> fp = chain_values(chain, xp);
            xp[k] = x[k] - h;
            const std::vector<double> fm = chain_values(chain, xp);
            xp[k] = x[k];
            for (std::size_t r = 0; r < fp.size(); ++r) {
                const double d = (fp[r] - fm[r]) / (2.0 * h);
                ss += d * d;
            }
        }
    }
    return std::sqrt(ss);
}

double jacobian_frobenius(const MultiExitNet& net, std::span<const double> x, std::size_t stage,
                          JacobianMode mode) {
    const auto chain = net.feature_chain(stage);
    return jacobian_frobenius(std::span<const Layer* const>(chain), x, mode);
}

double aggregate_R(const MultiExitNet& net, std::span<const double> x, JacobianMode mode) {
    double ss = 0.0;
    for (std::size_t s = 0; s < net.config().stages; ++s) {
        const double j = jacobian_frobenius(net, x, s, mode);
        ss += j * j;
    }
    return std::sqrt(ss);
}

double estimate_grad_lipschitz(const MultiExitNet& net, std::size_t stage, int pairs,
                               double radius, Rng& rng) {
    const auto chain = net.feature_chain(stage);
    const std::size_t dim = net.config().input_dim;
    std::normal_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int p = 0; p < pairs; ++p) {
        std::vector<double> x1(dim), x2(dim);
        for (auto& v : x1) v = radius * unit(rng);
        for (auto& v : x2) v = radius * unit(rng);
        double dist = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = x1[k] - x2[k];
            dist += d * d;
        }
        dist = std::sqrt(dist);
        if (dist < 1e-9) continue;
        const auto j1 = jacobian_rows(std::span<const Layer* const>(chain), x1);
        const auto j2 = jacobian_rows(std::span<const Layer* const>(chain), x2);
        for (std::size_t r = 0; r < j1.size(); ++r) {
            double dd = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = j1[r][k] - j2[r][k];
                dd += d * d;
            }
            worst = std::max(worst, std::sqrt(dd) / dist);
        }
    }
    return worst;
}

LipschitzProbe probe_lipschitz(const MultiExitNet& net, std::span<const double> x,
                               std::size_t stage, int pairs, Rng& rng) {
    LipschitzProbe p;
    p.stage = stage;
    p.jacobian_norm = jacobian_frobenius(net, x, stage);
    p.aggregate = aggregate_R(net, x);
    p.grad_lipschitz_estimate = estimate_grad_lipschitz(net, stage, pairs, 1.0, rng);
    return p;
}

MseDecompReport mse_ls_decomposition_check(std::span<const double> f_vals, int y, double alpha) {
    if (y != 1 && y != -1) throw ContractError("mse_ls_decomposition_check: y must be +-1");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ContractError("mse_ls_decomposition_check: alpha must lie in (0,1)");
    }
    const double yb = (1.0 - alpha) * y;  // smoothed binary label
    MseDecompReport rep;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double acc = 0.0;
    for (double f : f_vals) {
        const double lhs = (f - yb) * (f - yb);
        const double c = lhs - (1.0 - alpha) * (1.0 - alpha) * (f - y) * (f - y) -
                         alpha * (2.0 - alpha) * (f - yb / (2.0 - alpha)) * (f - yb / (2.0 - alpha));
        lo = std::min(lo, c);
        hi = std::max(hi, c);
        acc += c;
    }
    rep.max_spread = f_vals.empty() ? 0.0 : hi - lo;
    rep.c_mean = f_vals.empty() ? 0.0 : acc / static_cast<double>(f_vals.size());
    rep.c_expected = -alpha * (1.0 - alpha) * (1.0 - alpha) / (2.0 - alpha);
    return rep;
}

std::vector<ShrinkagePoint> shrinkage_trend(
    std::span<const std::pair<double, const MultiExitNet*>> nets, const NoisyDataset& ds,
    std::size_t stage, std::size_t subsample, std::uint64_t seed) {
    std::vector<ShrinkagePoint> out;
    out.reserve(nets.size());
    for (const auto& [alpha, net] : nets) {
        const GroupJacobianStats stats = group_jacobian_gap(*net, ds, stage, subsample, seed);
        out.push_back({alpha, stats.mean_clean, stats.mean_noisy, stats.mean_all});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Theory suite
// ---------------------------------------------------------------------------

namespace {

struct CheckBuilder {
    std::vector<TheoryCheck> checks;
    double tol_scale = 1.0;

    void leq(std::string name, std::uint64_t digest, double statistic, double tolerance) {
        const double tol = tolerance * tol_scale;
        checks.push_back({std::move(name), hex64(digest), statistic, tol, statistic <= tol});
    }
    void positive(std::string name, std::uint64_t digest, double statistic) {
        checks.push_back({std::move(name), hex64(digest), statistic, 0.0, statistic > 0.0});
    }
    void truth(std::string name, std::uint64_t digest, bool ok) {
        checks.push_back({std::move(name), hex64(digest), ok ? 1.0 : 0.0, 1.0, ok});
    }
};

double fd_gradient_error(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    constexpr double h = 1e-5;
    const Eigen::VectorXd g = phi_gradient(w, z);
    double worst = 0.0;
    Eigen::VectorXd zp = z;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        zp(k) = z(k) + h;
        const double fp = phi_value(w, zp);
        zp(k) = z(k) - h;
        const double fm = phi_value(w, zp);
        zp(k) = z(k);
        worst = std::max(worst, std::abs((fp - fm) / (2.0 * h) - g(k)));
    }
    return worst;
}

double fd_hessian_error(const ClassifierWeights& w, const Eigen::VectorXd& z) {
    constexpr double h = 1e-4;
    const Eigen::MatrixXd hess = phi_hessian(w, z);
    double worst = 0.0;
    Eigen::VectorXd zp = z;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            zp = z;
            zp(i) += h;
            zp(j) += h;
            const double fpp = phi_value(w, zp);
            zp = z;
            zp(i) += h;
            zp(j) -= h;
            const double fpm = phi_value(w, zp);
            zp = z;
            zp(i) -= h;
            zp(j) += h;
            const double fmp = phi_value(w, zp);
            zp = z;
            zp(i) -= h;
            zp(j) -= h;
            const double fmm = phi_value(w, zp);
            const double fd = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            worst = std::max(worst, std::abs(fd - hess(i, j)));
        }
    }
    return worst;
}

}  // namespace

std::vector<TheoryCheck> run_theory_suite(const TheoryOptions& opt) {
    CheckBuilder b;
    b.tol_scale = opt.tol_scale;
    Rng rng(opt.seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    if (opt.expect_degenerate) {
        // Designed degenerate path: duplicated columns break the affine basis
        // and a flat direction must be exhibited.
        ClassifierWeights w = ClassifierWeights::random(4, 5, rng).with_duplicated_column(2, 1);
        const std::uint64_t dig = digest_matrix(w.W);
        MinimizerReport rep = unique_minimizer_check(w, opt.trials, rng);
        b.truth("degenerate.rank_deficiency_detected", dig, !rep.affine_basis);
        b.truth("degenerate.witness_found", dig, rep.witness_found);
        b.leq("degenerate.witness_phi_gap", dig, rep.witness_phi_gap, 1e-10);
        b.leq("degenerate.witness_grad_norm", dig, rep.witness_grad_norm, 1e-10);
        return std::move(b.checks);
    }

    // Lemma 1: Hessian symmetric and PSD over random (W, z), Q in 2..8, L = Q+1.
    {
        double worst_asym = 0.0, worst_negeig = -std::numeric_limits<double>::infinity();
        double worst_grad_fd = 0.0, worst_hess_fd = 0.0;
        std::uint64_t dig = 0xcbf29ce484222325ull;
        for (int d = 0; d < opt.draws; ++d) {
            const std::size_t q = 2 + static_cast<std::size_t>(d % 7);
            ClassifierWeights w = ClassifierWeights::random(q, q + 1, rng);
            Eigen::VectorXd z(q);
            for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = unit(rng);
            dig = digest_matrix(w.W, dig);
            dig = fnv1a(z.data(), static_cast<std::size_t>(z.size()) * sizeof(double), dig);

            const Eigen::MatrixXd h = phi_hessian(w, z);
            worst_asym = std::max(worst_asym, (h - h.transpose()).lpNorm<Eigen::Infinity>());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
            const double lmin = eig.eigenvalues().minCoeff();
            const double lmax = eig.eigenvalues().maxCoeff();
            worst_negeig = std::max(worst_negeig, -lmin / std::max(1.0, lmax));
            worst_grad_fd = std::max(worst_grad_fd, fd_gradient_error(w, z));
            worst_hess_fd = std::max(worst_hess_fd, fd_hessian_error(w, z));
        }
        b.leq("lemma1.hessian_symmetry", dig, worst_asym, 1e-12);
        b.leq("lemma1.hessian_psd_violation", dig, worst_negeig, 1e-8);
        b.leq("theorem1.gradient_matches_fd", dig, worst_grad_fd, 1e-6);
        b.leq("lemma1.hessian_matches_fd", dig, worst_hess_fd, 1e-5);
    }

    // Theorem 1: zero gradient, uniqueness, proof equivalence, per Q.
    {
        double worst_grad0 = 0.0;
        double min_gap = std::numeric_limits<double>::infinity();
        double min_sing = std::numeric_limits<double>::infinity();
        bool equivalence = true;
        std::uint64_t dig = 0xcbf29ce484222325ull;
        for (std::size_t q = 2; q <= 8; ++q) {
            ClassifierWeights w = ClassifierWeights::random(q, q + 1, rng);
            dig = digest_matrix(w.W, dig);
            MinimizerReport rep = unique_minimizer_check(w, opt.trials, rng);
            worst_grad0 = std::max(worst_grad0, rep.grad_norm_at_zero);
            min_gap = std::min(min_gap, rep.min_gap);
            min_sing = std::min(min_sing, rep.stacked_system_min_singular);
            equivalence = equivalence && rep.equivalence_ok && rep.unique_certified;
        }
        b.leq("theorem1.gradient_at_zero", dig, worst_grad0, 1e-12);
        b.positive("theorem1.uniqueness_gap", dig, min_gap);
        b.positive("theorem1.stacked_system_min_singular", dig, min_sing);
        b.truth("theorem1.proof_equivalence", dig, equivalence);
    }

    // Degenerate witness is part of the default suite as well.
    {
        ClassifierWeights w = ClassifierWeights::random(4, 5, rng).with_duplicated_column(3, 0);
        const std::uint64_t dig = digest_matrix(w.W);
        MinimizerReport rep = unique_minimizer_check(w, 100, rng);
        b.truth("theorem1.degenerate_witness_found", dig, !rep.affine_basis && rep.witness_found);
        b.leq("theorem1.degenerate_witness_gap", dig,
              std::max(rep.witness_phi_gap, rep.witness_grad_norm), 1e-10);
    }

    // Theorem 2: spread of c(f) over an (alpha, y, f) grid.
    {
        std::vector<double> fs;
        for (double f = -2.0; f <= 2.0 + 1e-12; f += 0.125) fs.push_back(f);
        double worst = 0.0;
        std::uint64_t dig = fnv1a(std::span<const double>(fs));
        for (int y : {-1, 1}) {
            for (double a = 0.05; a < 0.96; a += 0.05) {
                worst = std::max(worst, mse_ls_decomposition_check(fs, y, a).max_spread);
            }
        }
        b.leq("theorem2.mse_constant_spread", dig, worst, 1e-10);
    }

    // LS decomposition identities (both target conventions).
    {
        std::uniform_real_distribution<double> alpha_d(0.05, 0.95);
        std::uniform_int_distribution<std::size_t> classes_d(2, 12);
        double worst_norm = 0.0, worst_unnorm = 0.0, worst_min = 0.0;
        std::uint64_t dig = fnv1a(&opt.seed, sizeof(opt.seed));
        for (int t = 0; t < opt.trials; ++t) {
            const std::size_t L = classes_d(rng);
            std::vector<double> f(L);
            for (auto& v : f) v = 3.0 * unit(rng);
            std::uniform_int_distribution<std::size_t> label_d(0, L - 1);
            const std::size_t y = label_d(rng);
            const double a = alpha_d(rng);
            worst_norm = std::max(worst_norm, std::abs(ls_decomposition_residual(f, y, a)));
            worst_unnorm =
                std::max(worst_unnorm, std::abs(ls_decomposition_residual_unnormalized(f, y, a)));
            const double gap =
                omega(f) - static_cast<double>(L) * std::log(static_cast<double>(L));
            worst_min = std::max(worst_min, -gap);
            dig = fnv1a(std::span<const double>(f), dig);
        }
        b.leq("smoothing.ls_decomposition_residual", dig, worst_norm, 1e-10);
        b.leq("smoothing.ls_decomposition_residual_unnormalized", dig, worst_unnorm, 1e-10);
        b.leq("smoothing.omega_lower_bound_violation", dig, worst_min, 1e-12);
    }

    // Omega gradient identity: closed form vs tape autodiff.
    {
        double worst = 0.0;
        std::uint64_t dig = fnv1a(&opt.seed, sizeof(opt.seed), 0x9e3779b97f4a7c15ull);
        for (int t = 0; t < 64; ++t) {
            std::vector<double> f(6);
            for (auto& v : f) v = 2.0 * unit(rng);
            dig = fnv1a(std::span<const double>(f), dig);
            Tape tape;
            const NodeId x = tape.input(f);
            tape.backward(omega_node(tape, x));
            const auto g = tape.grad(x);
            const std::vector<double> closed = omega_gradient(f);
            for (std::size_t i = 0; i < f.size(); ++i) {
                worst = std::max(worst, std::abs(g[i] - closed[i]));
            }
        }
        b.leq("smoothing.omega_gradient_identity", dig, worst, 1e-10);
    }

    // Jacobian probe: autodiff vs finite differences on a small random net.
    {
        NetConfig cfg;
        cfg.input_dim = 6;
        cfg.classes = 3;
        cfg.width = 8;
        cfg.stages = 2;
        cfg.activation = Activation::kSoftplus;
        MultiExitNet net(cfg);
        net.init(opt.seed + 17);
        double worst = 0.0;
        std::uint64_t dig = fnv1a(&opt.seed, sizeof(opt.seed), 0xa0761d6478bd642full);
        for (int t = 0; t < 8; ++t) {
            std::vector<double> x(cfg.input_dim);
            for (auto& v : x) v = unit(rng);
            dig = fnv1a(std::span<const double>(x), dig);
            const double ja = jacobian_frobenius(net, x, cfg.stages - 1, JacobianMode::kAutodiff);
            const double jf = jacobian_frobenius(net, x, cfg.stages - 1, JacobianMode::kFiniteDiff);
            worst = std::max(worst, std::abs(ja - jf) / std::max(1e-12, jf));
        }
        b.leq("theorem1.jacobian_fd_relative_error", dig, worst, 1e-3);
    }

    return std::move(b.checks);
}

bool all_passed(std::span<const TheoryCheck> checks) {
    for (const auto& c : checks) {
        if (!c.pass) return false;
    }
    return true;
}

void write_theory_report(std::span<const TheoryCheck> checks, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("write_theory_report: cannot open " + path.string());
    for (const auto& c : checks) {
        nlohmann::json j{{"name", c.name},
                         {"digest", c.digest},
                         {"statistic", c.statistic},
                         {"tolerance", c.tolerance},
                         {"pass", c.pass}};
        out << j.dump() << '\n';
    }
}

}  // namespace alasca
