#include "alasca/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace alasca {

EmaState::EmaState(std::size_t n, std::size_t classes, double w_ema, double tau)
    : n_(n), classes_(classes), w_ema_(w_ema), tau_(tau), z_(n * classes, 0.0) {
    if (classes < 2) throw ContractError("EmaState: need at least 2 classes");
    if (w_ema < 0.0 || w_ema > 1.0) throw ContractError("EmaState: w_ema outside [0,1]");
    if (!(tau > 0.0)) throw ContractError("EmaState: tau must be > 0");
}

void EmaState::update(std::size_t i, std::span<const double> z_t) {
    if (i >= n_) throw ContractError("EmaState::update: unseen instance id");
    if (z_t.size() != classes_) throw ContractError("EmaState::update: logit length mismatch");
    require_finite(z_t, "EmaState::update");
    double* z = z_.data() + i * classes_;
    for (std::size_t c = 0; c < classes_; ++c) {
        z[c] = w_ema_ * z[c] + (1.0 - w_ema_) * z_t[c];
    }
}

double EmaState::confidence(std::size_t i, std::size_t y_hat) const {
    if (i >= n_) throw ContractError("EmaState::confidence: unseen instance id");
    if (y_hat >= classes_) throw ContractError("EmaState::confidence: label out of range");
    return softmax(logits(i), tau_)[y_hat];
}

std::span<const double> EmaState::logits(std::size_t i) const {
    return {z_.data() + i * classes_, classes_};
}

int lca(std::span<const double> q_main, std::span<const double> q_sub_last, int given_label,
        int epoch, int warmup_epochs) {
    if (epoch < warmup_epochs) return given_label;
    const int main_pred = static_cast<int>(argmax(q_main));
    const int sub_pred = static_cast<int>(argmax(q_sub_last));
    if (main_pred == sub_pred && main_pred != given_label) return main_pred;
    return given_label;
}

double AlphaSchedule::at(int epoch, int total_epochs) const {
    const double ramp_epochs = ramp_fraction * static_cast<double>(total_epochs);
    if (ramp_epochs <= 0.0) return final;
    const double t = std::min(1.0, static_cast<double>(epoch) / ramp_epochs);
    return initial + (final - initial) * t;
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ContractError("train.lambda must be >= 0");
    if (warmup_epochs > epochs) throw ContractError("train.warmup must be <= train.epochs");
    if (epochs < 1) throw ContractError("train.epochs must be >= 1");
    if (batch_size < 1) throw ContractError("train.batch must be >= 1");
    if (!(learning_rate > 0.0)) throw ContractError("train.lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ContractError("train.momentum outside [0,1)");
    if (lnl.keep_fraction <= 0.0 || lnl.keep_fraction > 1.0) {
        throw ContractError("train.keep_fraction outside (0,1]");
    }
    if (alpha.initial < 0.0 || alpha.initial > 1.0 || alpha.final < 0.0 || alpha.final > 1.0) {
        throw ContractError("train.alpha values outside [0,1]");
    }
    if (main_ls_alpha < 0.0 || main_ls_alpha >= 1.0) {
        throw ContractError("train.main_ls_alpha outside [0,1)");
    }
    if (main_ls_alpha > 0.0 && lnl.kind != LnlKind::kCe) {
        throw ContractError("train.main_ls_alpha requires train.lnl = ce");
    }
}

double TrainConfig::lr_at(int epoch) const {
    double lr = learning_rate;
    for (double frac : kDecayAt) {
        if (epoch >= static_cast<int>(frac * epochs)) lr *= 0.1;
    }
    return lr;
}

NodeId alasca_loss_node(Tape& tape, std::span<const NodeId> q_list, int given_label,
                        int corrected_label, double gamma, double lambda, const LnlSpec& lnl) {
    if (q_list.empty()) throw ContractError("alasca_loss: empty classifier list");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ContractError("alasca_loss: gamma outside (0,1)");
    const NodeId q_main = q_list.back();
    const std::size_t classes = tape.value(q_main).size();
    NodeId main_term = lnl_loss_node(tape, lnl, q_main, static_cast<std::size_t>(given_label));
    if (lambda == 0.0 || q_list.size() == 1) return main_term;

    std::vector<double> target(classes, 1.0 - gamma);
    target[static_cast<std::size_t>(corrected_label)] += gamma;
    NodeId sub_acc = kNoNode;
    for (std::size_t i = 0; i + 1 < q_list.size(); ++i) {
        NodeId term = cross_entropy_node(tape, q_list[i], target);
        sub_acc = sub_acc == kNoNode ? term : tape.affine(sub_acc, term, 1.0, 1.0);
    }
    return tape.affine(main_term, sub_acc, 1.0, lambda);
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

namespace {

struct SgdState {
    std::vector<std::vector<double>> velocity;

    explicit SgdState(const std::vector<Tensor*>& params) {
        velocity.reserve(params.size());
        for (const Tensor* p : params) velocity.emplace_back(p->data.size(), 0.0);
    }

    void step(const std::vector<Tensor*>& params, double lr, double momentum) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            if (!p.has_grad()) continue;
            auto& v = velocity[k];
            for (std::size_t j = 0; j < p.data.size(); ++j) {
                v[j] = momentum * v[j] + p.grad[j];
                p.data[j] -= lr * v[j];
            }
            p.grad.clear();
        }
    }
};

constexpr std::uint64_t kShuffleSalt = 0x5f3759df5f3759dfull;

double batch_mean_loss(Tape& tape, NodeId loss_node) {
    const double v = tape.scalar_value(loss_node);
    if (!std::isfinite(v)) throw NumericError("training diverged: loss is not finite");
    return v;
}

std::optional<double> opt_or_nullopt(double v, bool present) {
    if (present) return v;
    return std::nullopt;
}

}  // namespace

double evaluate_accuracy(const MultiExitNet& net, const NoisyDataset& ds, bool use_clean_labels) {
    const std::size_t n = ds.size();
    if (n == 0) return 0.0;
    std::vector<std::uint8_t> hit(n, 0);
    const int cap = eval_thread_cap();
    if (cap <= 1) {
        Tape tape;
        for (std::size_t i = 0; i < n; ++i) {
            tape.reset();
            const NodeId q = net.forward_main_const(tape, tape.input(ds.x(i)));
            const int pred = static_cast<int>(argmax(tape.value(q)));
            hit[i] = pred == (use_clean_labels ? ds.clean_labels[i] : ds.noisy_labels[i]) ? 1 : 0;
        }
    } else {
        parallel_for_indexed(n, [&](std::size_t i) {
            Tape tape;
            const NodeId q = net.forward_main_const(tape, tape.input(ds.x(i)));
            const int pred = static_cast<int>(argmax(tape.value(q)));
            hit[i] = pred == (use_clean_labels ? ds.clean_labels[i] : ds.noisy_labels[i]) ? 1 : 0;
        });
    }
    std::size_t correct = 0;
    for (auto h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const NoisyDataset& train_ds,
                  const NoisyDataset& test_ds) {
    cfg.validate();
    train_ds.validate();
    const std::size_t n = train_ds.size();
    const std::size_t classes = train_ds.classes;
    if (cfg.net.classes != classes || cfg.net.input_dim != train_ds.dim) {
        throw ContractError("train: net dims do not match dataset");
    }

    TrainResult res(cfg.net);
    res.net.init(cfg.seed);
    auto params = res.net.parameters();
    SgdState sgd(params);
    EmaState ema(n, classes, cfg.w_ema, cfg.tau);

    res.gamma_history.assign(n, std::vector<double>(cfg.epochs, 0.0));
    res.inst_history.assign(n, std::vector<double>(cfg.epochs, 0.0));

    Rng shuffle_rng(cfg.seed ^ kShuffleSalt);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const bool sub_active = cfg.lambda > 0.0;
    const bool small_loss = cfg.lnl.kind == LnlKind::kSmallLoss;
    const std::size_t heads = res.net.classifier_count();

    // Uniform-LS main target, fixed across training when enabled.
    std::vector<std::vector<double>> ls_targets;
    if (cfg.main_ls_alpha > 0.0) {
        SmoothingSpec spec{cfg.main_ls_alpha, SmoothingConvention::kNormalized, classes};
        for (std::size_t c = 0; c < classes; ++c) ls_targets.push_back(smooth_target(c, spec));
    }

    Tape tape;
    std::vector<NodeId> main_terms, sub_terms, kept;
    std::vector<std::size_t> batch_ids;
    std::vector<std::uint8_t> selected(small_loss ? n : 0, 0);
    std::vector<double> z_t;  // main logits copy; tape spans move as nodes are added

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double lr = cfg.lr_at(epoch);
        const double alpha_t = cfg.alpha.at(epoch, cfg.epochs);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        std::size_t train_hits = 0;
        int lca_fires = 0, lca_correct = 0;
        if (small_loss) std::fill(selected.begin(), selected.end(), 0);

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            tape.reset();
            main_terms.clear();
            sub_terms.clear();
            batch_ids.clear();

            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                batch_ids.push_back(i);
                const NodeId x = tape.input(train_ds.x(i));
                const int given = train_ds.noisy_labels[i];

                NodeId q_main;
                std::vector<NodeId> q_list;
                if (sub_active) {
                    auto exits = res.net.forward_all(tape, x);
                    q_list = std::move(exits.logits);
                    q_main = q_list.back();
                } else {
                    q_main = res.net.forward_main(tape, x);
                }

                {
                    const auto span = tape.value(q_main);
                    z_t.assign(span.begin(), span.end());
                }
                ema.update(i, z_t);
                if (static_cast<int>(argmax(z_t)) == given) ++train_hits;

                int corrected = given;
                if (sub_active) {
                    if (cfg.agreement == AgreementRule::kLastSub) {
                        corrected = lca(z_t, tape.value(q_list[heads - 2]), given, epoch,
                                        cfg.warmup_epochs);
                    } else {
                        // All-heads variant: every sub head must agree with the main.
                        const int main_pred = static_cast<int>(argmax(z_t));
                        bool all_agree = epoch >= cfg.warmup_epochs && main_pred != given;
                        for (std::size_t h = 0; h + 1 < heads && all_agree; ++h) {
                            all_agree = static_cast<int>(argmax(tape.value(q_list[h]))) == main_pred;
                        }
                        corrected = all_agree ? main_pred : given;
                    }
                    if (corrected != given) {
                        ++lca_fires;
                        if (corrected == train_ds.clean_labels[i]) ++lca_correct;
                    }
                }

                const double gamma = ema.confidence(i, static_cast<std::size_t>(corrected));
                res.gamma_history[i][epoch] = gamma;

                if (cfg.main_ls_alpha > 0.0) {
                    main_terms.push_back(cross_entropy_node(
                        tape, q_main, ls_targets[static_cast<std::size_t>(given)]));
                } else {
                    main_terms.push_back(
                        lnl_loss_node(tape, cfg.lnl, q_main, static_cast<std::size_t>(given)));
                }

                if (sub_active) {
                    // The alpha ramp scales the smoothing strength: the target's
                    // smoothing factor is alpha_t * (1 - gamma).
                    const double gamma_eff =
                        std::clamp(1.0 - alpha_t * (1.0 - gamma), 1e-12, 1.0 - 1e-12);
                    std::vector<double> target(classes, 1.0 - gamma_eff);
                    target[static_cast<std::size_t>(corrected)] += gamma_eff;
                    NodeId acc = kNoNode;
                    for (std::size_t h = 0; h + 1 < heads; ++h) {
                        NodeId term = cross_entropy_node(tape, q_list[h], target);
                        acc = acc == kNoNode ? term : tape.affine(acc, term, 1.0, 1.0);
                    }
                    sub_terms.push_back(acc);
                }
            }

            // Small-loss selection keeps the lowest-CE fraction of the batch
            // for the main term; sub terms always cover the whole batch.
            NodeId main_mean;
            if (small_loss && cfg.lnl.keep_fraction < 1.0) {
                const std::size_t bsz = main_terms.size();
                std::size_t keep = static_cast<std::size_t>(
                    std::ceil(cfg.lnl.keep_fraction * static_cast<double>(bsz)));
                keep = std::clamp<std::size_t>(keep, 1, bsz);
                std::vector<std::size_t> rank(bsz);
                std::iota(rank.begin(), rank.end(), 0);
                std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
                    return tape.scalar_value(main_terms[a]) < tape.scalar_value(main_terms[b]);
                });
                kept.clear();
                for (std::size_t r = 0; r < keep; ++r) {
                    kept.push_back(main_terms[rank[r]]);
                    selected[batch_ids[rank[r]]] = 1;
                }
                main_mean = tape.mean_scalars(kept);
            } else {
                if (small_loss) {
                    for (std::size_t i : batch_ids) selected[i] = 1;
                }
                main_mean = tape.mean_scalars(main_terms);
            }

            NodeId batch_loss = main_mean;
            if (sub_active) {
                const NodeId sub_mean = tape.mean_scalars(sub_terms);
                batch_loss = tape.affine(main_mean, sub_mean, 1.0, cfg.lambda);
            }

            loss_sum += batch_mean_loss(tape, batch_loss);
            ++batches;
            tape.backward(batch_loss);
            tape.export_grads();
            sgd.step(params, lr, cfg.momentum);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.mean_loss = loss_sum / static_cast<double>(batches);
        m.train_accuracy = static_cast<double>(train_hits) / static_cast<double>(n);
        m.test_accuracy = evaluate_accuracy(res.net, test_ds, /*use_clean_labels=*/true);
        m.lca_fire_count = lca_fires;
        m.lca_correct_count = lca_correct;

        double g_clean = 0.0, g_noisy = 0.0;
        std::size_t n_clean = 0, n_noisy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (train_ds.is_clean[i]) {
                g_clean += res.gamma_history[i][epoch];
                ++n_clean;
            } else {
                g_noisy += res.gamma_history[i][epoch];
                ++n_noisy;
            }
        }
        m.gamma_clean_mean = opt_or_nullopt(g_clean / std::max<std::size_t>(1, n_clean), n_clean > 0);
        m.gamma_noisy_mean = opt_or_nullopt(g_noisy / std::max<std::size_t>(1, n_noisy), n_noisy > 0);

        if (small_loss) {
            m.selection_fscore = selection_fscore(selected, train_ds.is_clean).value;
        }

        const bool last_epoch = epoch + 1 == cfg.epochs;
        const bool probe =
            last_epoch || (cfg.jacobian_every > 0 && (epoch + 1) % cfg.jacobian_every == 0);
        if (probe) {
            const auto stats =
                group_jacobian_gap(res.net, train_ds, cfg.net.stages - 1, cfg.jacobian_subsample,
                                   cfg.seed ^ 0x9e3779b97f4a7c15ull);
            m.jac_clean = opt_or_nullopt(stats.mean_clean, stats.count_clean > 0);
            m.jac_noisy = opt_or_nullopt(stats.mean_noisy, stats.count_noisy > 0);
        }

        res.metrics.push_back(std::move(m));
    }

    res.final_test_accuracy = res.metrics.back().test_accuracy;
    res.final_train_accuracy = res.metrics.back().train_accuracy;
    return res;
}

TrainResult train_plain_ce(const TrainConfig& cfg, const NoisyDataset& train_ds,
                           const NoisyDataset& test_ds) {
    cfg.validate();
    train_ds.validate();
    const std::size_t n = train_ds.size();
    if (cfg.net.classes != train_ds.classes || cfg.net.input_dim != train_ds.dim) {
        throw ContractError("train_plain_ce: net dims do not match dataset");
    }

    TrainResult res(cfg.net);
    res.net.init(cfg.seed);
    auto params = res.net.parameters();
    SgdState sgd(params);

    Rng shuffle_rng(cfg.seed ^ kShuffleSalt);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    Tape tape;
    std::vector<NodeId> terms;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double lr = cfg.lr_at(epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        std::size_t train_hits = 0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            tape.reset();
            terms.clear();
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                const NodeId x = tape.input(train_ds.x(i));
                const NodeId q = res.net.forward_main(tape, x);
                if (static_cast<int>(argmax(tape.value(q))) == train_ds.noisy_labels[i]) {
                    ++train_hits;
                }
                terms.push_back(cross_entropy_node(
                    tape, q, static_cast<std::size_t>(train_ds.noisy_labels[i])));
            }
            const NodeId batch_loss = tape.mean_scalars(terms);
            loss_sum += batch_mean_loss(tape, batch_loss);
            ++batches;
            tape.backward(batch_loss);
            tape.export_grads();
            sgd.step(params, lr, cfg.momentum);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.mean_loss = loss_sum / static_cast<double>(batches);
        m.train_accuracy = static_cast<double>(train_hits) / static_cast<double>(n);
        m.test_accuracy = evaluate_accuracy(res.net, test_ds, true);
        res.metrics.push_back(std::move(m));
    }

    res.final_test_accuracy = res.metrics.back().test_accuracy;
    res.final_train_accuracy = res.metrics.back().train_accuracy;
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[8] = {'A', 'L', 'S', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ContractError("checkpoint: truncated file");
    return v;
}
}  // namespace

void save_checkpoint(const MultiExitNet& net, std::uint64_t config_digest,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("save_checkpoint: cannot open " + path.string());
    out.write(kCkptMagic, sizeof(kCkptMagic));
    put(out, config_digest);
    const auto params = net.parameters();
    put(out, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* p : params) {
        put(out, static_cast<std::uint32_t>(p->shape.size()));
        for (std::size_t d : p->shape) put(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(p->data.data()),
                  static_cast<std::streamsize>(p->data.size() * sizeof(double)));
    }
    if (!out) throw ContractError("save_checkpoint: write failed");
}

std::uint64_t load_checkpoint(MultiExitNet& net, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("load_checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
        throw ContractError("load_checkpoint: bad magic/version");
    }
    const auto digest = get<std::uint64_t>(in);
    const auto count = get<std::uint32_t>(in);
    auto params = net.parameters();
    if (count != params.size()) {
        throw ContractError("load_checkpoint: parameter count mismatch");
    }
    for (Tensor* p : params) {
        const auto ndims = get<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndims);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
        if (shape != p->shape) throw ContractError("load_checkpoint: shape mismatch");
        in.read(reinterpret_cast<char*>(p->data.data()),
                static_cast<std::streamsize>(p->data.size() * sizeof(double)));
        if (!in) throw ContractError("load_checkpoint: truncated tensor data");
    }
    return digest;
}

}  // namespace alasca
