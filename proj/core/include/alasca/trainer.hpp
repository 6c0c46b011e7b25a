#pragma once

#include <filesystem>
#include <optional>

#include "alasca/losses.hpp"
#include "alasca/metrics.hpp"
#include "alasca/network.hpp"

namespace alasca {

// Per-instance exponential moving average of main-classifier logits and the
// confidence gamma = softmax(tau * z_ema)[label] derived from it. z_ema
// starts at the zero vector for every instance.
class EmaState {
  public:
    EmaState(std::size_t n, std::size_t classes, double w_ema = 0.7, double tau = 3.0);

    // z_ema <- w * z_ema + (1 - w) * z_t; call once per instance per epoch.
    void update(std::size_t i, std::span<const double> z_t);
    double confidence(std::size_t i, std::size_t y_hat) const;
    std::span<const double> logits(std::size_t i) const;

    std::size_t size() const { return n_; }
    double w_ema() const { return w_ema_; }
    double tau() const { return tau_; }

  private:
    std::size_t n_;
    std::size_t classes_;
    double w_ema_;
    double tau_;
    std::vector<double> z_;  // n x classes
};

// Label correction with agreement: after warm-up, adopt the main prediction
// when the last sub-classifier agrees and it differs from the given label;
// otherwise keep the given label.
int lca(std::span<const double> q_main, std::span<const double> q_sub_last, int given_label,
        int epoch, int warmup_epochs);

enum class AgreementRule : std::uint8_t { kLastSub, kAllHeads };

struct AlphaSchedule {
    double initial = 0.1;
    double final = 0.7;
    double ramp_fraction = 0.5;  // linear ramp over this leading fraction of epochs

    double at(int epoch, int total_epochs) const;
};

struct TrainConfig {
    double lambda = 2.0;
    int warmup_epochs = 20;
    AlphaSchedule alpha;
    int epochs = 60;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    LnlSpec lnl;
    std::uint64_t seed = 1;

    double w_ema = 0.7;
    double tau = 3.0;
    AgreementRule agreement = AgreementRule::kLastSub;

    // Fixed uniform label smoothing on the main target (normalized
    // convention); 0 disables it. Only meaningful with lnl = ce.
    double main_ls_alpha = 0.0;

    NetConfig net;

    // Jacobian group stats every k epochs (0 = final epoch only).
    int jacobian_every = 0;
    std::size_t jacobian_subsample = 512;

    // Learning rate decays by 10x at these fractions of total epochs.
    static constexpr double kDecayAt[2] = {0.5, 0.75};

    void validate() const;
    double lr_at(int epoch) const;
};

// Eq.-style combined objective for one instance: lnl(q^C, given) plus
// lambda * sum over sub-heads of CE(q^i, gamma*e_yhat + (1-gamma)*1), the
// all-one vector unnormalized. gamma and y_hat enter as constants.
NodeId alasca_loss_node(Tape& tape, std::span<const NodeId> q_list, int given_label,
                        int corrected_label, double gamma, double lambda, const LnlSpec& lnl);

struct TrainResult {
    MultiExitNet net;
    std::vector<EpochMetrics> metrics;
    // history[i][t] = confidence of instance i at epoch t
    std::vector<std::vector<double>> gamma_history;
    std::vector<std::vector<double>> inst_history;
    double final_test_accuracy = 0.0;
    double final_train_accuracy = 0.0;

    TrainResult(const NetConfig& cfg) : net(cfg) {}
};

// Full training loop: per instance forward all heads, EMA update from main
// logits, LCA, gamma, combined loss; SGD with momentum and step decay.
// Deterministic given cfg.seed. Throws NumericError on divergence.
TrainResult train(const TrainConfig& cfg, const NoisyDataset& train_ds,
                  const NoisyDataset& test_ds);

// Reference loop: plain cross-entropy on the main path, nothing else. With
// lambda = 0 and lnl = ce, train() matches this bit for bit.
TrainResult train_plain_ce(const TrainConfig& cfg, const NoisyDataset& train_ds,
                           const NoisyDataset& test_ds);

double evaluate_accuracy(const MultiExitNet& net, const NoisyDataset& ds, bool use_clean_labels);

// Versioned binary checkpoint of all parameter tensors plus a config digest.
void save_checkpoint(const MultiExitNet& net, std::uint64_t config_digest,
                     const std::filesystem::path& path);
// Loads into an already-constructed net; shapes must match. Returns the
// stored config digest.
std::uint64_t load_checkpoint(MultiExitNet& net, const std::filesystem::path& path);

}  // namespace alasca
