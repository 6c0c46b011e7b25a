#pragma once

#include <filesystem>
#include <optional>

#include "alasca/dataset.hpp"
#include "alasca/network.hpp"

namespace alasca {

struct GroupJacobianStats {
    double mean_clean = 0.0;
    double mean_noisy = 0.0;
    double mean_all = 0.0;
    std::size_t count_clean = 0;
    std::size_t count_noisy = 0;
};

// Mean ||J^(stage)(x)||_F per clean/noisy group over a seeded subsample of at
// most `subsample` instances (0 = whole dataset). Read-only over the net;
// fans out across instances up to ALASCA_THREADS with index-ordered reduction.
GroupJacobianStats group_jacobian_gap(const MultiExitNet& net, const NoisyDataset& ds,
                                      std::size_t stage, std::size_t subsample = 512,
                                      std::uint64_t seed = 0);

struct FScore {
    double value = 0.0;
    bool degenerate = false;  // a precision/recall denominator was zero
};

// Harmonic mean of precision and recall with "clean" as the positive class.
FScore selection_fscore(std::span<const std::uint8_t> selected,
                        std::span<const std::uint8_t> is_clean);

// Per-instance confidence trajectories: history[i][t] = confidence of
// instance i at epoch t. Both matrices must share dimensions.
struct ConfidenceDynamics {
    double mean_std_ema = 0.0;    // per-instance std of EMA confidence, averaged
    double mean_std_inst = 0.0;   // same for instantaneous confidence
    bool ema_no_noisier = false;  // mean_std_ema <= mean_std_inst
    // per-epoch group means of the EMA confidence
    std::vector<double> ema_mean_clean;
    std::vector<double> ema_mean_noisy;
    std::vector<double> inst_mean_clean;
    std::vector<double> inst_mean_noisy;
};

ConfidenceDynamics confidence_dynamics(const std::vector<std::vector<double>>& gamma_history,
                                       const std::vector<std::vector<double>>& inst_history,
                                       std::span<const std::uint8_t> is_clean);

// Per-epoch scalar metrics, one line of the trainer's JSONL stream.
struct EpochMetrics {
    int epoch = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double mean_loss = 0.0;
    std::optional<double> gamma_clean_mean;
    std::optional<double> gamma_noisy_mean;
    std::optional<double> jac_clean;
    std::optional<double> jac_noisy;
    std::optional<double> selection_fscore;
    int lca_fire_count = 0;
    int lca_correct_count = 0;
};

void append_metrics_jsonl(const EpochMetrics& m, std::ostream& out);
void write_metrics_jsonl(std::span<const EpochMetrics> ms, const std::filesystem::path& path);
// Columns: epoch,train_accuracy,test_accuracy,mean_loss,gamma_clean_mean,
// gamma_noisy_mean,jac_clean,jac_noisy,selection_fscore,lca_fire_count,
// lca_correct_count; absent values print empty.
void write_metrics_csv(std::span<const EpochMetrics> ms, const std::filesystem::path& path);

}  // namespace alasca
