#include "alasca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "alasca/theory.hpp"

namespace alasca {

GroupJacobianStats group_jacobian_gap(const MultiExitNet& net, const NoisyDataset& ds,
                                      std::size_t stage, std::size_t subsample,
                                      std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (subsample > 0 && subsample < idx.size()) {
        Rng rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(subsample);
        std::sort(idx.begin(), idx.end());
    }

    std::vector<double> norms(idx.size());
    parallel_for_indexed(idx.size(), [&](std::size_t k) {
        norms[k] = jacobian_frobenius(net, ds.x(idx[k]), stage);
    });

    GroupJacobianStats st;
    double sum_clean = 0.0, sum_noisy = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (ds.is_clean[idx[k]]) {
            sum_clean += norms[k];
            ++st.count_clean;
        } else {
            sum_noisy += norms[k];
            ++st.count_noisy;
        }
    }
    st.mean_clean = st.count_clean ? sum_clean / static_cast<double>(st.count_clean) : 0.0;
    st.mean_noisy = st.count_noisy ? sum_noisy / static_cast<double>(st.count_noisy) : 0.0;
    const std::size_t total = st.count_clean + st.count_noisy;
    st.mean_all = total ? (sum_clean + sum_noisy) / static_cast<double>(total) : 0.0;
    return st;
}

FScore selection_fscore(std::span<const std::uint8_t> selected,
                        std::span<const std::uint8_t> is_clean) {
    if (selected.size() != is_clean.size()) {
        throw ContractError("selection_fscore: mask lengths differ");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const bool sel = selected[i] != 0;
        const bool clean = is_clean[i] != 0;
        if (sel && clean) ++tp;
        if (sel && !clean) ++fp;
        if (!sel && clean) ++fn;
    }
    if (tp + fp == 0 || tp + fn == 0) return {0.0, true};
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return {0.0, true};
    return {2.0 * precision * recall / (precision + recall), false};
}

namespace {

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

ConfidenceDynamics confidence_dynamics(const std::vector<std::vector<double>>& gamma_history,
                                       const std::vector<std::vector<double>>& inst_history,
                                       std::span<const std::uint8_t> is_clean) {
    const std::size_t n = gamma_history.size();
    if (inst_history.size() != n || is_clean.size() != n) {
        throw ContractError("confidence_dynamics: history sizes differ");
    }
    if (n == 0 || gamma_history[0].size() < 2) {
        throw ContractError("confidence_dynamics: need at least 2 epochs of history");
    }
    const std::size_t epochs = gamma_history[0].size();

    ConfidenceDynamics dyn;
    double acc_ema = 0.0, acc_inst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (gamma_history[i].size() != epochs || inst_history[i].size() != epochs) {
            throw ContractError("confidence_dynamics: ragged history");
        }
        acc_ema += std_of(gamma_history[i]);
        acc_inst += std_of(inst_history[i]);
    }
    dyn.mean_std_ema = acc_ema / static_cast<double>(n);
    dyn.mean_std_inst = acc_inst / static_cast<double>(n);
    dyn.ema_no_noisier = dyn.mean_std_ema <= dyn.mean_std_inst;

    dyn.ema_mean_clean.resize(epochs, 0.0);
    dyn.ema_mean_noisy.resize(epochs, 0.0);
    dyn.inst_mean_clean.resize(epochs, 0.0);
    dyn.inst_mean_noisy.resize(epochs, 0.0);
    std::size_t n_clean = 0, n_noisy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (is_clean[i] ? n_clean : n_noisy) += 1;
    }
    for (std::size_t t = 0; t < epochs; ++t) {
        double gc = 0.0, gn = 0.0, ic = 0.0, in = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_clean[i]) {
                gc += gamma_history[i][t];
                ic += inst_history[i][t];
            } else {
                gn += gamma_history[i][t];
                in += inst_history[i][t];
            }
        }
        dyn.ema_mean_clean[t] = n_clean ? gc / static_cast<double>(n_clean) : 0.0;
        dyn.ema_mean_noisy[t] = n_noisy ? gn / static_cast<double>(n_noisy) : 0.0;
        dyn.inst_mean_clean[t] = n_clean ? ic / static_cast<double>(n_clean) : 0.0;
        dyn.inst_mean_noisy[t] = n_noisy ? in / static_cast<double>(n_noisy) : 0.0;
    }
    return dyn;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

}  // namespace

void append_metrics_jsonl(const EpochMetrics& m, std::ostream& out) {
    nlohmann::json j{{"epoch", m.epoch},
                     {"train_accuracy", m.train_accuracy},
                     {"test_accuracy", m.test_accuracy},
                     {"mean_loss", m.mean_loss},
                     {"gamma_clean_mean", opt_json(m.gamma_clean_mean)},
                     {"gamma_noisy_mean", opt_json(m.gamma_noisy_mean)},
                     {"jac_clean", opt_json(m.jac_clean)},
                     {"jac_noisy", opt_json(m.jac_noisy)},
                     {"selection_fscore", opt_json(m.selection_fscore)},
                     {"lca_fire_count", m.lca_fire_count},
                     {"lca_correct_count", m.lca_correct_count}};
    out << j.dump() << '\n';
}

void write_metrics_jsonl(std::span<const EpochMetrics> ms, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("write_metrics_jsonl: cannot open " + path.string());
    for (const auto& m : ms) append_metrics_jsonl(m, out);
}

namespace {

void csv_cell(std::ostream& out, const std::optional<double>& v) {
    if (v.has_value()) out << format_double(*v);
}

}  // namespace

void write_metrics_csv(std::span<const EpochMetrics> ms, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("write_metrics_csv: cannot open " + path.string());
    out << "epoch,train_accuracy,test_accuracy,mean_loss,gamma_clean_mean,gamma_noisy_mean,"
           "jac_clean,jac_noisy,selection_fscore,lca_fire_count,lca_correct_count\n";
    for (const auto& m : ms) {
        out << m.epoch << ',' << format_double(m.train_accuracy) << ','
            << format_double(m.test_accuracy) << ',' << format_double(m.mean_loss) << ',';
        csv_cell(out, m.gamma_clean_mean);
        out << ',';
        csv_cell(out, m.gamma_noisy_mean);
        out << ',';
        csv_cell(out, m.jac_clean);
        out << ',';
        csv_cell(out, m.jac_noisy);
        out << ',';
        csv_cell(out, m.selection_fscore);
        out << ',' << m.lca_fire_count << ',' << m.lca_correct_count << '\n';
    }
}

}  // namespace alasca
