#pragma once

#include <filesystem>
#include <string>

#include "alasca/dataset.hpp"
#include "alasca/trainer.hpp"

namespace alasca {

// Dataset source: either CSV paths (both required together) or generation
// parameters. data.n (or data.path) is the required key.
struct DataSpec {
    std::string path;       // train CSV; empty -> generate
    std::string test_path;  // test CSV

    std::size_t n = 0;
    std::size_t dim = 20;
    std::size_t classes = 4;
    double separation = 3.0;
    std::size_t test_n = 2000;
    NoiseKind noise = NoiseKind::kNone;
    double epsilon = 0.0;
    std::uint64_t seed = 1;
    std::string mapping = "cifar10";  // "cifar10" or "cyclic:<group_size>"
    bool self_flip = false;

    void validate() const;
};

struct ExperimentConfig {
    DataSpec data;
    TrainConfig train;

    // FNV digest of the canonical key=value rendering of every effective
    // setting; stored in checkpoints.
    std::uint64_t digest() const;
    std::string canonical() const;
};

// Flat key=value text, one pair per line, '#' comments. Unknown keys are
// rejected by name. Defaults follow the reference hyperparameters
// (lambda 2.0, w_ema 0.7, tau 3.0, warmup 20, alpha 0.1 -> 0.7).
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Train set (with noise applied) and clean test set per the spec.
std::pair<NoisyDataset, NoisyDataset> materialize_data(const DataSpec& spec);

std::map<int, int> resolve_mapping(const std::string& mapping, std::size_t classes);

}  // namespace alasca
