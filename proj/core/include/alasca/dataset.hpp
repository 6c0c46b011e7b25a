#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alasca/common.hpp"

namespace alasca {

enum class NoiseKind : std::uint8_t { kNone, kSymmetric, kAsymmetric, kInstance };

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::kNone;
    double epsilon = 0.0;
    std::map<int, int> mapping;   // asymmetric only
    std::uint64_t seed = 0;
    bool allow_self_flip = false; // symmetric variant: draw target from all L classes
};

struct NoisyDataset {
    std::size_t dim = 0;
    std::size_t classes = 0;
    std::vector<double> features;      // n x dim, row-major
    std::vector<int> clean_labels;
    std::vector<int> noisy_labels;
    std::vector<std::uint8_t> is_clean;
    NoiseSpec spec;

    std::size_t size() const { return clean_labels.size(); }
    std::span<const double> x(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }
    double flip_fraction() const;

    // is_clean[i] <=> clean == noisy; lengths consistent; labels in range.
    void validate() const;
    void refresh_is_clean();
};

// Header line "D L n kind epsilon seed", then n CSV rows
// "feat_0,...,feat_{D-1},clean,noisy". Doubles are written shortest
// round-trip, so identical datasets serialize to identical bytes.
void save_csv(const NoisyDataset& ds, const std::filesystem::path& path);
NoisyDataset load_csv(const std::filesystem::path& path);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace alasca
