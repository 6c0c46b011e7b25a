#include "alasca/noise.hpp"

#include <algorithm>
#include <cmath>

#include "alasca/losses.hpp"

namespace alasca {

NoisyDataset make_gaussian_dataset(std::size_t n, std::size_t dim, std::size_t classes,
                                   double separation, std::uint64_t seed) {
    if (classes < 2) throw ContractError("make_gaussian_dataset: need at least 2 classes");
    if (n < classes) throw ContractError("make_gaussian_dataset: need n >= classes");
    if (dim < 2) throw ContractError("make_gaussian_dataset: need dim >= 2");
    if (separation < 0.0) throw ContractError("make_gaussian_dataset: separation must be >= 0");
    if (separation > 0.0 && dim < classes) {
        throw ContractError("make_gaussian_dataset: dim must be >= classes for separated means");
    }

    // Centered one-hot corners scaled so every pair of means is `separation`
    // apart: ||s(e_i - e_j)|| = s*sqrt(2).
    const double scale = separation / std::sqrt(2.0);
    std::vector<double> means(classes * dim, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < classes && k < dim; ++k) {
            means[c * dim + k] = scale * ((k == c ? 1.0 : 0.0) - 1.0 / static_cast<double>(classes));
        }
    }

    NoisyDataset ds;
    ds.dim = dim;
    ds.classes = classes;
    ds.spec = NoiseSpec{NoiseKind::kNone, 0.0, {}, seed, false};
    ds.features.resize(n * dim);
    ds.clean_labels.resize(n);
    ds.noisy_labels.resize(n);

    Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % classes);  // balanced within +-1
        ds.clean_labels[i] = label;
        ds.noisy_labels[i] = label;
        const double* mu = means.data() + static_cast<std::size_t>(label) * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            ds.features[i * dim + d] = mu[d] + unit(rng);
        }
    }
    ds.refresh_is_clean();
    ds.validate();
    return ds;
}

NoisyDataset inject_symmetric(const NoisyDataset& ds, double epsilon, std::uint64_t seed,
                              bool allow_self_flip) {
    if (epsilon < 0.0 || epsilon > 1.0) throw ContractError("inject_symmetric: epsilon outside [0,1]");
    NoisyDataset out = ds;
    out.spec = NoiseSpec{NoiseKind::kSymmetric, epsilon, {}, seed, allow_self_flip};
    const int L = static_cast<int>(ds.classes);
    Rng rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (coin(rng) >= epsilon) continue;
        const int truth = ds.clean_labels[i];
        if (allow_self_flip) {
            std::uniform_int_distribution<int> pickc(0, L - 1);
            out.noisy_labels[i] = pickc(rng);
        } else {
            std::uniform_int_distribution<int> pickc(0, L - 2);
            int target = pickc(rng);
            if (target >= truth) ++target;
            out.noisy_labels[i] = target;
        }
    }
    out.refresh_is_clean();
    out.validate();
    return out;
}

NoisyDataset inject_asymmetric(const NoisyDataset& ds, double epsilon,
                               const std::map<int, int>& mapping, std::uint64_t seed) {
    if (epsilon < 0.0 || epsilon > 1.0) throw ContractError("inject_asymmetric: epsilon outside [0,1]");
    const int L = static_cast<int>(ds.classes);
    for (const auto& [src, dst] : mapping) {
        if (src == dst) throw ContractError("inject_asymmetric: mapping target equals source");
        if (src < 0 || src >= L || dst < 0 || dst >= L) {
            throw ContractError("inject_asymmetric: mapping class out of range");
        }
    }
    NoisyDataset out = ds;
    out.spec = NoiseSpec{NoiseKind::kAsymmetric, epsilon, mapping, seed, false};
    Rng rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto it = mapping.find(ds.clean_labels[i]);
        // One draw per instance keeps flip decisions independent of the mapping.
        const bool flip = coin(rng) < epsilon;
        if (it != mapping.end() && flip) out.noisy_labels[i] = it->second;
    }
    out.refresh_is_clean();
    out.validate();
    return out;
}

std::map<int, int> cifar10_style_mapping() {
    return {{9, 1}, {2, 0}, {4, 7}, {3, 5}};
}

std::map<int, int> cyclic_superclass_mapping(std::size_t classes, std::size_t group_size) {
    if (group_size < 2) throw ContractError("cyclic_superclass_mapping: group_size must be >= 2");
    if (classes % group_size != 0) {
        throw ContractError("cyclic_superclass_mapping: classes must divide into equal groups");
    }
    std::map<int, int> m;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t group = c / group_size;
        m[static_cast<int>(c)] = static_cast<int>(group * group_size + (c % group_size + 1) % group_size);
    }
    return m;
}

double truncated_normal_sample(Rng& rng, double mu, double sigma, double lo, double hi) {
    if (!(lo < hi)) throw ContractError("truncated_normal_sample: empty interval");
    std::normal_distribution<double> dist(mu, sigma);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double v = dist(rng);
        if (v >= lo && v <= hi) return v;
    }
    throw NumericError("truncated_normal_sample: rejection failed to land in interval");
}

NoisyDataset inject_instance_dependent(const NoisyDataset& ds, double epsilon,
                                       std::uint64_t seed) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw ContractError("inject_instance_dependent: epsilon outside [0,1]");
    }
    NoisyDataset out = ds;
    out.spec = NoiseSpec{NoiseKind::kInstance, epsilon, {}, seed, false};
    const std::size_t L = ds.classes;
    Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> w(ds.dim * L);
    for (auto& v : w) v = unit(rng);

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<double> scores(L);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double rho = truncated_normal_sample(rng, epsilon, 0.1, 0.0, 1.0);
        if (coin(rng) >= rho) continue;
        const auto xi = ds.x(i);
        for (std::size_t c = 0; c < L; ++c) {
            double acc = 0.0;
            for (std::size_t d = 0; d < ds.dim; ++d) acc += xi[d] * w[d * L + c];
            scores[c] = acc;
        }
        // Softmax over the non-true classes picks the flip target.
        const std::size_t truth = static_cast<std::size_t>(ds.clean_labels[i]);
        std::vector<double> others;
        others.reserve(L - 1);
        for (std::size_t c = 0; c < L; ++c) {
            if (c != truth) others.push_back(scores[c]);
        }
        const std::vector<double> probs = softmax(others);
        double u = coin(rng);
        std::size_t pick = 0;
        for (; pick + 1 < probs.size(); ++pick) {
            if (u < probs[pick]) break;
            u -= probs[pick];
        }
        std::size_t target = pick < static_cast<std::size_t>(truth) ? pick : pick + 1;
        out.noisy_labels[i] = static_cast<int>(target);
    }
    out.refresh_is_clean();
    out.validate();
    return out;
}

}  // namespace alasca
