#include "alasca/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace alasca {

const char* to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::kNone: return "none";
        case NoiseKind::kSymmetric: return "sym";
        case NoiseKind::kAsymmetric: return "asym";
        case NoiseKind::kInstance: return "inst";
    }
    return "?";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "none") return NoiseKind::kNone;
    if (s == "sym") return NoiseKind::kSymmetric;
    if (s == "asym") return NoiseKind::kAsymmetric;
    if (s == "inst") return NoiseKind::kInstance;
    throw ContractError("unknown noise kind: " + s);
}

double NoisyDataset::flip_fraction() const {
    if (size() == 0) return 0.0;
    std::size_t flips = 0;
    for (std::size_t i = 0; i < size(); ++i) flips += is_clean[i] ? 0 : 1;
    return static_cast<double>(flips) / static_cast<double>(size());
}

void NoisyDataset::validate() const {
    const std::size_t n = size();
    if (noisy_labels.size() != n || is_clean.size() != n) {
        throw ContractError("NoisyDataset: label/flag lengths differ");
    }
    if (features.size() != n * dim) {
        throw ContractError("NoisyDataset: feature buffer length != n*dim");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const bool clean = clean_labels[i] == noisy_labels[i];
        if (clean != static_cast<bool>(is_clean[i])) {
            throw ContractError("NoisyDataset: is_clean inconsistent at row " + std::to_string(i));
        }
        if (clean_labels[i] < 0 || clean_labels[i] >= static_cast<int>(classes) ||
            noisy_labels[i] < 0 || noisy_labels[i] >= static_cast<int>(classes)) {
            throw ContractError("NoisyDataset: label out of range at row " + std::to_string(i));
        }
    }
}

void NoisyDataset::refresh_is_clean() {
    is_clean.resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
        is_clean[i] = clean_labels[i] == noisy_labels[i] ? 1 : 0;
    }
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void save_csv(const NoisyDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("save_csv: cannot open " + path.string());
    out << ds.dim << ' ' << ds.classes << ' ' << ds.size() << ' ' << to_string(ds.spec.kind)
        << ' ' << format_double(ds.spec.epsilon) << ' ' << ds.spec.seed << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t d = 0; d < ds.dim; ++d) {
            out << format_double(ds.features[i * ds.dim + d]) << ',';
        }
        out << ds.clean_labels[i] << ',' << ds.noisy_labels[i] << '\n';
    }
    if (!out) throw ContractError("save_csv: write failed for " + path.string());
}

NoisyDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("load_csv: cannot open " + path.string());
    NoisyDataset ds;
    std::string header;
    if (!std::getline(in, header)) throw ContractError("load_csv: missing header");
    std::istringstream hs(header);
    std::size_t n = 0;
    std::string kind;
    if (!(hs >> ds.dim >> ds.classes >> n >> kind >> ds.spec.epsilon >> ds.spec.seed)) {
        throw ContractError("load_csv: malformed header: " + header);
    }
    ds.spec.kind = noise_kind_from_string(kind);
    ds.features.reserve(n * ds.dim);
    ds.clean_labels.reserve(n);
    ds.noisy_labels.reserve(n);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t start = 0;
        std::vector<double> cells;
        cells.reserve(ds.dim + 2);
        while (start <= line.size()) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) comma = line.size();
            double v = 0.0;
            auto res = std::from_chars(line.data() + start, line.data() + comma, v);
            if (res.ec != std::errc()) {
                throw ContractError("load_csv: bad cell in row " + std::to_string(ds.size()));
            }
            cells.push_back(v);
            start = comma + 1;
        }
        if (cells.size() != ds.dim + 2) {
            throw ContractError("load_csv: row has " + std::to_string(cells.size()) +
                                " cells, expected " + std::to_string(ds.dim + 2));
        }
        for (std::size_t d = 0; d < ds.dim; ++d) ds.features.push_back(cells[d]);
        ds.clean_labels.push_back(static_cast<int>(cells[ds.dim]));
        ds.noisy_labels.push_back(static_cast<int>(cells[ds.dim + 1]));
    }
    if (ds.size() != n) {
        throw ContractError("load_csv: header declares " + std::to_string(n) + " rows, found " +
                            std::to_string(ds.size()));
    }
    ds.refresh_is_clean();
    ds.validate();
    return ds;
}

}  // namespace alasca
