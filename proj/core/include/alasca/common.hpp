#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alasca {

// Shape/dimension violations (e.g. feeding a 3-vector into a 2-input layer).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition violations on an operation's inputs.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required, or training divergence.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// FNV-1a over raw bytes. Used for config digests and theory-report input digests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::span<const double> v,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

// Evaluation-parallelism cap from ALASCA_THREADS (default 1). Training stays
// single-threaded regardless; only per-instance read-only sweeps fan out.
int eval_thread_cap();

// Runs fn(i) for i in [0, n). Each fn(i) must write only to its own output
// slot; results are then reduced by the caller in index order, so the outcome
// is identical for any thread count.
void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t)>& fn);

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(what) + ": non-finite input");
        }
    }
}

}  // namespace alasca
