#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pmnet {

// Error taxonomy. The CLI maps these to exit codes:
//   usage error -> 1, TopologyError/IoError -> 2, NumericalError -> 3.
struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// SplitMix64 generator. Hand-rolled so that streams are identical across
// platforms and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // derive an independent stream, e.g. per subject or per sequence
    static uint64_t mix(uint64_t seed, uint64_t salt) {
        Rng r(seed ^ (0x9e3779b97f4a7c15ull * (salt + 1)));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

// FNV-1a, used for content hashes in run manifests and param freeze checks.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace pmnet
