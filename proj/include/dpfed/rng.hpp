#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dpfed {

// SplitMix64 finalizer. Used to derive independent stream seeds from a
// master seed; every randomized component gets its own derived stream so
// that adding clients or rounds never perturbs unrelated draws.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stream tags keep derivation paths disjoint by purpose.
namespace stream {
inline constexpr std::uint64_t kData = 0x01;
inline constexpr std::uint64_t kPartition = 0x02;
inline constexpr std::uint64_t kInit = 0x03;
inline constexpr std::uint64_t kBatchOrder = 0x04;
inline constexpr std::uint64_t kNoise = 0x05;
inline constexpr std::uint64_t kWarmStart = 0x06;
inline constexpr std::uint64_t kShardShuffle = 0x07;
}  // namespace stream

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(master);
    for (std::uint64_t p : path) h = mix64(h ^ p);
    return h;
}

// Deterministic generator wrapper. All floating-point draws consume a fixed
// number of engine outputs (uniform: 1, gaussian: 2), which makes sampled
// sequences replayable draw by draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform_open01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform on [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on the open symmetric interval (-0.5, 0.5).
    double uniform_sym() { return uniform_open01() - 0.5; }

    // Standard normal via Box-Muller, always two engine outputs.
    double gaussian() {
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    // Uniform integer in [0, n). Modulo bias is irrelevant at the scales
    // used here; determinism across platforms is what matters.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::mt19937_64 engine_;
};

}  // namespace dpfed
