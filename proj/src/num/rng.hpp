#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedsilo::num {

// Counter-based pseudorandom generator built on splitmix64. Every draw is a
// pure function of (key, counter), so streams are reproducible across
// platforms and independent of call interleaving.
class CounterRng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    explicit CounterRng(std::uint64_t key) : key_(key) {}

    // Derives a stream key from a seed and a label (e.g. a segment name).
    static CounterRng keyed(std::uint64_t seed, std::string_view label) {
        return CounterRng(mix(seed ^ fnv1a(label)));
    }

    // Derives a sub-stream, e.g. keyed(seed,"shuffle").fork(round).fork(epoch).
    CounterRng fork(std::uint64_t salt) const { return CounterRng(mix(key_ ^ mix(salt + kGolden))); }

    std::uint64_t bits(std::uint64_t counter) const { return mix(key_ + (counter + 1) * kGolden); }

    // Uniform in [0, 1).
    double uniform01(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    double uniform(std::uint64_t counter, double lo, double hi) const {
        return lo + (hi - lo) * uniform01(counter);
    }

    // Standard normal via Box-Muller; consumes counters 2c and 2c+1.
    double gaussian(std::uint64_t counter) const {
        double u1 = (static_cast<double>(bits(2 * counter) >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        double u2 = uniform01(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
        return static_cast<std::uint64_t>(uniform01(counter) * static_cast<double>(n));
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
};

// Deterministic Fisher-Yates over [0, n) driven by a counter stream.
inline std::vector<std::size_t> shuffled_indices(const CounterRng& rng, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i, i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace fedsilo::num
