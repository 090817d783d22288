#pragma once

#include <cmath>
#include <cstdint>

namespace mll {

// SplitMix64 stream with a Box-Muller normal transform on top.
//
// The generator and the transform are pinned here instead of delegating to
// <random> because std::normal_distribution is not specified bit-for-bit
// across standard libraries; a seed written into run metadata must replay
// the exact same draws everywhere. Every gaussian consumes exactly two
// 64-bit steps (no spare caching), so the stream position is fully captured
// by the single state word.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // index in [0, n); modulo bias is ~n/2^64 and irrelevant at our sizes
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // standard normal, Box-Muller (cosine branch only)
    double next_gaussian() {
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * next_gaussian(); }

    // Derives an independent child stream. Each run / subsystem gets its own
    // stream index so that one consumer drawing more or fewer values cannot
    // shift any other consumer's sequence.
    Rng split(std::uint64_t stream) const {
        std::uint64_t z = state_ ^ (0xa3ec647659359acdull * (stream + 1));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t state() const { return state_; }

    // Identifier recorded in run metadata so outputs can be reproduced
    // from the seed alone.
    static constexpr const char* kGeneratorName = "splitmix64/box-muller";

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::uint64_t state_;
};

} // namespace mll
