#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mll/errors.hpp"
#include "mll/rng.hpp"

namespace mll {

// One batch worth of margin values plus the generator position right after
// the draw, so any training iteration can be replayed from a logged state.
struct MarginDraw {
    std::vector<double> values;
    std::uint64_t seed_state = 0;
};

// n independent draws from N(mean, stddev^2).
//
// stddev == 0 short-circuits to the constant vector and leaves the stream
// untouched. This is what makes an elastic loss with sigma = 0 follow the
// exact floating-point path of its fixed-margin counterpart.
inline MarginDraw sample_margins(std::size_t n, double mean, double stddev, Rng& rng) {
    if (n < 1) throw InvalidSpecError("sample_margins: n must be >= 1");
    if (stddev < 0.0) throw NegativeSigmaError("sample_margins: stddev must be >= 0");
    MarginDraw draw;
    draw.values.assign(n, mean);
    if (stddev > 0.0)
        for (std::size_t i = 0; i < n; ++i) draw.values[i] = rng.gaussian(mean, stddev);
    draw.seed_state = rng.state();
    return draw;
}

// Proximity-guided margin assignment: margins sorted descending are paired
// with samples sorted by cos(theta_target) ascending, then returned in the
// original sample order. The sample farthest from its class centre (smallest
// cosine) therefore receives the largest drawn margin. Ties on either side
// break by original index (stable sort), keeping the pairing deterministic.
inline std::vector<double> assign_margins_plus(const std::vector<double>& margins,
                                               const std::vector<double>& cos_target) {
    if (margins.size() != cos_target.size())
        throw LengthMismatchError("assign_margins_plus: margins and cos_target lengths differ");
    const std::size_t n = margins.size();

    std::vector<std::size_t> by_margin_desc(n);
    std::iota(by_margin_desc.begin(), by_margin_desc.end(), std::size_t{0});
    std::stable_sort(by_margin_desc.begin(), by_margin_desc.end(),
                     [&](std::size_t a, std::size_t b) { return margins[a] > margins[b]; });

    std::vector<std::size_t> by_cos_asc(n);
    std::iota(by_cos_asc.begin(), by_cos_asc.end(), std::size_t{0});
    std::stable_sort(by_cos_asc.begin(), by_cos_asc.end(),
                     [&](std::size_t a, std::size_t b) { return cos_target[a] < cos_target[b]; });

    std::vector<double> assigned(n);
    for (std::size_t k = 0; k < n; ++k)
        assigned[by_cos_asc[k]] = margins[by_margin_desc[k]];
    return assigned;
}

} // namespace mll
