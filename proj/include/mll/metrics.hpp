#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mll/errors.hpp"
#include "mll/matrix.hpp"

namespace mll {

// ---------------------------------------------------------------------------
// Pair verification
// ---------------------------------------------------------------------------

struct VerificationPair {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    bool genuine = false;
};

struct PairProtocol {
    std::vector<VerificationPair> pairs;
    std::vector<int> fold; // same length as pairs, values in [0, num_folds)
    int num_folds = 0;

    void validate() const {
        if (num_folds < 2) throw DegenerateFoldError("PairProtocol: need >= 2 folds");
        if (fold.size() != pairs.size())
            throw LengthMismatchError("PairProtocol: fold assignment length mismatch");
        std::vector<int> genuine_count(num_folds, 0), impostor_count(num_folds, 0);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (fold[i] < 0 || fold[i] >= num_folds)
                throw IndexOutOfRangeError("PairProtocol: fold index out of range");
            (pairs[i].genuine ? genuine_count : impostor_count)[fold[i]]++;
        }
        for (int f = 0; f < num_folds; ++f)
            if (genuine_count[f] == 0 || impostor_count[f] == 0)
                throw DegenerateFoldError("PairProtocol: fold " + std::to_string(f) +
                                          " lacks genuine or impostor pairs");
    }
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = row_norm(a), nb = row_norm(b);
    if (na < 1e-30 || nb < 1e-30) throw ZeroRowError("cosine_similarity: zero vector");
    return dot(a, b) / (na * nb);
}

// Per-pair cosine similarities in protocol order.
inline std::vector<double> pair_scores(const Matrix& embeddings, const PairProtocol& proto) {
    std::vector<double> scores(proto.pairs.size());
    for (std::size_t i = 0; i < proto.pairs.size(); ++i) {
        const auto& p = proto.pairs[i];
        if (p.a >= embeddings.rows() || p.b >= embeddings.rows())
            throw IndexOutOfRangeError("pair_scores: pair " + std::to_string(i) +
                                       " references a missing embedding");
        scores[i] = cosine_similarity(embeddings.row(p.a), embeddings.row(p.b));
    }
    return scores;
}

struct ScoreLists {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

inline ScoreLists cosine_scores(const Matrix& embeddings, const PairProtocol& proto) {
    ScoreLists out;
    const std::vector<double> scores = pair_scores(embeddings, proto);
    for (std::size_t i = 0; i < scores.size(); ++i)
        (proto.pairs[i].genuine ? out.genuine : out.impostor).push_back(scores[i]);
    return out;
}

namespace detail {

// Accuracy of the rule "genuine iff score >= threshold" over a subset.
inline double threshold_accuracy(const std::vector<double>& scores,
                                 const std::vector<std::uint8_t>& genuine,
                                 const std::vector<std::size_t>& idx, double threshold) {
    std::size_t correct = 0;
    for (std::size_t i : idx) {
        const bool predicted = scores[i] >= threshold;
        if (predicted == static_cast<bool>(genuine[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

} // namespace detail

// k-fold verification accuracy with accuracy-maximizing threshold selection.
// For each fold the threshold is chosen over the remaining folds, scanning
// the midpoints of consecutive distinct scores plus the two infinities (an
// exhaustive set of decision-distinct candidates). The first maximizer wins,
// which keeps the result deterministic.
inline double verification_accuracy_kfold(const std::vector<double>& scores,
                                          const std::vector<std::uint8_t>& genuine,
                                          const std::vector<int>& fold, int num_folds) {
    if (num_folds < 2) throw DegenerateFoldError("verification_accuracy_kfold: k must be >= 2");
    if (scores.size() != genuine.size() || scores.size() != fold.size())
        throw LengthMismatchError("verification_accuracy_kfold: input lengths differ");

    double total = 0.0;
    for (int f = 0; f < num_folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < scores.size(); ++i)
            (fold[i] == f ? test : train).push_back(i);
        if (test.empty()) throw DegenerateFoldError("verification_accuracy_kfold: empty fold");

        bool has_genuine = false, has_impostor = false;
        std::vector<double> train_scores;
        train_scores.reserve(train.size());
        for (std::size_t i : train) {
            (genuine[i] ? has_genuine : has_impostor) = true;
            train_scores.push_back(scores[i]);
        }
        if (!has_genuine || !has_impostor)
            throw DegenerateFoldError("verification_accuracy_kfold: training split for fold " +
                                      std::to_string(f) + " has only one class of pairs");

        std::sort(train_scores.begin(), train_scores.end());
        train_scores.erase(std::unique(train_scores.begin(), train_scores.end()),
                           train_scores.end());
        std::vector<double> candidates;
        candidates.push_back(-std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i + 1 < train_scores.size(); ++i)
            candidates.push_back(0.5 * (train_scores[i] + train_scores[i + 1]));
        candidates.push_back(std::numeric_limits<double>::infinity());

        double best_acc = -1.0, best_threshold = candidates.front();
        for (double t : candidates) {
            const double acc = detail::threshold_accuracy(scores, genuine, train, t);
            if (acc > best_acc) {
                best_acc = acc;
                best_threshold = t;
            }
        }
        total += detail::threshold_accuracy(scores, genuine, test, best_threshold);
    }
    return total / static_cast<double>(num_folds);
}

inline double verification_accuracy_kfold(const Matrix& embeddings, const PairProtocol& proto) {
    proto.validate();
    const std::vector<double> scores = pair_scores(embeddings, proto);
    std::vector<std::uint8_t> genuine(proto.pairs.size());
    for (std::size_t i = 0; i < proto.pairs.size(); ++i) genuine[i] = proto.pairs[i].genuine;
    return verification_accuracy_kfold(scores, genuine, proto.fold, proto.num_folds);
}

// ---------------------------------------------------------------------------
// TAR @ FAR
// ---------------------------------------------------------------------------

struct TarResult {
    double tar = 0.0;
    double threshold = 0.0;
    // Set when |impostor| < 1/far_target: FAR quantization dominates there.
    bool insufficient_impostors = false;
};

// Threshold = the smallest candidate with empirical FAR <= far_target, where
// candidates are every observed score plus the first value above the largest
// impostor score (so a target below 1/|impostor| lands just past the
// impostors rather than at infinity). TAR counts genuine >= threshold.
inline TarResult tar_at_far(const std::vector<double>& genuine,
                            const std::vector<double>& impostor, double far_target) {
    if (genuine.empty() || impostor.empty())
        throw InvalidSpecError("tar_at_far: both score lists must be non-empty");
    if (!(far_target > 0.0 && far_target < 1.0))
        throw InvalidSpecError("tar_at_far: far_target must lie in (0, 1)");

    std::vector<double> candidates;
    candidates.reserve(genuine.size() + impostor.size() + 1);
    candidates.insert(candidates.end(), genuine.begin(), genuine.end());
    candidates.insert(candidates.end(), impostor.begin(), impostor.end());
    const double max_impostor = *std::max_element(impostor.begin(), impostor.end());
    candidates.push_back(std::nextafter(max_impostor, std::numeric_limits<double>::infinity()));
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<double> imp_sorted = impostor;
    std::sort(imp_sorted.begin(), imp_sorted.end());

    TarResult res;
    res.insufficient_impostors =
        static_cast<double>(impostor.size()) < 1.0 / far_target;
    for (double t : candidates) {
        // impostors >= t
        const auto it = std::lower_bound(imp_sorted.begin(), imp_sorted.end(), t);
        const double far = static_cast<double>(imp_sorted.end() - it) /
                           static_cast<double>(imp_sorted.size());
        if (far <= far_target) {
            res.threshold = t;
            std::size_t accepted = 0;
            for (double s : genuine)
                if (s >= t) ++accepted;
            res.tar = static_cast<double>(accepted) / static_cast<double>(genuine.size());
            return res;
        }
    }
    // unreachable: the sentinel past the max impostor always has FAR 0
    res.threshold = candidates.back();
    res.tar = 0.0;
    return res;
}

// ---------------------------------------------------------------------------
// Rank-1 identification
// ---------------------------------------------------------------------------

// A probe counts as correct when its highest-cosine gallery entry carries the
// same label; ties go to the lowest gallery index.
inline double rank1(const Matrix& probes, const std::vector<int>& probe_labels,
                    const Matrix& gallery, const std::vector<int>& gallery_labels) {
    if (gallery.rows() == 0) throw EmptyGalleryError("rank1: empty gallery");
    if (probes.rows() == 0) throw InvalidSpecError("rank1: empty probe set");
    if (probe_labels.size() != probes.rows() || gallery_labels.size() != gallery.rows())
        throw LengthMismatchError("rank1: label lengths differ from embeddings");
    if (probes.cols() != gallery.cols())
        throw DimensionMismatchError("rank1: probe and gallery dimensions differ");

    std::size_t correct = 0;
    for (std::size_t i = 0; i < probes.rows(); ++i) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < gallery.rows(); ++j) {
            const double s = cosine_similarity(probes.row(i), gallery.row(j));
            if (s > best_score) {
                best_score = s;
                best = j;
            }
        }
        if (gallery_labels[best] == probe_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probes.rows());
}

// ---------------------------------------------------------------------------
// 2-D class geometry
// ---------------------------------------------------------------------------

struct GeometryReport {
    std::vector<int> class_order;               // class ids sorted by centre polar angle
    Matrix class_centers;                       // one unit row per class, in class_order
    std::vector<double> consecutive_angles_deg; // gap i -> i+1 (wrapping); sums to 360
    std::vector<double> per_class_std;          // in class_order
    double mean_std = 0.0;
};

// Local helper: normalize rows of an N x 2 matrix (kept separate from the
// loss path so this header does not depend on loss.hpp).
inline Matrix l2_normalize_rows_2d(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = row_norm(m.row(i));
        if (norm < 1e-30)
            throw ZeroRowError("geometry_report: zero embedding row " + std::to_string(i));
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

// Geometry of normalized 2-D embeddings: class centres (normalized mean of
// the normalized embeddings), angular gaps between polar-adjacent centres,
// and the per-class spread (mean over the two coordinates of the
// coordinate-wise population std of the normalized embeddings).
inline GeometryReport geometry_report(const Matrix& embeddings, const std::vector<int>& labels) {
    if (embeddings.cols() != 2) throw RequiresTwoDError("geometry_report: embeddings must be 2-D");
    if (labels.size() != embeddings.rows())
        throw LengthMismatchError("geometry_report: labels length mismatch");
    int c = 0;
    for (int y : labels) {
        if (y < 0) throw IndexOutOfRangeError("geometry_report: negative label");
        c = std::max(c, y + 1);
    }
    std::vector<std::size_t> counts(c, 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    for (int k = 0; k < c; ++k)
        if (counts[k] == 0)
            throw InvalidSpecError("geometry_report: class " + std::to_string(k) + " is empty");

    const Matrix unit = l2_normalize_rows_2d(embeddings);

    // class centres and coordinate-wise spread
    Matrix centers(c, 2);
    std::vector<double> stds(c, 0.0);
    for (int k = 0; k < c; ++k) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < unit.rows(); ++i)
            if (labels[i] == k) {
                mx += unit(i, 0);
                my += unit(i, 1);
            }
        mx /= static_cast<double>(counts[k]);
        my /= static_cast<double>(counts[k]);
        double vx = 0.0, vy = 0.0;
        for (std::size_t i = 0; i < unit.rows(); ++i)
            if (labels[i] == k) {
                vx += (unit(i, 0) - mx) * (unit(i, 0) - mx);
                vy += (unit(i, 1) - my) * (unit(i, 1) - my);
            }
        vx /= static_cast<double>(counts[k]);
        vy /= static_cast<double>(counts[k]);
        stds[k] = 0.5 * (std::sqrt(vx) + std::sqrt(vy));
        const double norm = std::sqrt(mx * mx + my * my);
        if (norm < 1e-30)
            throw ZeroRowError("geometry_report: class " + std::to_string(k) +
                               " centre collapsed to the origin");
        centers(k, 0) = mx / norm;
        centers(k, 1) = my / norm;
    }

    GeometryReport rep;
    rep.class_order.resize(c);
    std::iota(rep.class_order.begin(), rep.class_order.end(), 0);
    std::vector<double> polar(c);
    for (int k = 0; k < c; ++k) polar[k] = std::atan2(centers(k, 1), centers(k, 0));
    std::stable_sort(rep.class_order.begin(), rep.class_order.end(),
                     [&](int a, int b) { return polar[a] < polar[b]; });

    rep.class_centers = Matrix(c, 2);
    rep.per_class_std.resize(c);
    for (int i = 0; i < c; ++i) {
        const int k = rep.class_order[i];
        rep.class_centers(i, 0) = centers(k, 0);
        rep.class_centers(i, 1) = centers(k, 1);
        rep.per_class_std[i] = stds[k];
    }
    rep.consecutive_angles_deg.resize(c);
    constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
    double gap_sum = 0.0;
    for (int i = 0; i + 1 < c; ++i) {
        const double gap = (polar[rep.class_order[i + 1]] - polar[rep.class_order[i]]) * kRadToDeg;
        rep.consecutive_angles_deg[i] = gap;
        gap_sum += gap;
    }
    rep.consecutive_angles_deg[c - 1] = 360.0 - gap_sum; // wrap-around gap
    double std_sum = 0.0;
    for (double s : rep.per_class_std) std_sum += s;
    rep.mean_std = std_sum / static_cast<double>(c);
    return rep;
}

// ---------------------------------------------------------------------------
// Borda count
// ---------------------------------------------------------------------------

struct BordaTable {
    std::vector<std::string> config_names;
    std::vector<std::string> benchmark_names;
    Matrix accuracy;                  // configs x benchmarks
    std::vector<std::vector<int>> bc; // configs x benchmarks
    std::vector<int> bc_sum;          // per config
    std::vector<std::size_t> group_start; // first config index of each group
    std::vector<std::size_t> selected;    // per group: config index with the top BC sum
};

// Within each group and benchmark, configs are ranked by accuracy descending
// and awarded BC = n - rank + 1 points; an exact tie block shares the best
// (largest) count of its positions. Singleton groups degenerate to BC = 1.
inline BordaTable borda_count(std::vector<std::string> config_names,
                              std::vector<std::string> benchmark_names, Matrix accuracy,
                              std::vector<std::size_t> group_start) {
    const std::size_t n_cfg = accuracy.rows(), n_bench = accuracy.cols();
    if (config_names.size() != n_cfg)
        throw LengthMismatchError("borda_count: config name count mismatch");
    if (benchmark_names.size() != n_bench)
        throw LengthMismatchError("borda_count: benchmark name count mismatch");
    if (group_start.empty() || group_start.front() != 0)
        throw InvalidSpecError("borda_count: group boundaries must start at 0");
    for (std::size_t g = 1; g < group_start.size(); ++g)
        if (group_start[g] <= group_start[g - 1] || group_start[g] >= n_cfg)
            throw InvalidSpecError("borda_count: group boundaries must be increasing");

    BordaTable table;
    table.config_names = std::move(config_names);
    table.benchmark_names = std::move(benchmark_names);
    table.accuracy = std::move(accuracy);
    table.bc.assign(n_cfg, std::vector<int>(n_bench, 0));
    table.bc_sum.assign(n_cfg, 0);
    table.group_start = group_start;

    for (std::size_t g = 0; g < group_start.size(); ++g) {
        const std::size_t lo = group_start[g];
        const std::size_t hi = (g + 1 < group_start.size()) ? group_start[g + 1] : n_cfg;
        const std::size_t n = hi - lo;
        for (std::size_t b = 0; b < n_bench; ++b) {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), lo);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                return table.accuracy(x, b) > table.accuracy(y, b);
            });
            std::size_t pos = 0;
            while (pos < n) {
                std::size_t end = pos;
                while (end + 1 < n &&
                       table.accuracy(order[end + 1], b) == table.accuracy(order[pos], b))
                    ++end;
                const int bc = static_cast<int>(n - pos); // best rank of the tied block
                for (std::size_t t = pos; t <= end; ++t) table.bc[order[t]][b] = bc;
                pos = end + 1;
            }
        }
        for (std::size_t i = lo; i < hi; ++i)
            table.bc_sum[i] = std::accumulate(table.bc[i].begin(), table.bc[i].end(), 0);
        std::size_t best = lo;
        for (std::size_t i = lo + 1; i < hi; ++i)
            if (table.bc_sum[i] > table.bc_sum[best]) best = i;
        table.selected.push_back(best);
    }
    return table;
}

} // namespace mll
