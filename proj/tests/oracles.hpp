#pragma once

// Independent reference implementations used only by tests. Everything here
// is written scalar-wise against the loss definitions, deliberately not
// sharing code with the library path it checks. Cross-entropy reductions run
// in long double so the references carry more precision than the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "mll/loss.hpp"
#include "mll/matrix.hpp"

namespace oracle {

inline long double stable_ce_row(const std::vector<long double>& logits, int label) {
    long double zmax = logits[0];
    for (long double z : logits) zmax = std::max(zmax, z);
    const long double zy = logits[static_cast<std::size_t>(label)];
    if (zy == zmax) {
        // log1p of the competitor mass, exact where log(1 + eps) rounds away
        long double rest = 0.0L;
        for (std::size_t j = 0; j < logits.size(); ++j)
            if (j != static_cast<std::size_t>(label)) rest += std::exp(logits[j] - zmax);
        return std::log1p(rest);
    }
    long double denom = 0.0L;
    for (long double z : logits) denom += std::exp(z - zmax);
    return std::log(denom) - (zy - zmax);
}

// Scalar softmax cross-entropy over a row-major logit matrix.
inline std::vector<long double> softmax_ce(const mll::Matrix& logits,
                                           const std::vector<int>& labels) {
    std::vector<long double> out;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::vector<long double> row(logits.cols());
        for (std::size_t j = 0; j < logits.cols(); ++j) row[j] = logits(i, j);
        out.push_back(stable_ce_row(row, labels[i]));
    }
    return out;
}

// Scalar evaluation of the whole margin-softmax family, given the margins.
// Normalization, cosines, margin transform, scale and cross-entropy are all
// re-derived here from the loss definitions, one scalar at a time.
inline std::vector<long double> margin_loss_per_sample(
    const mll::Matrix& features, const std::vector<int>& labels, const mll::Matrix& weights,
    mll::Family family, const std::vector<double>& margins, double scale) {
    const std::size_t n = features.rows(), d = features.cols(), c = weights.rows();
    std::vector<long double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        long double xnorm = 0.0L;
        for (std::size_t k = 0; k < d; ++k)
            xnorm += static_cast<long double>(features(i, k)) * features(i, k);
        xnorm = std::sqrt(xnorm);
        std::vector<long double> logits(c);
        for (std::size_t j = 0; j < c; ++j) {
            long double wnorm = 0.0L, dotv = 0.0L;
            for (std::size_t k = 0; k < d; ++k) {
                wnorm += static_cast<long double>(weights(j, k)) * weights(j, k);
                dotv += static_cast<long double>(features(i, k)) * weights(j, k);
            }
            wnorm = std::sqrt(wnorm);
            if (family == mll::Family::PlainSoftmax) {
                logits[j] = dotv;
                continue;
            }
            long double cosv = dotv / (xnorm * wnorm);
            const long double bound = 1.0L - 1e-7L;
            cosv = std::clamp(cosv, -bound, bound);
            if (j == static_cast<std::size_t>(labels[i])) {
                const long double m = margins[i];
                switch (family) {
                    case mll::Family::AdditiveAngular:
                        if (m != 0.0L) cosv = std::cos(std::acos(cosv) + m);
                        break;
                    case mll::Family::AdditiveCosine:
                        if (m != 0.0L) cosv = cosv - m;
                        break;
                    case mll::Family::Multiplicative:
                        if (m != 1.0L) cosv = std::cos(m * std::acos(cosv));
                        break;
                    default:
                        break;
                }
            }
            logits[j] = static_cast<long double>(scale) * cosv;
        }
        losses[i] = stable_ce_row(logits, labels[i]);
    }
    return losses;
}

// Central finite differences of mean loss over every raw feature and weight
// entry, holding margins fixed.
struct FiniteDiff {
    mll::Matrix features; // same shape as the batch features
    mll::Matrix weights;  // same shape as the class weights
};

inline FiniteDiff finite_difference_gradients(const mll::EmbeddingBatch& batch,
                                              const mll::ClassWeights& weights,
                                              const mll::MarginSpec& spec,
                                              const std::vector<double>& margins,
                                              double h = 1e-5) {
    FiniteDiff fd;
    fd.features = mll::Matrix(batch.features.rows(), batch.features.cols());
    fd.weights = mll::Matrix(weights.weights.rows(), weights.weights.cols());

    auto eval = [&](const mll::EmbeddingBatch& b, const mll::ClassWeights& w) {
        return mll::forward_with_margins(b, w, spec, margins).mean_loss;
    };
    for (std::size_t k = 0; k < batch.features.size(); ++k) {
        mll::EmbeddingBatch b = batch;
        b.features[k] = batch.features[k] + h;
        const double up = eval(b, weights);
        b.features[k] = batch.features[k] - h;
        const double down = eval(b, weights);
        fd.features[k] = (up - down) / (2.0 * h);
    }
    for (std::size_t k = 0; k < weights.weights.size(); ++k) {
        mll::ClassWeights w = weights;
        w.weights[k] = weights.weights[k] + h;
        const double up = eval(batch, w);
        w.weights[k] = weights.weights[k] - h;
        const double down = eval(batch, w);
        fd.weights[k] = (up - down) / (2.0 * h);
    }
    return fd;
}

// Elementwise gradient comparison: relative error below tol with an absolute
// floor for entries near zero.
inline bool gradients_match(const mll::Matrix& analytic, const mll::Matrix& reference,
                            double rel_tol = 1e-5, double abs_floor = 1e-8,
                            double* worst = nullptr) {
    bool ok = true;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double diff = std::abs(analytic[k] - reference[k]);
        const double denom = std::max(std::abs(analytic[k]), std::abs(reference[k]));
        const double rel = diff / std::max(denom, abs_floor);
        if (worst && rel > *worst && diff > abs_floor) *worst = rel;
        if (diff > abs_floor && rel > rel_tol) ok = false;
    }
    return ok;
}

// Brute-force metric references: exhaustive candidate scans with plain
// counting loops, per the operation definitions.

inline double kfold_accuracy(const std::vector<double>& scores,
                             const std::vector<std::uint8_t>& genuine,
                             const std::vector<int>& fold, int k) {
    double total = 0.0;
    for (int f = 0; f < k; ++f) {
        std::vector<double> train_sorted;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (fold[i] != f) train_sorted.push_back(scores[i]);
        std::sort(train_sorted.begin(), train_sorted.end());
        train_sorted.erase(std::unique(train_sorted.begin(), train_sorted.end()),
                           train_sorted.end());
        std::vector<double> candidates{-std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i + 1 < train_sorted.size(); ++i)
            candidates.insert(candidates.end() - 1, (train_sorted[i] + train_sorted[i + 1]) / 2.0);
        double best_acc = -1.0, best_t = candidates.front();
        for (double t : candidates) {
            std::size_t ok = 0, n = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                if (fold[i] == f) continue;
                ++n;
                if ((scores[i] >= t) == static_cast<bool>(genuine[i])) ++ok;
            }
            const double acc = static_cast<double>(ok) / static_cast<double>(n);
            if (acc > best_acc) {
                best_acc = acc;
                best_t = t;
            }
        }
        std::size_t ok = 0, n = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (fold[i] != f) continue;
            ++n;
            if ((scores[i] >= best_t) == static_cast<bool>(genuine[i])) ++ok;
        }
        total += static_cast<double>(ok) / static_cast<double>(n);
    }
    return total / k;
}

inline double tar_at_far(const std::vector<double>& genuine, const std::vector<double>& impostor,
                         double target) {
    std::vector<double> candidates = genuine;
    candidates.insert(candidates.end(), impostor.begin(), impostor.end());
    double max_imp = impostor[0];
    for (double v : impostor) max_imp = std::max(max_imp, v);
    candidates.push_back(std::nextafter(max_imp, std::numeric_limits<double>::infinity()));
    std::sort(candidates.begin(), candidates.end());
    for (double t : candidates) {
        std::size_t fa = 0;
        for (double v : impostor)
            if (v >= t) ++fa;
        if (static_cast<double>(fa) / impostor.size() <= target) {
            std::size_t ta = 0;
            for (double v : genuine)
                if (v >= t) ++ta;
            return static_cast<double>(ta) / genuine.size();
        }
    }
    return 0.0;
}

inline double rank1(const mll::Matrix& probes, const std::vector<int>& plabels,
                    const mll::Matrix& gallery, const std::vector<int>& glabels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probes.rows(); ++i) {
        double best = -1e300;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < gallery.rows(); ++j) {
            double d = 0, na = 0, nb = 0;
            for (std::size_t k = 0; k < probes.cols(); ++k) {
                d += probes(i, k) * gallery(j, k);
                na += probes(i, k) * probes(i, k);
                nb += gallery(j, k) * gallery(j, k);
            }
            const double s = d / (std::sqrt(na) * std::sqrt(nb));
            if (s > best) {
                best = s;
                arg = j;
            }
        }
        if (glabels[arg] == plabels[i]) ++hits;
    }
    return static_cast<double>(hits) / probes.rows();
}

} // namespace oracle
