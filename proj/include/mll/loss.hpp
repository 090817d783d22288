#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mll/errors.hpp"
#include "mll/margins.hpp"
#include "mll/matrix.hpp"
#include "mll/rng.hpp"

namespace mll {

// ---------------------------------------------------------------------------
// Spec types
// ---------------------------------------------------------------------------

enum class Family {
    PlainSoftmax,    // raw dot-product logits, no normalization, no scale
    ModifiedSoftmax, // normalized cosine logits scaled by s, no margin
    Multiplicative,  // target angle multiplied: cos(m1 * theta)
    AdditiveAngular, // target angle shifted: cos(theta + m2)
    AdditiveCosine,  // target cosine shifted: cos(theta) - m3
};

inline const char* family_name(Family f) {
    switch (f) {
        case Family::PlainSoftmax: return "softmax";
        case Family::ModifiedSoftmax: return "modified";
        case Family::Multiplicative: return "multiplicative";
        case Family::AdditiveAngular: return "arc";
        case Family::AdditiveCosine: return "cos";
    }
    return "?";
}

struct ElasticParams {
    double mean = 0.0;   // margin distribution mean
    double stddev = 0.0; // margin distribution sigma; 0 collapses to fixed margin
};

struct MarginSpec {
    Family family = Family::PlainSoftmax;
    // Fixed margin value: angle multiplier for Multiplicative, radians for
    // AdditiveAngular, cosine units for AdditiveCosine. Ignored when elastic
    // is set (the elastic mean takes over) and for the softmax families.
    double margin = 0.0;
    std::optional<ElasticParams> elastic;
    bool plus = false;  // proximity-sorted assignment of drawn margins
    double scale = 64.0;
    // Optional clamp applied to drawn margins. Off by default: the sampling
    // distribution is untruncated, so large sigma may produce negative draws.
    std::optional<std::pair<double, double>> margin_clamp;

    void validate() const {
        if (scale <= 0.0) throw InvalidSpecError("MarginSpec: scale must be > 0");
        if (elastic) {
            if (family != Family::AdditiveAngular && family != Family::AdditiveCosine)
                throw InvalidSpecError("MarginSpec: elastic margins are defined only for the "
                                       "arc and cos families");
            if (elastic->stddev < 0.0) throw NegativeSigmaError("MarginSpec: elastic stddev < 0");
        }
        if (plus && !elastic)
            throw InvalidSpecError("MarginSpec: plus requires elastic parameters");
        if (margin_clamp && margin_clamp->first > margin_clamp->second)
            throw InvalidSpecError("MarginSpec: empty margin clamp range");
    }

    // Named constructors for the common configurations.
    static MarginSpec plain_softmax() { return {Family::PlainSoftmax, 0.0, {}, false, 1.0, {}}; }
    static MarginSpec modified_softmax(double s = 64.0) {
        return {Family::ModifiedSoftmax, 0.0, {}, false, s, {}};
    }
    static MarginSpec sphere(double m1, double s = 64.0) {
        return {Family::Multiplicative, m1, {}, false, s, {}};
    }
    static MarginSpec arc(double m2, double s = 64.0) {
        return {Family::AdditiveAngular, m2, {}, false, s, {}};
    }
    static MarginSpec cos_margin(double m3, double s = 64.0) {
        return {Family::AdditiveCosine, m3, {}, false, s, {}};
    }
    static MarginSpec elastic_arc(double m, double sigma, double s = 64.0, bool plus = false) {
        return {Family::AdditiveAngular, m, ElasticParams{m, sigma}, plus, s, {}};
    }
    static MarginSpec elastic_cos(double m, double sigma, double s = 64.0, bool plus = false) {
        return {Family::AdditiveCosine, m, ElasticParams{m, sigma}, plus, s, {}};
    }
};

struct EmbeddingBatch {
    Matrix features;         // N x d
    std::vector<int> labels; // length N, values in [0, c)
};

struct ClassWeights {
    Matrix weights; // c x d, one row per class; no bias exists anywhere
};

struct LossOutput {
    double mean_loss = 0.0;
    std::vector<double> per_sample_loss; // length N
    // Pre-margin logits: clamped cosines for the normalized families, raw
    // dot products under PlainSoftmax.
    Matrix cos_theta;
    Matrix modified_logits; // post-margin, post-scale
    Matrix grad_features;   // d mean_loss / d raw features, N x d
    Matrix grad_weights;    // d mean_loss / d raw weights, c x d
    std::vector<double> margins_used; // length N; all zero for the softmax families
    // Diagnostics. angle_overflow_count is the number of target entries with
    // theta + m > pi, where the arc transform stops being monotone in theta.
    int angle_overflow_count = 0;
    bool instability_fallback = false;
};

// ---------------------------------------------------------------------------
// Numeric guards
// ---------------------------------------------------------------------------

inline constexpr double kCosBound = 1.0 - 1e-7;   // cosine clamp before any acos
inline constexpr double kZeroRowNorm = 1e-30;     // rows below this norm are rejected
inline constexpr double kSinThetaFloor = 1e-6;    // backward pole guard

// ---------------------------------------------------------------------------
// Building-block operations
// ---------------------------------------------------------------------------

inline Matrix l2_normalize_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = row_norm(m.row(i));
        if (norm < kZeroRowNorm)
            throw ZeroRowError("l2_normalize_rows: row " + std::to_string(i) + " has ~zero norm");
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

// Pairwise cosines between normalized rows, clamped away from +-1 so that a
// downstream acos and its derivative stay finite.
inline Matrix cosine_logits(const Matrix& features_norm, const Matrix& weights_norm) {
    if (features_norm.cols() != weights_norm.cols())
        throw DimensionMismatchError("cosine_logits: feature dim " +
                                     std::to_string(features_norm.cols()) + " vs weight dim " +
                                     std::to_string(weights_norm.cols()));
    Matrix out(features_norm.rows(), weights_norm.rows());
    for (std::size_t i = 0; i < features_norm.rows(); ++i)
        for (std::size_t j = 0; j < weights_norm.rows(); ++j) {
            double c = dot(features_norm.row(i), weights_norm.row(j));
            if (c > kCosBound) c = kCosBound;
            if (c < -kCosBound) c = -kCosBound;
            out(i, j) = c;
        }
    return out;
}

struct SoftmaxResult {
    double mean_loss = 0.0;
    std::vector<double> per_sample_loss;
    Matrix probabilities; // rows sum to 1
};

// Cross-entropy over softmax probabilities, max-shifted for stability.
inline SoftmaxResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows())
        throw DimensionMismatchError("softmax_cross_entropy: labels length != rows");
    if (!all_finite(logits))
        throw NonFiniteInputError("softmax_cross_entropy: non-finite logit");
    const std::size_t n = logits.rows(), c = logits.cols();
    SoftmaxResult res;
    res.per_sample_loss.resize(n);
    res.probabilities = Matrix(n, c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw IndexOutOfRangeError("softmax_cross_entropy: label out of range");
        double zmax = logits(i, 0);
        for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(logits(i, j) - zmax);
            res.probabilities(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < c; ++j) res.probabilities(i, j) /= denom;
        // When the target attains the row max the loss is log1p of the
        // competitor mass, which stays exact long after log(denom) would
        // round to zero.
        const double zy = logits(i, static_cast<std::size_t>(y));
        if (zy == zmax) {
            double rest = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                if (j != static_cast<std::size_t>(y)) rest += std::exp(logits(i, j) - zmax);
            res.per_sample_loss[i] = std::log1p(rest);
        } else {
            res.per_sample_loss[i] = std::log(denom) - (zy - zmax);
        }
        total += res.per_sample_loss[i];
    }
    res.mean_loss = total / static_cast<double>(n);
    return res;
}

// Applies the per-sample margin to the target entries only. ModifiedSoftmax
// is the identity; PlainSoftmax has no margin semantics at all and is
// rejected. The identity margin (0 for the additive families, 1 for the
// multiplicative family) leaves entries bit-for-bit untouched.
inline Matrix apply_margin(const Matrix& cos_theta, const std::vector<int>& labels,
                           const std::vector<double>& margins, Family family) {
    if (family == Family::PlainSoftmax)
        throw InvalidFamilyError("apply_margin: margins are undefined for plain softmax");
    if (labels.size() != cos_theta.rows())
        throw DimensionMismatchError("apply_margin: labels length != rows");
    if (margins.size() != cos_theta.rows())
        throw LengthMismatchError("apply_margin: margins length != rows");
    for (double m : margins)
        if (!std::isfinite(m)) throw NonFiniteInputError("apply_margin: non-finite margin");

    Matrix out = cos_theta;
    if (family == Family::ModifiedSoftmax) return out;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= out.cols()) throw IndexOutOfRangeError("apply_margin: label out of range");
        const double m = margins[i];
        const double t = out(i, y);
        switch (family) {
            case Family::AdditiveAngular:
                if (m != 0.0) out(i, y) = std::cos(std::acos(t) + m);
                break;
            case Family::AdditiveCosine:
                if (m != 0.0) out(i, y) = t - m;
                break;
            case Family::Multiplicative:
                if (m != 1.0) out(i, y) = std::cos(m * std::acos(t));
                break;
            default:
                break;
        }
    }
    return out;
}

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

// Derivative of the margin transform at the target entry,
// d modified / d cos(theta), evaluated from the clamped cosine. Near the
// poles (|sin theta| < kSinThetaFloor) the angle is clamped to the floor
// before evaluating, which bounds the quotient; note the cosine clamp in
// cosine_logits already keeps sin(theta) >= ~4.5e-4, so the guard is a
// second line of defense for externally constructed outputs.
inline double margin_transform_derivative(Family family, double cos_t, double m,
                                          bool* fallback_flag) {
    if (family == Family::ModifiedSoftmax || family == Family::AdditiveCosine) return 1.0;
    if (family == Family::AdditiveAngular && m == 0.0) return 1.0;
    if (family == Family::Multiplicative && m == 1.0) return 1.0;
    double theta = std::acos(cos_t);
    double sin_t = std::sin(theta);
    if (sin_t < kSinThetaFloor) {
        const double floor_angle = std::asin(kSinThetaFloor);
        theta = (theta < kHalfPi) ? floor_angle : kPi - floor_angle;
        sin_t = kSinThetaFloor;
        if (fallback_flag) *fallback_flag = true;
    }
    if (family == Family::AdditiveAngular) return std::sin(theta + m) / sin_t;
    return m * std::sin(m * theta) / sin_t; // Multiplicative
}

inline void check_batch(const EmbeddingBatch& batch, const ClassWeights& weights) {
    if (batch.features.rows() < 1) throw InvalidSpecError("loss: empty batch");
    if (batch.features.cols() < 2) throw InvalidSpecError("loss: feature dim must be >= 2");
    if (weights.weights.rows() < 2) throw InvalidSpecError("loss: need >= 2 classes");
    if (batch.features.cols() != weights.weights.cols())
        throw DimensionMismatchError("loss: feature dim != weight dim");
    if (batch.labels.size() != batch.features.rows())
        throw DimensionMismatchError("loss: labels length != batch size");
    for (int y : batch.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= weights.weights.rows())
            throw IndexOutOfRangeError("loss: label out of range");
    if (!all_finite(batch.features) || !all_finite(weights.weights))
        throw NonFiniteInputError("loss: non-finite input");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

// Forward pass with margins already materialized (one value per sample).
// Gradients are left empty; margin_softmax_loss fills them. This is also the
// function finite differencing perturbs, since drawn margins are treated as
// constants.
inline LossOutput forward_with_margins(const EmbeddingBatch& batch, const ClassWeights& weights,
                                       const MarginSpec& spec, const std::vector<double>& margins) {
    detail::check_batch(batch, weights);
    const std::size_t n = batch.features.rows();
    if (margins.size() != n) throw LengthMismatchError("forward_with_margins: margins length");

    LossOutput out;
    out.margins_used = margins;

    if (spec.family == Family::PlainSoftmax) {
        // Bias-free raw logits; no normalization and no scale on this path.
        Matrix logits(n, weights.weights.rows());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < weights.weights.rows(); ++j)
                logits(i, j) = dot(batch.features.row(i), weights.weights.row(j));
        out.cos_theta = logits;
        out.modified_logits = logits;
    } else {
        const Matrix xn = l2_normalize_rows(batch.features);
        const Matrix wn = l2_normalize_rows(weights.weights);
        out.cos_theta = cosine_logits(xn, wn);
        Matrix modified = apply_margin(out.cos_theta, batch.labels, margins, spec.family);
        for (std::size_t k = 0; k < modified.size(); ++k) modified[k] *= spec.scale;
        out.modified_logits = std::move(modified);
        if (spec.family == Family::AdditiveAngular) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto y = static_cast<std::size_t>(batch.labels[i]);
                if (std::acos(out.cos_theta(i, y)) + margins[i] > detail::kPi)
                    ++out.angle_overflow_count;
            }
        }
    }

    SoftmaxResult sm = softmax_cross_entropy(out.modified_logits, batch.labels);
    out.mean_loss = sm.mean_loss;
    out.per_sample_loss = std::move(sm.per_sample_loss);
    return out;
}

struct Gradients {
    Matrix features; // N x d
    Matrix weights;  // c x d
    bool instability_fallback = false;
};

// Gradients of mean_loss w.r.t. the raw (pre-normalization) features and
// weights. margins_used are treated as constants: the margin sampling and
// the plus assignment are not differentiated. Chain, per sample i and class
// j with t = cos(theta):
//   dL/dz = (p - onehot)/N,  z = s * g(t),  g' from the margin transform,
//   dt/dxhat = what_j,       dxhat/dx = (I - xhat xhat^T)/||x||.
// Entries where the cosine clamp was active contribute zero.
inline Gradients loss_backward(const LossOutput& out, const EmbeddingBatch& batch,
                               const ClassWeights& weights, const MarginSpec& spec) {
    detail::check_batch(batch, weights);
    const std::size_t n = batch.features.rows();
    const std::size_t d = batch.features.cols();
    const std::size_t c = weights.weights.rows();

    Gradients g;
    g.features = Matrix(n, d);
    g.weights = Matrix(c, d);

    // Probabilities recomputed from the stored logits: same function, same
    // input, hence the exact forward values.
    const SoftmaxResult sm = softmax_cross_entropy(out.modified_logits, batch.labels);

    if (spec.family == Family::PlainSoftmax) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto y = static_cast<std::size_t>(batch.labels[i]);
            for (std::size_t j = 0; j < c; ++j) {
                const double dz = (sm.probabilities(i, j) - (j == y ? 1.0 : 0.0)) /
                                  static_cast<double>(n);
                for (std::size_t k = 0; k < d; ++k) {
                    g.features(i, k) += dz * weights.weights(j, k);
                    g.weights(j, k) += dz * batch.features(i, k);
                }
            }
        }
        return g;
    }

    const Matrix xn = l2_normalize_rows(batch.features);
    const Matrix wn = l2_normalize_rows(weights.weights);

    // dL/d cos(theta), with the margin-transform derivative on target
    // entries and the clamp mask everywhere.
    Matrix dcos(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        const double gprime = detail::margin_transform_derivative(
            spec.family, out.cos_theta(i, y), out.margins_used[i], &g.instability_fallback);
        for (std::size_t j = 0; j < c; ++j) {
            const double raw = dot(xn.row(i), wn.row(j));
            if (raw > kCosBound || raw < -kCosBound) continue; // clamped: locally constant
            double dz = (sm.probabilities(i, j) - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
            dz *= spec.scale;
            dcos(i, j) = (j == y) ? dz * gprime : dz;
        }
    }

    // Through the normalization Jacobian (I - xhat xhat^T)/||x||.
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = row_norm(batch.features.row(i));
        std::vector<double> dxhat(d, 0.0);
        for (std::size_t j = 0; j < c; ++j) {
            const double dc = dcos(i, j);
            if (dc == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) dxhat[k] += dc * wn(j, k);
        }
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += dxhat[k] * xn(i, k);
        for (std::size_t k = 0; k < d; ++k)
            g.features(i, k) = (dxhat[k] - proj * xn(i, k)) / norm;
    }
    for (std::size_t j = 0; j < c; ++j) {
        const double norm = row_norm(weights.weights.row(j));
        std::vector<double> dwhat(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double dc = dcos(i, j);
            if (dc == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) dwhat[k] += dc * xn(i, k);
        }
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += dwhat[k] * wn(j, k);
        for (std::size_t k = 0; k < d; ++k)
            g.weights(j, k) = (dwhat[k] - proj * wn(j, k)) / norm;
    }
    return g;
}

// Resolves per-sample margins for a spec: a constant vector for the fixed
// families, draws from N(mean, sigma^2) for elastic ones, optionally
// reassigned by proximity when plus is set. Needs the target cosines for
// the plus ordering.
inline std::vector<double> resolve_margins(const MarginSpec& spec, const Matrix& cos_theta,
                                           const std::vector<int>& labels, Rng& rng) {
    const std::size_t n = labels.size();
    if (spec.family == Family::PlainSoftmax || spec.family == Family::ModifiedSoftmax)
        return std::vector<double>(n, 0.0);
    if (!spec.elastic) return std::vector<double>(n, spec.margin);

    MarginDraw draw = sample_margins(n, spec.elastic->mean, spec.elastic->stddev, rng);
    std::vector<double> margins = std::move(draw.values);
    if (spec.margin_clamp)
        for (double& m : margins)
            m = std::clamp(m, spec.margin_clamp->first, spec.margin_clamp->second);
    if (spec.plus) {
        std::vector<double> cos_target(n);
        for (std::size_t i = 0; i < n; ++i)
            cos_target[i] = cos_theta(i, static_cast<std::size_t>(labels[i]));
        margins = assign_margins_plus(margins, cos_target);
    }
    return margins;
}

// Full pipeline: normalize both sides, cosine logits, per-sample margins,
// margin transform, scale, cross-entropy, then the analytic backward pass.
inline LossOutput margin_softmax_loss(const EmbeddingBatch& batch, const ClassWeights& weights,
                                      const MarginSpec& spec, Rng& rng) {
    spec.validate();
    detail::check_batch(batch, weights);

    std::vector<double> margins;
    if (spec.family == Family::PlainSoftmax || spec.family == Family::ModifiedSoftmax ||
        !spec.elastic) {
        margins = resolve_margins(spec, Matrix(), batch.labels, rng);
    } else {
        // Elastic margins may depend on the target cosines (plus variant).
        const Matrix xn = l2_normalize_rows(batch.features);
        const Matrix wn = l2_normalize_rows(weights.weights);
        margins = resolve_margins(spec, cosine_logits(xn, wn), batch.labels, rng);
    }

    LossOutput out = forward_with_margins(batch, weights, spec, margins);
    Gradients grads = loss_backward(out, batch, weights, spec);
    out.grad_features = std::move(grads.features);
    out.grad_weights = std::move(grads.weights);
    out.instability_fallback = grads.instability_fallback;
    return out;
}

} // namespace mll
