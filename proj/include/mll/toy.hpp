#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mll/errors.hpp"
#include "mll/loss.hpp"
#include "mll/matrix.hpp"
#include "mll/rng.hpp"

namespace mll {

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

struct ToyDataset {
    Matrix points;             // M x input_dim
    std::vector<int> labels;   // length M
    std::vector<double> class_stddev; // generative std per class
};

// Synthetic multi-class point clouds: class centres drawn on the unit sphere
// with a minimum pairwise angle enforced by rejection, samples = centre +
// isotropic gaussian noise at the class's std. With low_std != high_std the
// first half of the classes gets low_std and the second half high_std, which
// requires an even class count.
inline ToyDataset generate_toy_dataset(std::size_t classes, std::size_t per_class, double low_std,
                                       double high_std, std::size_t input_dim, Rng& rng,
                                       double min_angle_deg = 75.0,
                                       std::size_t max_attempts = 10000) {
    if (classes < 1 || per_class < 1) throw InvalidSpecError("generate_toy_dataset: empty");
    if (input_dim < 2) throw InvalidSpecError("generate_toy_dataset: input_dim must be >= 2");
    if (low_std <= 0.0 || high_std <= 0.0)
        throw InvalidSpecError("generate_toy_dataset: stds must be positive");
    if (low_std != high_std && classes % 2 != 0)
        throw InvalidSpecError("generate_toy_dataset: the half-low/half-high profile needs an "
                               "even class count");

    const double min_cos = std::cos(min_angle_deg * 3.14159265358979323846 / 180.0);
    Matrix centers(classes, input_dim);
    std::size_t attempts = 0;
    for (std::size_t k = 0; k < classes;) {
        if (++attempts > max_attempts)
            throw RejectionFailureError("generate_toy_dataset: could not place " +
                                        std::to_string(classes) + " centres with pairwise angle >= " +
                                        std::to_string(min_angle_deg) + " deg in " +
                                        std::to_string(max_attempts) + " attempts");
        std::vector<double> v(input_dim);
        double norm = 0.0;
        for (double& x : v) {
            x = rng.next_gaussian();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) continue;
        for (double& x : v) x /= norm;
        bool ok = true;
        for (std::size_t j = 0; j < k && ok; ++j) {
            double c = 0.0;
            for (std::size_t t = 0; t < input_dim; ++t) c += v[t] * centers(j, t);
            if (c > min_cos) ok = false;
        }
        if (!ok) continue;
        for (std::size_t t = 0; t < input_dim; ++t) centers(k, t) = v[t];
        ++k;
    }

    ToyDataset ds;
    ds.points = Matrix(classes * per_class, input_dim);
    ds.labels.resize(classes * per_class);
    ds.class_stddev.resize(classes);
    for (std::size_t k = 0; k < classes; ++k)
        ds.class_stddev[k] = (k < classes / 2 || low_std == high_std) ? low_std : high_std;
    for (std::size_t k = 0; k < classes; ++k)
        for (std::size_t r = 0; r < per_class; ++r) {
            const std::size_t row = k * per_class + r;
            ds.labels[row] = static_cast<int>(k);
            for (std::size_t t = 0; t < input_dim; ++t)
                ds.points(row, t) = centers(k, t) + rng.gaussian(0.0, ds.class_stddev[k]);
        }
    return ds;
}

// ---------------------------------------------------------------------------
// Embedding model: a small fully connected net, tanh hidden layers, linear
// output. Stands in for a convolutional backbone at toy scale.
// ---------------------------------------------------------------------------

struct EmbeddingModel {
    std::vector<Matrix> weight;             // layer l: widths[l+1] x widths[l]
    std::vector<std::vector<double>> bias;  // layer l: widths[l+1]

    std::size_t input_dim() const { return weight.front().cols(); }
    std::size_t output_dim() const { return weight.back().rows(); }
    std::size_t layers() const { return weight.size(); }

    // Scaled uniform init (variance 1/fan_in), zero biases.
    static EmbeddingModel init(const std::vector<std::size_t>& widths, Rng& rng) {
        if (widths.size() < 2) throw InvalidSpecError("EmbeddingModel: need >= 1 layer");
        EmbeddingModel m;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            Matrix w(widths[l + 1], widths[l]);
            const double bound = std::sqrt(3.0 / static_cast<double>(widths[l]));
            for (std::size_t k = 0; k < w.size(); ++k) w[k] = rng.uniform(-bound, bound);
            m.weight.push_back(std::move(w));
            m.bias.emplace_back(widths[l + 1], 0.0);
        }
        return m;
    }

    Matrix forward(const Matrix& inputs) const {
        if (inputs.cols() != input_dim())
            throw DimensionMismatchError("EmbeddingModel::forward: input width " +
                                         std::to_string(inputs.cols()) + " != " +
                                         std::to_string(input_dim()));
        Matrix h = inputs;
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix next(h.rows(), weight[l].rows());
            for (std::size_t i = 0; i < h.rows(); ++i)
                for (std::size_t o = 0; o < weight[l].rows(); ++o) {
                    double a = bias[l][o];
                    for (std::size_t k = 0; k < weight[l].cols(); ++k)
                        a += weight[l](o, k) * h(i, k);
                    next(i, o) = (l + 1 < layers()) ? std::tanh(a) : a;
                }
            h = std::move(next);
        }
        return h;
    }

    // Forward pass that keeps the post-activation of every layer for backprop.
    Matrix forward_trace(const Matrix& inputs, std::vector<Matrix>& activations) const {
        activations.clear();
        activations.push_back(inputs);
        Matrix h = inputs;
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix next(h.rows(), weight[l].rows());
            for (std::size_t i = 0; i < h.rows(); ++i)
                for (std::size_t o = 0; o < weight[l].rows(); ++o) {
                    double a = bias[l][o];
                    for (std::size_t k = 0; k < weight[l].cols(); ++k)
                        a += weight[l](o, k) * h(i, k);
                    next(i, o) = (l + 1 < layers()) ? std::tanh(a) : a;
                }
            h = next;
            activations.push_back(std::move(next));
        }
        return h;
    }
};

struct ModelGradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
};

// Backprop of d loss / d embeddings through the net. activations must come
// from forward_trace on the same inputs. tanh' = 1 - tanh^2 uses the stored
// post-activations directly.
inline ModelGradients model_backward(const EmbeddingModel& model,
                                     const std::vector<Matrix>& activations,
                                     const Matrix& grad_output) {
    ModelGradients g;
    g.weight.resize(model.layers());
    g.bias.resize(model.layers());
    Matrix delta = grad_output; // d loss / d post-activation of current layer
    for (std::size_t l = model.layers(); l-- > 0;) {
        const Matrix& below = activations[l];
        if (l + 1 < model.layers()) {
            const Matrix& post = activations[l + 1];
            for (std::size_t k = 0; k < delta.size(); ++k)
                delta[k] *= 1.0 - post[k] * post[k];
        }
        g.weight[l] = Matrix(model.weight[l].rows(), model.weight[l].cols());
        g.bias[l].assign(model.weight[l].rows(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i)
            for (std::size_t o = 0; o < delta.cols(); ++o) {
                const double d = delta(i, o);
                g.bias[l][o] += d;
                for (std::size_t k = 0; k < below.cols(); ++k)
                    g.weight[l](o, k) += d * below(i, k);
            }
        if (l > 0) {
            Matrix prev(delta.rows(), model.weight[l].cols());
            for (std::size_t i = 0; i < delta.rows(); ++i)
                for (std::size_t k = 0; k < model.weight[l].cols(); ++k) {
                    double s = 0.0;
                    for (std::size_t o = 0; o < delta.cols(); ++o)
                        s += delta(i, o) * model.weight[l](o, k);
                    prev(i, k) = s;
                }
            delta = std::move(prev);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// SGD with classical momentum
// ---------------------------------------------------------------------------

// v <- mu * v + (g + wd * p);  p <- p - lr * v
inline void sgd_update(std::span<double> param, std::span<double> velocity,
                       std::span<const double> grad, double lr, double momentum,
                       double weight_decay) {
    for (std::size_t k = 0; k < param.size(); ++k) {
        velocity[k] = momentum * velocity[k] + (grad[k] + weight_decay * param[k]);
        param[k] -= lr * velocity[k];
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    // Defaults are the toy profile. The 2-D embedding bottleneck tolerates
    // neither a sharp scale nor heavy momentum: s = 64 or momentum = 0.9
    // collapse class pairs at this size, s = 16 with plain SGD converges on
    // every seed tried.
    std::size_t batch_size = 128;
    std::uint64_t total_iterations = 11200;
    double initial_lr = 0.1;
    std::vector<std::uint64_t> lr_drop_iterations = {1680, 2800, 3360, 8400};
    double momentum = 0.0;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    double scale = 16.0;

    void validate() const {
        if (batch_size < 1) throw InvalidSpecError("TrainConfig: batch_size must be >= 1");
        if (initial_lr <= 0.0) throw InvalidSpecError("TrainConfig: initial_lr must be > 0");
        for (std::size_t i = 0; i < lr_drop_iterations.size(); ++i) {
            if (i > 0 && lr_drop_iterations[i] <= lr_drop_iterations[i - 1])
                throw InvalidSpecError("TrainConfig: lr drops must be strictly increasing");
            if (lr_drop_iterations[i] >= total_iterations)
                throw InvalidSpecError("TrainConfig: lr drops must precede the final iteration");
        }
    }

    // lr(t) = initial_lr * 10^-(#drops <= t), t counted from 0; a drop at
    // 1680 therefore takes effect once 1680 iterations have completed.
    double lr_at(std::uint64_t iteration) const {
        int drops = 0;
        for (std::uint64_t d : lr_drop_iterations)
            if (d <= iteration) ++drops;
        return initial_lr * std::pow(10.0, -drops);
    }

    static TrainConfig toy_profile() { return TrainConfig{}; }
    // Full-scale settings, kept for config parity; running them at toy scale
    // is possible but pointless.
    static TrainConfig paper_profile() {
        TrainConfig cfg;
        cfg.batch_size = 512;
        cfg.total_iterations = 295000;
        cfg.lr_drop_iterations = {80000, 140000, 210000, 280000};
        cfg.momentum = 0.9;
        cfg.scale = 64.0;
        return cfg;
    }
};

struct TrainingLogRow {
    std::uint64_t iteration = 0; // 1-based in logs
    double loss = 0.0;
    double lr = 0.0;
    double margin_mean = 0.0;
    double margin_std = 0.0;
};

struct TrainResult {
    EmbeddingModel model;
    ClassWeights head;
    std::vector<TrainingLogRow> log;
    double final_train_accuracy = 0.0;
    std::uint64_t angle_overflow_iterations = 0; // iterations with theta + m > pi targets
};

// Head rows drawn on the unit sphere.
inline ClassWeights init_head(std::size_t classes, std::size_t dim, Rng& rng) {
    ClassWeights head;
    head.weights = Matrix(classes, dim);
    for (std::size_t j = 0; j < classes; ++j) {
        double norm = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            head.weights(j, k) = rng.next_gaussian();
            norm += head.weights(j, k) * head.weights(j, k);
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < dim; ++k) head.weights(j, k) /= norm;
    }
    return head;
}

// Fraction of points whose top logit matches their label: cosine logits for
// the normalized families, raw dot products under PlainSoftmax.
inline double classification_accuracy(const EmbeddingModel& model, const ClassWeights& head,
                                      const ToyDataset& data, Family family) {
    const Matrix emb = model.forward(data.points);
    Matrix logits;
    if (family == Family::PlainSoftmax) {
        logits = Matrix(emb.rows(), head.weights.rows());
        for (std::size_t i = 0; i < emb.rows(); ++i)
            for (std::size_t j = 0; j < head.weights.rows(); ++j)
                logits(i, j) = dot(emb.row(i), head.weights.row(j));
    } else {
        logits = cosine_logits(l2_normalize_rows(emb), l2_normalize_rows(head.weights));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (static_cast<int>(best) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

// SGD training loop. Batches are drawn with replacement from a dedicated
// stream; margins consume a separate stream, so a fixed-margin run and an
// elastic run with the same seed see identical batches.
inline TrainResult train(EmbeddingModel model, ClassWeights head, const ToyDataset& data,
                         const MarginSpec& spec, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (data.points.rows() < 1) throw InvalidSpecError("train: empty dataset");
    if (model.input_dim() != data.points.cols())
        throw DimensionMismatchError("train: model input width != dataset dimension");
    if (head.weights.cols() != model.output_dim())
        throw DimensionMismatchError("train: head dimension != embedding dimension");

    Rng root(cfg.seed);
    Rng batch_rng = root.split(1);
    Rng margin_rng = root.split(2);

    TrainResult result;
    result.log.reserve(cfg.total_iterations);

    ModelGradients velocity;
    velocity.weight.resize(model.layers());
    velocity.bias.resize(model.layers());
    for (std::size_t l = 0; l < model.layers(); ++l) {
        velocity.weight[l] = Matrix(model.weight[l].rows(), model.weight[l].cols());
        velocity.bias[l].assign(model.bias[l].size(), 0.0);
    }
    Matrix head_velocity(head.weights.rows(), head.weights.cols());

    const std::size_t m_points = data.points.rows();
    for (std::uint64_t step = 0; step < cfg.total_iterations; ++step) {
        const double lr = cfg.lr_at(step);

        EmbeddingBatch batch;
        batch.features = Matrix(cfg.batch_size, model.input_dim());
        batch.labels.resize(cfg.batch_size);
        Matrix batch_inputs(cfg.batch_size, data.points.cols());
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t pick = batch_rng.uniform_index(m_points);
            for (std::size_t k = 0; k < data.points.cols(); ++k)
                batch_inputs(b, k) = data.points(pick, k);
            batch.labels[b] = data.labels[pick];
        }

        std::vector<Matrix> activations;
        batch.features = model.forward_trace(batch_inputs, activations);

        const LossOutput out = margin_softmax_loss(batch, head, spec, margin_rng);
        if (!std::isfinite(out.mean_loss))
            throw DivergenceError("train: loss became non-finite at iteration " +
                                  std::to_string(step + 1));
        if (out.angle_overflow_count > 0) ++result.angle_overflow_iterations;

        const ModelGradients grads = model_backward(model, activations, out.grad_features);
        for (std::size_t l = 0; l < model.layers(); ++l) {
            sgd_update({model.weight[l].data(), model.weight[l].size()},
                       {velocity.weight[l].data(), velocity.weight[l].size()},
                       {grads.weight[l].data(), grads.weight[l].size()}, lr, cfg.momentum,
                       cfg.weight_decay);
            sgd_update(model.bias[l], velocity.bias[l], grads.bias[l], lr, cfg.momentum,
                       cfg.weight_decay);
        }
        sgd_update({head.weights.data(), head.weights.size()},
                   {head_velocity.data(), head_velocity.size()},
                   {out.grad_weights.data(), out.grad_weights.size()}, lr, cfg.momentum,
                   cfg.weight_decay);

        double msum = 0.0;
        for (double m : out.margins_used) msum += m;
        const double mmean = msum / static_cast<double>(out.margins_used.size());
        double msq = 0.0;
        for (double m : out.margins_used) msq += (m - mmean) * (m - mmean);
        result.log.push_back({step + 1, out.mean_loss, lr, mmean,
                              std::sqrt(msq / static_cast<double>(out.margins_used.size()))});
    }

    result.final_train_accuracy = classification_accuracy(model, head, data, spec.family);
    result.model = std::move(model);
    result.head = std::move(head);
    return result;
}

// Forward over the whole dataset, labels carried through.
inline EmbeddingBatch embed(const EmbeddingModel& model, const ToyDataset& data) {
    EmbeddingBatch out;
    out.features = model.forward(data.points);
    out.labels = data.labels;
    return out;
}

} // namespace mll
