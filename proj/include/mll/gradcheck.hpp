#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mll/loss.hpp"
#include "mll/rng.hpp"

namespace mll {

// Finite-difference validation of the analytic gradients, shared by the CLI
// gradcheck command and the acceptance suite.

struct GradCheckInstance {
    EmbeddingBatch batch;
    ClassWeights weights;
};

// Random instance kept away from the two places central differences stop
// being meaningful: cosines near the clamp boundary (a kink the stencil must
// not straddle; a finite-difference step of 1e-5 on a row of norm >= 0.5
// moves a cosine by at most ~4e-5, well inside the 1e-3 guard) and rows so
// short that the normalization Jacobian dwarfs the step.
inline GradCheckInstance random_gradcheck_instance(Rng& rng, std::size_t max_n = 8,
                                                   std::size_t max_c = 8, std::size_t max_d = 4) {
    for (;;) {
        GradCheckInstance inst;
        const auto n = 2 + rng.uniform_index(max_n - 1);
        const auto c = 2 + rng.uniform_index(max_c - 1);
        const auto d = 2 + rng.uniform_index(max_d - 1);
        inst.batch.features = Matrix(n, d);
        for (std::size_t k = 0; k < inst.batch.features.size(); ++k)
            inst.batch.features[k] = rng.gaussian(0.0, 1.0);
        inst.weights.weights = Matrix(c, d);
        for (std::size_t k = 0; k < inst.weights.weights.size(); ++k)
            inst.weights.weights[k] = rng.gaussian(0.0, 1.0);
        inst.batch.labels.resize(n);
        for (auto& y : inst.batch.labels) y = static_cast<int>(rng.uniform_index(c));

        bool short_row = false;
        for (std::size_t i = 0; i < n; ++i)
            if (row_norm(inst.batch.features.row(i)) < 0.5) short_row = true;
        for (std::size_t j = 0; j < c; ++j)
            if (row_norm(inst.weights.weights.row(j)) < 0.5) short_row = true;
        if (short_row) continue;

        const Matrix cos = cosine_logits(l2_normalize_rows(inst.batch.features),
                                         l2_normalize_rows(inst.weights.weights));
        bool near_clamp = false;
        for (std::size_t k = 0; k < cos.size(); ++k)
            if (std::abs(cos[k]) > 1.0 - 1e-3) near_clamp = true;
        if (!near_clamp) return inst;
    }
}

struct GradCheckResult {
    std::string config;
    int instances = 0;
    int failures = 0;
    double worst_rel_error = 0.0;
};

// Central differences of mean_loss with margins held fixed; pass criterion
// is elementwise |analytic - fd| <= max(rel_tol * max(|analytic|, |fd|),
// abs_floor).
inline GradCheckResult gradcheck_config(const std::string& name, const MarginSpec& spec,
                                        int trials, Rng& rng, double h = 1e-5,
                                        double rel_tol = 1e-5, double abs_floor = 1e-8) {
    GradCheckResult res;
    res.config = name;
    Rng margin_rng = rng.split(0x6d617267);
    for (int t = 0; t < trials; ++t) {
        GradCheckInstance inst = random_gradcheck_instance(rng);
        const LossOutput out = margin_softmax_loss(inst.batch, inst.weights, spec, margin_rng);

        auto loss_at = [&](const EmbeddingBatch& b, const ClassWeights& w) {
            return forward_with_margins(b, w, spec, out.margins_used).mean_loss;
        };
        bool ok = true;
        auto check_entry = [&](double analytic, double fd) {
            const double diff = std::abs(analytic - fd);
            const double rel = diff / std::max({std::abs(analytic), std::abs(fd), abs_floor});
            if (diff > abs_floor && rel > rel_tol) ok = false;
            if (diff > abs_floor) res.worst_rel_error = std::max(res.worst_rel_error, rel);
        };
        for (std::size_t k = 0; k < inst.batch.features.size(); ++k) {
            EmbeddingBatch b = inst.batch;
            b.features[k] += h;
            const double up = loss_at(b, inst.weights);
            b.features[k] = inst.batch.features[k] - h;
            const double down = loss_at(b, inst.weights);
            check_entry(out.grad_features[k], (up - down) / (2.0 * h));
        }
        for (std::size_t k = 0; k < inst.weights.weights.size(); ++k) {
            ClassWeights w = inst.weights;
            w.weights[k] += h;
            const double up = loss_at(inst.batch, w);
            w.weights[k] = inst.weights.weights[k] - h;
            const double down = loss_at(inst.batch, w);
            check_entry(out.grad_weights[k], (up - down) / (2.0 * h));
        }
        ++res.instances;
        if (!ok) ++res.failures;
    }
    return res;
}

// The default configuration grid: every family, the published margins, and
// the elastic / plus variants at both sigmas.
inline std::vector<std::pair<std::string, MarginSpec>> gradcheck_grid() {
    std::vector<std::pair<std::string, MarginSpec>> grid;
    grid.emplace_back("softmax", MarginSpec::plain_softmax());
    grid.emplace_back("modified s=64", MarginSpec::modified_softmax(64.0));
    for (double m1 : {2.0, 3.0})
        grid.emplace_back("multiplicative m1=" + std::to_string(m1).substr(0, 4),
                          MarginSpec::sphere(m1));
    for (double m2 : {0.45, 0.5, 0.55})
        grid.emplace_back("arc m2=" + std::to_string(m2).substr(0, 4), MarginSpec::arc(m2));
    for (double m3 : {0.3, 0.35, 0.4})
        grid.emplace_back("cos m3=" + std::to_string(m3).substr(0, 4), MarginSpec::cos_margin(m3));
    for (double sigma : {0.0175, 0.05}) {
        const std::string tag = std::to_string(sigma).substr(0, 6);
        grid.emplace_back("elastic-arc sigma=" + tag, MarginSpec::elastic_arc(0.5, sigma));
        grid.emplace_back("elastic-cos sigma=" + tag, MarginSpec::elastic_cos(0.35, sigma));
        grid.emplace_back("elastic-arc-plus sigma=" + tag,
                          MarginSpec::elastic_arc(0.5, sigma, 64.0, true));
        grid.emplace_back("elastic-cos-plus sigma=" + tag,
                          MarginSpec::elastic_cos(0.35, sigma, 64.0, true));
    }
    return grid;
}

} // namespace mll
