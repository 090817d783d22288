#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mll/errors.hpp"
#include "mll/loss.hpp"
#include "mll/toy.hpp"

namespace mll {

using json = nlohmann::json;

namespace detail {

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw FormatError(where + ": unknown key '" + it.key() + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Loss configuration
// ---------------------------------------------------------------------------

struct LossConfig {
    std::string name;   // run directory name; defaults to a family-derived tag
    MarginSpec spec;
};

inline Family family_from_string(const std::string& s) {
    if (s == "softmax") return Family::PlainSoftmax;
    if (s == "modified") return Family::ModifiedSoftmax;
    if (s == "multiplicative") return Family::Multiplicative;
    if (s == "arc") return Family::AdditiveAngular;
    if (s == "cos") return Family::AdditiveCosine;
    throw FormatError("unknown loss family '" + s +
                      "' (expected softmax|modified|multiplicative|arc|cos)");
}

inline LossConfig loss_config_from_json(const json& j, double default_scale) {
    detail::require_keys(j, {"name", "family", "margin", "sigma", "plus", "scale",
                             "margin_clamp"}, "loss");
    LossConfig cfg;
    cfg.spec.family = family_from_string(j.at("family").get<std::string>());
    cfg.spec.scale = j.value("scale", default_scale);
    cfg.spec.margin = j.value("margin", 0.0);
    if (j.contains("sigma")) {
        cfg.spec.elastic = ElasticParams{cfg.spec.margin, j.at("sigma").get<double>()};
    }
    cfg.spec.plus = j.value("plus", false);
    if (j.contains("margin_clamp")) {
        const auto& mc = j.at("margin_clamp");
        if (!mc.is_array() || mc.size() != 2)
            throw FormatError("loss.margin_clamp: expected [lo, hi]");
        cfg.spec.margin_clamp = {mc[0].get<double>(), mc[1].get<double>()};
    }
    cfg.name = j.value("name", "");
    if (cfg.name.empty()) {
        cfg.name = family_name(cfg.spec.family);
        if (cfg.spec.elastic) cfg.name = std::string("elastic-") + cfg.name;
        if (cfg.spec.plus) cfg.name += "-plus";
    }
    cfg.spec.validate();
    return cfg;
}

inline json loss_config_to_json(const LossConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["family"] = family_name(cfg.spec.family);
    j["margin"] = cfg.spec.margin;
    if (cfg.spec.elastic) j["sigma"] = cfg.spec.elastic->stddev;
    if (cfg.spec.plus) j["plus"] = true;
    j["scale"] = cfg.spec.scale;
    if (cfg.spec.margin_clamp)
        j["margin_clamp"] = {cfg.spec.margin_clamp->first, cfg.spec.margin_clamp->second};
    return j;
}

// ---------------------------------------------------------------------------
// Dataset / model / run configuration
// ---------------------------------------------------------------------------

struct DatasetConfig {
    std::size_t classes = 8;
    std::size_t per_class = 400;
    double low_std = 0.02;
    double high_std = 0.2;
    std::size_t input_dim = 16;
    double min_angle_deg = 75.0;
};

struct ModelConfig {
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t embedding_dim = 2;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out = "runs";
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train; // toy profile by default
    std::vector<LossConfig> losses;

    std::vector<std::size_t> model_widths() const {
        std::vector<std::size_t> w{dataset.input_dim};
        w.insert(w.end(), model.hidden.begin(), model.hidden.end());
        w.push_back(model.embedding_dim);
        return w;
    }
};

// The three losses the toy experiment compares by default.
inline std::vector<LossConfig> default_toy_losses(double scale) {
    return {
        {"arcface-m0.5", MarginSpec::arc(0.5, scale)},
        {"elastic-arc-m0.5-s0.05", MarginSpec::elastic_arc(0.5, 0.05, scale)},
        {"elastic-arc-plus-m0.5-s0.0175", MarginSpec::elastic_arc(0.5, 0.0175, scale, true)},
    };
}

inline RunConfig default_toy_run_config() {
    RunConfig cfg;
    cfg.train = TrainConfig::toy_profile();
    cfg.losses = default_toy_losses(cfg.train.scale);
    return cfg;
}

inline TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
    detail::require_keys(j, {"batch_size", "iterations", "lr", "lr_drops", "momentum",
                             "weight_decay", "scale"}, "train");
    TrainConfig cfg = base;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.total_iterations = j.value("iterations", cfg.total_iterations);
    cfg.initial_lr = j.value("lr", cfg.initial_lr);
    if (j.contains("lr_drops")) cfg.lr_drop_iterations = j.at("lr_drops").get<std::vector<std::uint64_t>>();
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.scale = j.value("scale", cfg.scale);
    return cfg;
}

inline json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["batch_size"] = cfg.batch_size;
    j["iterations"] = cfg.total_iterations;
    j["lr"] = cfg.initial_lr;
    j["lr_drops"] = cfg.lr_drop_iterations;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["scale"] = cfg.scale;
    return j;
}

inline RunConfig run_config_from_json(const json& j, const std::string& profile = "toy") {
    detail::require_keys(j, {"seed", "out", "dataset", "model", "train", "losses"}, "config");
    RunConfig cfg;
    cfg.train = (profile == "paper") ? TrainConfig::paper_profile() : TrainConfig::toy_profile();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out = j.value("out", cfg.out);
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        detail::require_keys(d, {"classes", "per_class", "low_std", "high_std", "input_dim",
                                 "min_angle_deg"}, "dataset");
        cfg.dataset.classes = d.value("classes", cfg.dataset.classes);
        cfg.dataset.per_class = d.value("per_class", cfg.dataset.per_class);
        cfg.dataset.low_std = d.value("low_std", cfg.dataset.low_std);
        cfg.dataset.high_std = d.value("high_std", cfg.dataset.high_std);
        cfg.dataset.input_dim = d.value("input_dim", cfg.dataset.input_dim);
        cfg.dataset.min_angle_deg = d.value("min_angle_deg", cfg.dataset.min_angle_deg);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        detail::require_keys(m, {"hidden", "embedding_dim"}, "model");
        if (m.contains("hidden")) cfg.model.hidden = m.at("hidden").get<std::vector<std::size_t>>();
        cfg.model.embedding_dim = m.value("embedding_dim", cfg.model.embedding_dim);
    }
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), cfg.train);
    if (j.contains("losses")) {
        for (const json& l : j.at("losses"))
            cfg.losses.push_back(loss_config_from_json(l, cfg.train.scale));
    } else {
        cfg.losses = default_toy_losses(cfg.train.scale);
    }
    return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["dataset"] = {{"classes", cfg.dataset.classes},
                    {"per_class", cfg.dataset.per_class},
                    {"low_std", cfg.dataset.low_std},
                    {"high_std", cfg.dataset.high_std},
                    {"input_dim", cfg.dataset.input_dim},
                    {"min_angle_deg", cfg.dataset.min_angle_deg}};
    j["model"] = {{"hidden", cfg.model.hidden}, {"embedding_dim", cfg.model.embedding_dim}};
    j["train"] = train_config_to_json(cfg.train);
    j["losses"] = json::array();
    for (const auto& l : cfg.losses) j["losses"].push_back(loss_config_to_json(l));
    return j;
}

} // namespace mll
