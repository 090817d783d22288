#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mll/config.hpp"
#include "mll/io.hpp"
#include "mll/loss.hpp"
#include "mll/metrics.hpp"
#include "mll/svg.hpp"
#include "mll/toy.hpp"

namespace mll {

// Stream indices hanging off the run seed. Fixed so that every consumer is
// isolated: an elastic run drawing margins cannot shift the batch sequence
// of its fixed-margin twin.
//   0 dataset generation, 1 batch sampling (inside train), 2 margin draws
//   (inside train), 3 parameter init, 4 evaluation protocol generation.
inline constexpr std::uint64_t kStreamDataset = 0;
inline constexpr std::uint64_t kStreamInit = 3;
inline constexpr std::uint64_t kStreamEvalProtocol = 4;

struct ToyRunArtifacts {
    std::string dir;
    std::string name;
    GeometryReport geometry;
    double final_train_accuracy = 0.0;
    std::uint64_t angle_overflow_iterations = 0;
};

// One loss end to end: init, train, embed, geometry, artifacts on disk
// (training_log.csv, embeddings.bin + labels, geometry.json, figure.svg,
// run.json). Outputs carry no timestamps, so a rerun with the same seed is
// byte-identical.
inline ToyRunArtifacts run_toy_loss(const RunConfig& cfg, const LossConfig& loss,
                                    const ToyDataset& dataset, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(out_dir) / loss.name;
    fs::create_directories(dir);

    Rng init_stream = Rng(cfg.seed).split(kStreamInit);
    EmbeddingModel model = EmbeddingModel::init(cfg.model_widths(), init_stream);
    ClassWeights head = init_head(cfg.dataset.classes, cfg.model.embedding_dim, init_stream);

    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    TrainResult result = train(std::move(model), std::move(head), dataset, loss.spec, train_cfg);

    const EmbeddingBatch emb = embed(result.model, dataset);
    const GeometryReport geometry = geometry_report(emb.features, emb.labels);

    write_training_log((dir / "training_log.csv").string(), result.log);
    write_embeddings((dir / "embeddings.bin").string(), emb.features, emb.labels);

    json gj;
    gj["classes"] = geometry.class_order;
    gj["centers"] = json::array();
    for (std::size_t i = 0; i < geometry.class_centers.rows(); ++i)
        gj["centers"].push_back({geometry.class_centers(i, 0), geometry.class_centers(i, 1)});
    gj["consecutive_angles_deg"] = geometry.consecutive_angles_deg;
    gj["per_class_std"] = geometry.per_class_std;
    gj["mean_std"] = geometry.mean_std;
    write_text_file((dir / "geometry.json").string(), gj.dump(2) + "\n");

    write_text_file((dir / "figure.svg").string(),
                    toy_figure_svg(emb.features, emb.labels, geometry, loss.name));

    json rj;
    rj["loss"] = loss_config_to_json(loss);
    rj["train"] = train_config_to_json(train_cfg);
    rj["seed"] = cfg.seed;
    rj["generator"] = Rng::kGeneratorName;
    rj["final_train_accuracy"] = result.final_train_accuracy;
    rj["angle_overflow_iterations"] = result.angle_overflow_iterations;
    write_text_file((dir / "run.json").string(), rj.dump(2) + "\n");

    ToyRunArtifacts artifacts;
    artifacts.dir = dir.string();
    artifacts.name = loss.name;
    artifacts.geometry = geometry;
    artifacts.final_train_accuracy = result.final_train_accuracy;
    artifacts.angle_overflow_iterations = result.angle_overflow_iterations;
    return artifacts;
}

// The full toy experiment: one shared dataset, one run directory per loss.
inline std::vector<ToyRunArtifacts> run_toy_experiment(const RunConfig& cfg,
                                                       const std::string& out_dir) {
    Rng dataset_stream = Rng(cfg.seed).split(kStreamDataset);
    const ToyDataset dataset =
        generate_toy_dataset(cfg.dataset.classes, cfg.dataset.per_class, cfg.dataset.low_std,
                             cfg.dataset.high_std, cfg.dataset.input_dim, dataset_stream,
                             cfg.dataset.min_angle_deg);
    std::vector<ToyRunArtifacts> out;
    for (const LossConfig& loss : cfg.losses)
        out.push_back(run_toy_loss(cfg, loss, dataset, out_dir));
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation protocol generation (for sweep grid mode and fixtures)
// ---------------------------------------------------------------------------

// Balanced genuine/impostor pairs over a labelled set, k contiguous folds.
inline PairProtocol make_pair_protocol(const std::vector<int>& labels, std::size_t pairs_per_kind,
                                       int folds, Rng& rng) {
    std::vector<std::vector<std::uint32_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (by_class.size() <= y) by_class.resize(y + 1);
        by_class[y].push_back(static_cast<std::uint32_t>(i));
    }
    PairProtocol proto;
    proto.num_folds = folds;
    // interleave genuine and impostor pairs so every contiguous fold holds both
    for (std::size_t k = 0; k < pairs_per_kind; ++k) {
        for (;;) {
            const auto& members = by_class[rng.uniform_index(by_class.size())];
            if (members.size() < 2) continue;
            const auto a = members[rng.uniform_index(members.size())];
            const auto b = members[rng.uniform_index(members.size())];
            if (a == b) continue;
            proto.pairs.push_back({a, b, true});
            break;
        }
        for (;;) {
            const auto ca = rng.uniform_index(by_class.size());
            const auto cb = rng.uniform_index(by_class.size());
            if (ca == cb || by_class[ca].empty() || by_class[cb].empty()) continue;
            proto.pairs.push_back({by_class[ca][rng.uniform_index(by_class[ca].size())],
                                   by_class[cb][rng.uniform_index(by_class[cb].size())], false});
            break;
        }
    }
    proto.fold.resize(proto.pairs.size());
    for (std::size_t i = 0; i < proto.pairs.size(); ++i)
        proto.fold[i] =
            static_cast<int>(i * static_cast<std::size_t>(folds) / proto.pairs.size());
    return proto;
}

} // namespace mll
