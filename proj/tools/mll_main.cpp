// mll — margin loss library command line.
//
// Verbs: toy, eval, sweep, gradcheck, sample-margins. Exit codes: 0 success,
// 1 assertion/tolerance failure, 2 usage or IO error. MLL_THREADS caps the
// sweep worker count (default 1, which keeps runs bit-deterministic in a
// single process order; workers use per-run split seeds either way).

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mll/mll.hpp"

namespace fs = std::filesystem;
using mll::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitToleranceFailure = 1;
constexpr int kExitUsage = 2;

int thread_budget() {
    if (const char* env = std::getenv("MLL_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

struct GlobalOptions {
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::string out;
    std::string profile = "toy";
};

mll::RunConfig load_run_config(const std::string& config_path, const GlobalOptions& global) {
    mll::RunConfig cfg;
    if (!config_path.empty()) {
        const std::string text = mll::read_text_file(config_path);
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw mll::FormatError(config_path + ": " + e.what());
        }
        cfg = mll::run_config_from_json(j, global.profile);
    } else {
        cfg = (global.profile == "paper")
                  ? [] {
                        mll::RunConfig c = mll::default_toy_run_config();
                        c.train = mll::TrainConfig::paper_profile();
                        c.losses = mll::default_toy_losses(c.train.scale);
                        return c;
                    }()
                  : mll::default_toy_run_config();
    }
    if (global.seed_set) cfg.seed = global.seed;
    if (!global.out.empty()) cfg.out = global.out;
    return cfg;
}

// ---------------------------------------------------------------------------
// toy
// ---------------------------------------------------------------------------

int cmd_toy(const std::string& config_path, const GlobalOptions& global,
            std::int64_t iterations_override) {
    mll::RunConfig cfg = load_run_config(config_path, global);
    if (iterations_override >= 0) {
        cfg.train.total_iterations = static_cast<std::uint64_t>(iterations_override);
        std::erase_if(cfg.train.lr_drop_iterations, [&](std::uint64_t d) {
            return d >= cfg.train.total_iterations;
        });
    }
    cfg.train.validate();
    const auto artifacts = mll::run_toy_experiment(cfg, cfg.out);
    for (const auto& a : artifacts) {
        std::printf("%s: train accuracy %.4f, mean per-class std %.5f -> %s\n", a.name.c_str(),
                    a.final_train_accuracy, a.geometry.mean_std, a.dir.c_str());
        if (a.angle_overflow_iterations > 0)
            std::fprintf(stderr,
                         "warning: %s hit theta + m > pi on %llu iterations (margin transform "
                         "is non-monotone there)\n",
                         a.name.c_str(),
                         static_cast<unsigned long long>(a.angle_overflow_iterations));
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& embeddings_path, const std::string& pairs_path,
             const std::string& gallery_path, bool want_accuracy, double tar_far_target,
             bool want_rank1, const std::string& report_path) {
    json report;
    report["embeddings"] = embeddings_path;

    const mll::Matrix embeddings = mll::read_embeddings(embeddings_path);

    if (!pairs_path.empty()) {
        const mll::PairProtocol proto = mll::read_pairs(pairs_path);
        proto.validate();
        report["pairs"] = pairs_path;
        report["folds"] = proto.num_folds;
        if (want_accuracy) {
            report["verification"] = {
                {"protocol", "kfold-accuracy-maximizing"},
                {"accuracy", mll::verification_accuracy_kfold(embeddings, proto)}};
        }
        if (tar_far_target > 0.0) {
            const mll::ScoreLists scores = mll::cosine_scores(embeddings, proto);
            const mll::TarResult r = mll::tar_at_far(scores.genuine, scores.impostor,
                                                     tar_far_target);
            report["tar_at_far"] = {{"far_target", tar_far_target},
                                    {"tar", r.tar},
                                    {"threshold", r.threshold},
                                    {"insufficient_impostors", r.insufficient_impostors}};
            if (r.insufficient_impostors)
                std::fprintf(stderr,
                             "warning: %zu impostor pairs cannot resolve FAR %.3g; the "
                             "threshold sits above every impostor score\n",
                             scores.impostor.size(), tar_far_target);
        }
    }
    if (want_rank1) {
        if (gallery_path.empty())
            throw mll::InvalidSpecError("eval: --rank1 needs --gallery");
        const mll::EmbeddingBatch probes = mll::read_embedding_batch(embeddings_path);
        const mll::EmbeddingBatch gallery = mll::read_embedding_batch(gallery_path);
        report["rank1"] = {{"gallery", gallery_path},
                           {"rate", mll::rank1(probes.features, probes.labels, gallery.features,
                                               gallery.labels)}};
    }

    const std::string text = report.dump(2) + "\n";
    if (!report_path.empty()) mll::write_text_file(report_path, text);
    std::fputs(text.c_str(), stdout);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

mll::BordaTable sweep_ingest_table(const std::string& table_path,
                                   const std::vector<std::size_t>& group_sizes) {
    // CSV: header "config,<benchmark>,...", one row per config
    const std::string text = mll::read_text_file(table_path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> benchmarks;
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (benchmarks.empty()) {
            if (cells.size() < 2)
                throw mll::FormatError(table_path + ":" + std::to_string(line_no) +
                                       ": header needs config plus >= 1 benchmark column");
            benchmarks.assign(cells.begin() + 1, cells.end());
            continue;
        }
        if (cells.size() != benchmarks.size() + 1)
            throw mll::FormatError(table_path + ":" + std::to_string(line_no) + ": expected " +
                                   std::to_string(benchmarks.size() + 1) + " cells");
        names.push_back(cells[0]);
        std::vector<double> acc;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            try {
                std::size_t pos = 0;
                acc.push_back(std::stod(cells[i], &pos));
                if (pos != cells[i].size()) throw std::invalid_argument("junk");
            } catch (const std::exception&) {
                throw mll::FormatError(table_path + ":" + std::to_string(line_no) +
                                       ": bad accuracy '" + cells[i] + "'");
            }
        }
        rows.push_back(std::move(acc));
    }
    if (names.empty()) throw mll::FormatError(table_path + ": no data rows");

    mll::Matrix acc(rows.size(), benchmarks.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < benchmarks.size(); ++j) acc(i, j) = rows[i][j];

    std::vector<std::size_t> group_start{0};
    if (!group_sizes.empty()) {
        std::size_t at = 0;
        for (std::size_t i = 0; i + 1 < group_sizes.size(); ++i) {
            at += group_sizes[i];
            group_start.push_back(at);
        }
        at += group_sizes.back();
        if (at != names.size())
            throw mll::FormatError(table_path + ": group sizes sum to " + std::to_string(at) +
                                   " but the table has " + std::to_string(names.size()) +
                                   " configs");
    }
    return mll::borda_count(names, benchmarks, acc, group_start);
}

void write_borda_outputs(const mll::BordaTable& table, const std::string& out_dir) {
    fs::create_directories(out_dir);
    json j;
    j["benchmarks"] = table.benchmark_names;
    j["configs"] = json::array();
    for (std::size_t i = 0; i < table.config_names.size(); ++i) {
        std::size_t group = 0;
        for (std::size_t g = 0; g < table.group_start.size(); ++g)
            if (table.group_start[g] <= i) group = g;
        json row;
        row["name"] = table.config_names[i];
        row["group"] = group;
        row["accuracy"] = json::array();
        row["bc"] = table.bc[i];
        for (std::size_t b = 0; b < table.benchmark_names.size(); ++b)
            row["accuracy"].push_back(table.accuracy(i, b));
        row["bc_sum"] = table.bc_sum[i];
        j["configs"].push_back(row);
    }
    j["selected"] = json::array();
    for (std::size_t g = 0; g < table.selected.size(); ++g)
        j["selected"].push_back({{"group", g},
                                 {"name", table.config_names[table.selected[g]]},
                                 {"bc_sum", table.bc_sum[table.selected[g]]}});
    mll::write_text_file((fs::path(out_dir) / "borda.json").string(), j.dump(2) + "\n");

    std::string csv = "config";
    for (const auto& b : table.benchmark_names) csv += "," + b + ",bc_" + b;
    csv += ",bc_sum\n";
    for (std::size_t i = 0; i < table.config_names.size(); ++i) {
        csv += table.config_names[i];
        for (std::size_t b = 0; b < table.benchmark_names.size(); ++b)
            csv += "," + mll::format_double(table.accuracy(i, b)) + "," +
                   std::to_string(table.bc[i][b]);
        csv += "," + std::to_string(table.bc_sum[i]) + "\n";
    }
    mll::write_text_file((fs::path(out_dir) / "borda.csv").string(), csv);

    std::fputs(j.dump(2).c_str(), stdout);
    std::fputc('\n', stdout);
}

// Grid mode: train every loss of the config at toy scale on one shared
// dataset, score three benchmarks per config, then rank with the Borda
// count. Configs run in parallel up to MLL_THREADS; results are keyed by
// index, so the worker count cannot change any output.
int cmd_sweep_grid(const std::string& config_path, const GlobalOptions& global) {
    mll::RunConfig cfg = load_run_config(config_path, global);
    fs::create_directories(cfg.out);

    mll::Rng dataset_stream = mll::Rng(cfg.seed).split(mll::kStreamDataset);
    const mll::ToyDataset dataset = mll::generate_toy_dataset(
        cfg.dataset.classes, cfg.dataset.per_class, cfg.dataset.low_std, cfg.dataset.high_std,
        cfg.dataset.input_dim, dataset_stream, cfg.dataset.min_angle_deg);

    const std::size_t n_cfg = cfg.losses.size();
    std::vector<std::vector<double>> scores(n_cfg);
    std::atomic<std::size_t> next{0};
    const int workers = std::min<int>(thread_budget(), static_cast<int>(n_cfg));

    auto evaluate_one = [&](std::size_t idx) {
        const mll::LossConfig& loss = cfg.losses[idx];
        const std::string run_dir = (fs::path(cfg.out) / "runs").string();
        const mll::ToyRunArtifacts art = mll::run_toy_loss(cfg, loss, dataset, run_dir);
        const mll::EmbeddingBatch emb =
            mll::read_embedding_batch((fs::path(art.dir) / "embeddings.bin").string());
        mll::Rng proto_rng = mll::Rng(cfg.seed).split(mll::kStreamEvalProtocol);
        const mll::PairProtocol proto = mll::make_pair_protocol(emb.labels, 600, 10, proto_rng);
        const double verif = mll::verification_accuracy_kfold(emb.features, proto);
        const mll::ScoreLists score_lists = mll::cosine_scores(emb.features, proto);
        const double tar = mll::tar_at_far(score_lists.genuine, score_lists.impostor, 1e-2).tar;
        // probe/gallery split: even rows probe, odd rows gallery
        std::vector<int> plabels, glabels;
        std::vector<std::size_t> pidx, gidx;
        for (std::size_t i = 0; i < emb.features.rows(); ++i)
            if (i % 2 == 0) {
                pidx.push_back(i);
                plabels.push_back(emb.labels[i]);
            } else {
                gidx.push_back(i);
                glabels.push_back(emb.labels[i]);
            }
        mll::Matrix probes(pidx.size(), emb.features.cols()),
            gallery(gidx.size(), emb.features.cols());
        for (std::size_t i = 0; i < pidx.size(); ++i)
            for (std::size_t k = 0; k < emb.features.cols(); ++k)
                probes(i, k) = emb.features(pidx[i], k);
        for (std::size_t i = 0; i < gidx.size(); ++i)
            for (std::size_t k = 0; k < emb.features.cols(); ++k)
                gallery(i, k) = emb.features(gidx[i], k);
        const double r1 = mll::rank1(probes, plabels, gallery, glabels);
        scores[idx] = {verif, tar, r1};
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= n_cfg) return;
                evaluate_one(idx);
            }
        });
    for (auto& t : pool) t.join();

    std::vector<std::string> names;
    mll::Matrix acc(n_cfg, 3);
    for (std::size_t i = 0; i < n_cfg; ++i) {
        names.push_back(cfg.losses[i].name);
        for (std::size_t b = 0; b < 3; ++b) acc(i, b) = scores[i][b];
    }
    const mll::BordaTable table =
        mll::borda_count(names, {"verification", "tar_far1e-2", "rank1"}, acc, {0});
    write_borda_outputs(table, cfg.out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(int trials, std::uint64_t seed) {
    mll::Rng rng(seed);
    bool all_ok = true;
    for (const auto& [name, spec] : mll::gradcheck_grid()) {
        const mll::GradCheckResult res = mll::gradcheck_config(name, spec, trials, rng);
        const bool ok = res.failures == 0;
        all_ok = all_ok && ok;
        std::printf("[%s] %-28s instances %3d failures %d worst rel %.3g\n", ok ? "PASS" : "FAIL",
                    res.config.c_str(), res.instances, res.failures, res.worst_rel_error);
    }
    return all_ok ? kExitOk : kExitToleranceFailure;
}

// ---------------------------------------------------------------------------
// sample-margins
// ---------------------------------------------------------------------------

int cmd_sample_margins(std::size_t n, double mean, double sigma, std::uint64_t seed,
                       const std::string& out_path, bool dump_values) {
    mll::Rng rng(seed);
    const mll::MarginDraw draw = mll::sample_margins(n, mean, sigma, rng);
    double sum = 0.0, lo = draw.values[0], hi = draw.values[0];
    for (double v : draw.values) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double sample_mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double v : draw.values) sq += (v - sample_mean) * (v - sample_mean);

    json j;
    j["n"] = n;
    j["requested"] = {{"mean", mean}, {"sigma", sigma}};
    j["seed"] = seed;
    j["generator"] = mll::Rng::kGeneratorName;
    j["mean"] = sample_mean;
    j["std"] = std::sqrt(sq / static_cast<double>(n));
    j["min"] = lo;
    j["max"] = hi;
    j["seed_state"] = draw.seed_state;
    if (dump_values) j["values"] = draw.values;
    const std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) mll::write_text_file(out_path, text);
    std::fputs(text.c_str(), stdout);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"margin loss library"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--seed", global.seed, "run seed")->each([&](const std::string&) {
        global.seed_set = true;
    });
    app.add_option("--out", global.out, "output directory");
    app.add_option("--profile", global.profile, "config profile")
        ->check(CLI::IsMember({"toy", "paper"}));

    auto* toy = app.add_subcommand("toy", "run the 2-D toy experiment");
    toy->fallthrough();
    std::string toy_config;
    std::int64_t toy_iterations = -1;
    toy->add_option("--config", toy_config, "JSON run config");
    toy->add_option("--iterations", toy_iterations, "override training iterations");

    auto* eval = app.add_subcommand("eval", "evaluate stored embeddings");
    eval->fallthrough();
    std::string eval_embeddings, eval_pairs, eval_gallery, eval_report;
    bool eval_accuracy = false, eval_rank1 = false;
    double eval_tar_far = 0.0;
    eval->add_option("--embeddings", eval_embeddings, "embedding file")->required();
    eval->add_option("--pairs", eval_pairs, "pairs protocol file");
    eval->add_option("--gallery", eval_gallery, "gallery embedding file (for --rank1)");
    eval->add_flag("--accuracy", eval_accuracy, "k-fold verification accuracy");
    eval->add_option("--tar-far", eval_tar_far, "TAR at this FAR target");
    eval->add_flag("--rank1", eval_rank1, "rank-1 identification rate");
    eval->add_option("--report", eval_report, "write the JSON report here too");

    auto* sweep = app.add_subcommand("sweep", "rank loss configs by Borda count");
    sweep->fallthrough();
    std::string sweep_config, sweep_table;
    std::vector<std::size_t> sweep_groups;
    sweep->add_option("--config", sweep_config, "JSON grid config (train-and-evaluate mode)");
    sweep->add_option("--table", sweep_table, "accuracy CSV to ingest instead of training");
    sweep->add_option("--groups", sweep_groups, "group sizes for --table (e.g. 3 4 4)");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gradcheck->fallthrough();
    int gc_trials = 100;
    gradcheck->add_option("--trials", gc_trials, "instances per configuration")
        ->check(CLI::PositiveNumber);

    auto* sample = app.add_subcommand("sample-margins", "draw margins and report statistics");
    sample->fallthrough();
    std::size_t sm_n = 0;
    double sm_mean = 0.5, sm_sigma = 0.05;
    std::string sm_out;
    bool sm_values = false;
    sample->add_option("--n", sm_n, "number of draws")->required()->check(CLI::PositiveNumber);
    sample->add_option("--mean", sm_mean, "distribution mean");
    sample->add_option("--sigma", sm_sigma, "distribution sigma");
    sample->add_option("--report", sm_out, "write the JSON report here too");
    sample->add_flag("--values", sm_values, "include the raw draws in the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (toy->parsed()) return cmd_toy(toy_config, global, toy_iterations);
        if (eval->parsed()) {
            // with a pair list and no explicit metric selection, verification
            // accuracy is the default
            if (!eval_pairs.empty() && !eval_accuracy && eval_tar_far == 0.0 && !eval_rank1)
                eval_accuracy = true;
            return cmd_eval(eval_embeddings, eval_pairs, eval_gallery, eval_accuracy,
                            eval_tar_far, eval_rank1, eval_report);
        }
        if (sweep->parsed()) {
            if (!sweep_table.empty()) {
                const mll::BordaTable table = sweep_ingest_table(sweep_table, sweep_groups);
                write_borda_outputs(table, global.out.empty() ? "." : global.out);
                return kExitOk;
            }
            return cmd_sweep_grid(sweep_config, global);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_trials, global.seed_set ? global.seed : 1);
        if (sample->parsed())
            return cmd_sample_margins(sm_n, sm_mean, sm_sigma, global.seed_set ? global.seed : 1,
                                      sm_out, sm_values);
    } catch (const mll::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const mll::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const mll::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitToleranceFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitToleranceFailure;
    }
    return kExitUsage;
}
