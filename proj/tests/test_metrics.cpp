#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mll/metrics.hpp"
#include "mll/rng.hpp"
#include "oracles.hpp"

using namespace mll;

namespace {

PairProtocol random_protocol(std::size_t n_pairs, std::size_t n_embeddings, int k, Rng& rng) {
    for (;;) {
        PairProtocol p;
        p.num_folds = k;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            VerificationPair v;
            v.a = static_cast<std::uint32_t>(rng.uniform_index(n_embeddings));
            v.b = static_cast<std::uint32_t>(rng.uniform_index(n_embeddings));
            v.genuine = rng.next_double() < 0.5;
            p.pairs.push_back(v);
            p.fold.push_back(static_cast<int>(i * k / n_pairs));
        }
        try {
            p.validate();
            return p;
        } catch (const DegenerateFoldError&) {
            // redraw until every fold has both kinds of pairs
        }
    }
}

} // namespace

TEST_CASE("cosine_scores: identical, opposite and random pairs") {
    Matrix emb = Matrix::from_rows({{1.0, 0.0}, {1.0, 0.0}, {-2.0, 0.0}, {0.3, 0.4}});
    PairProtocol proto;
    proto.num_folds = 2;
    proto.pairs = {{0, 1, true}, {0, 2, false}, {0, 3, false}, {1, 3, true}};
    proto.fold = {0, 0, 1, 1};
    const ScoreLists s = cosine_scores(emb, proto);
    REQUIRE(s.genuine.size() == 2);
    REQUIRE(s.impostor.size() == 2);
    CHECK(s.genuine[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.impostor[0] == doctest::Approx(-1.0).epsilon(1e-12));
    // scalar check of an arbitrary pair
    const double expect = (1.0 * 0.3 + 0.0 * 0.4) / (1.0 * 0.5);
    CHECK(std::abs(s.impostor[1] - expect) < 1e-12);
}

TEST_CASE("cosine_scores: out-of-range index rejected") {
    Matrix emb(2, 2, 1.0);
    PairProtocol proto;
    proto.num_folds = 2;
    proto.pairs = {{0, 7, true}};
    proto.fold = {0};
    CHECK_THROWS_AS(pair_scores(emb, proto), IndexOutOfRangeError);
}

TEST_CASE("verification_accuracy_kfold: separable scores give accuracy 1") {
    std::vector<double> scores;
    std::vector<std::uint8_t> genuine;
    std::vector<int> fold;
    for (int i = 0; i < 40; ++i) {
        scores.push_back(i < 20 ? 0.8 + 0.001 * i : -0.5 + 0.001 * i);
        genuine.push_back(i < 20);
        fold.push_back(i % 4);
    }
    CHECK(verification_accuracy_kfold(scores, genuine, fold, 4) == 1.0);
}

TEST_CASE("verification_accuracy_kfold: interleaved identical distributions sit near chance") {
    std::vector<double> scores;
    std::vector<std::uint8_t> genuine;
    std::vector<int> fold;
    for (int i = 0; i < 200; ++i) {
        scores.push_back(i * 0.01);
        genuine.push_back(i % 2 == 0); // alternating labels along the score axis
        fold.push_back(i % 5);
    }
    const double acc = verification_accuracy_kfold(scores, genuine, fold, 5);
    CHECK(acc > 0.35);
    CHECK(acc < 0.65);
}

TEST_CASE("verification_accuracy_kfold: matches the exhaustive oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng.uniform_index(4));
        const std::size_t n = 20 + rng.uniform_index(30);
        std::vector<double> scores(n);
        std::vector<std::uint8_t> genuine(n);
        std::vector<int> fold(n);
        for (std::size_t i = 0; i < n; ++i) {
            genuine[i] = rng.next_double() < 0.5;
            scores[i] = rng.gaussian(genuine[i] ? 0.3 : -0.1, 0.4);
            fold[i] = static_cast<int>(i * static_cast<std::size_t>(k) / n);
        }
        // guarantee non-degenerate training splits
        genuine[0] = 1;
        genuine[1] = 0;
        genuine[n - 1] = 1;
        genuine[n - 2] = 0;
        bool degenerate = false;
        for (int f = 0; f < k && !degenerate; ++f) {
            bool g = false, imp = false;
            for (std::size_t i = 0; i < n; ++i)
                if (fold[i] != f) (genuine[i] ? g : imp) = true;
            degenerate = !(g && imp);
        }
        if (degenerate) continue;
        CHECK(verification_accuracy_kfold(scores, genuine, fold, k) ==
              oracle::kfold_accuracy(scores, genuine, fold, k));
    }
}

TEST_CASE("verification_accuracy_kfold: degenerate training split rejected") {
    // fold 1 holds every impostor, so training for fold 1 sees only genuine
    std::vector<double> scores{0.9, 0.8, 0.1, 0.2, 0.7, 0.6};
    std::vector<std::uint8_t> genuine{1, 1, 0, 0, 1, 1};
    std::vector<int> fold{0, 0, 1, 1, 1, 0};
    CHECK_THROWS_AS(verification_accuracy_kfold(scores, genuine, fold, 2), DegenerateFoldError);
}

TEST_CASE("verification_accuracy_kfold: invariant under strictly increasing transforms") {
    Rng rng(505);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 30;
        const int k = 3;
        std::vector<double> scores(n);
        std::vector<std::uint8_t> genuine(n);
        std::vector<int> fold(n);
        for (std::size_t i = 0; i < n; ++i) {
            genuine[i] = rng.next_double() < 0.5;
            scores[i] = rng.gaussian(genuine[i] ? 0.4 : -0.2, 0.5);
            fold[i] = static_cast<int>(i * static_cast<std::size_t>(k) / n);
        }
        genuine[0] = 1;
        genuine[10] = 0;
        genuine[11] = 1;
        genuine[20] = 0;
        genuine[21] = 1;
        genuine[29] = 0;
        std::vector<double> warped(n);
        for (std::size_t i = 0; i < n; ++i) warped[i] = scores[i] * scores[i] * scores[i] + 2.0 * scores[i];
        CHECK(verification_accuracy_kfold(scores, genuine, fold, k) ==
              verification_accuracy_kfold(warped, genuine, fold, k));
    }
}

TEST_CASE("tar_at_far: fully separated sets reach TAR 1") {
    std::vector<double> genuine{0.9, 0.95, 0.99, 0.8};
    std::vector<double> impostor{0.1, 0.2, 0.3, -0.5, 0.0};
    const TarResult r = tar_at_far(genuine, impostor, 0.2);
    CHECK(r.tar == 1.0);
}

TEST_CASE("tar_at_far: target below FAR resolution lands above all impostors") {
    std::vector<double> genuine{0.9, 0.5, 0.2};
    std::vector<double> impostor{0.1, 0.4, 0.3};
    const TarResult r = tar_at_far(genuine, impostor, 1e-4);
    CHECK(r.insufficient_impostors);
    CHECK(r.threshold > 0.4);
    CHECK(r.tar == doctest::Approx(2.0 / 3.0)); // 0.9 and 0.5 clear the impostors
}

TEST_CASE("tar_at_far: matches the sort-and-count oracle on gaussian scores") {
    Rng rng(606);
    std::vector<double> genuine(5000), impostor(5000);
    for (auto& v : genuine) v = rng.gaussian(0.5, 0.2);
    for (auto& v : impostor) v = rng.gaussian(-0.1, 0.25);
    for (double target : {0.3, 0.1, 0.01, 0.001}) {
        const TarResult r = tar_at_far(genuine, impostor, target);
        CHECK(r.tar == oracle::tar_at_far(genuine, impostor, target));
    }
}

TEST_CASE("tar_at_far: non-decreasing in the FAR target") {
    Rng rng(707);
    std::vector<double> genuine(500), impostor(800);
    for (auto& v : genuine) v = rng.gaussian(0.4, 0.3);
    for (auto& v : impostor) v = rng.gaussian(0.0, 0.3);
    double prev = -1.0;
    for (double target : {0.001, 0.01, 0.05, 0.1, 0.3, 0.6}) {
        const double tar = tar_at_far(genuine, impostor, target).tar;
        CHECK(tar >= prev);
        prev = tar;
    }
}

TEST_CASE("tar_at_far: input validation") {
    CHECK_THROWS_AS(tar_at_far({}, {0.1}, 0.1), InvalidSpecError);
    CHECK_THROWS_AS(tar_at_far({0.1}, {0.1}, 0.0), InvalidSpecError);
    CHECK_THROWS_AS(tar_at_far({0.1}, {0.1}, 1.0), InvalidSpecError);
}

TEST_CASE("rank1: gallery equal to probes is a perfect self-match") {
    Rng rng(808);
    Matrix emb(10, 4);
    for (std::size_t k = 0; k < emb.size(); ++k) emb[k] = rng.gaussian(0.0, 1.0);
    std::vector<int> labels(10);
    std::iota(labels.begin(), labels.end(), 0);
    CHECK(rank1(emb, labels, emb, labels) == 1.0);
}

TEST_CASE("rank1: single wrong-label gallery item scores 0") {
    const Matrix probe = Matrix::from_rows({{1.0, 0.0}});
    const Matrix gallery = Matrix::from_rows({{1.0, 0.1}});
    CHECK(rank1(probe, {3}, gallery, {5}) == 0.0);
}

TEST_CASE("rank1: orthogonal one-hot embeddings against a hand count") {
    // probes are one-hot axes; gallery holds the same axes with shuffled
    // labels, so a probe is correct exactly when the shuffle fixes its label
    Matrix probes(4, 4), gallery(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        probes(i, i) = 1.0;
        gallery(i, i) = 1.0;
    }
    const std::vector<int> plabels{0, 1, 2, 3};
    const std::vector<int> glabels{0, 2, 1, 3}; // fixes 0 and 3
    CHECK(rank1(probes, plabels, gallery, glabels) == doctest::Approx(0.5));
}

TEST_CASE("rank1: matches the exhaustive oracle and a rescaled copy") {
    Rng rng(909);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t p = 3 + rng.uniform_index(10), g = 3 + rng.uniform_index(10);
        const std::size_t d = 2 + rng.uniform_index(4);
        Matrix probes(p, d), gallery(g, d);
        for (std::size_t k = 0; k < probes.size(); ++k) probes[k] = rng.gaussian(0.0, 1.0);
        for (std::size_t k = 0; k < gallery.size(); ++k) gallery[k] = rng.gaussian(0.0, 1.0);
        std::vector<int> plabels(p), glabels(g);
        for (auto& y : plabels) y = static_cast<int>(rng.uniform_index(5));
        for (auto& y : glabels) y = static_cast<int>(rng.uniform_index(5));
        const double rate = rank1(probes, plabels, gallery, glabels);
        CHECK(rate == oracle::rank1(probes, plabels, gallery, glabels));

        Matrix scaled = probes;
        for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] *= 7.25;
        CHECK(rank1(scaled, plabels, gallery, glabels) == rate);
    }
}

TEST_CASE("rank1: empty gallery rejected") {
    CHECK_THROWS_AS(rank1(Matrix(1, 2, 1.0), {0}, Matrix(0, 2), {}), EmptyGalleryError);
}

TEST_CASE("geometry_report: perfect octagon") {
    const double pi = std::acos(-1.0);
    Matrix emb(8 * 5, 2);
    std::vector<int> labels(8 * 5);
    for (int k = 0; k < 8; ++k)
        for (int r = 0; r < 5; ++r) {
            emb(k * 5 + r, 0) = std::cos(2.0 * pi * k / 8.0) * (1.0 + r);
            emb(k * 5 + r, 1) = std::sin(2.0 * pi * k / 8.0) * (1.0 + r);
            labels[k * 5 + r] = k;
        }
    const GeometryReport rep = geometry_report(emb, labels);
    double total = 0.0;
    for (double a : rep.consecutive_angles_deg) {
        CHECK(a == doctest::Approx(45.0).epsilon(1e-9));
        total += a;
    }
    CHECK(total == doctest::Approx(360.0).epsilon(1e-9));
    for (double s : rep.per_class_std) CHECK(s < 1e-12);
    CHECK(rep.mean_std < 1e-12);
}

TEST_CASE("geometry_report: two classes at 0 and 90 degrees") {
    const Matrix emb = Matrix::from_rows({{1.0, 0.0}, {2.0, 0.0}, {0.0, 1.0}, {0.0, 3.0}});
    const std::vector<int> labels{0, 0, 1, 1};
    const GeometryReport rep = geometry_report(emb, labels);
    REQUIRE(rep.consecutive_angles_deg.size() == 2);
    CHECK(rep.consecutive_angles_deg[0] == doctest::Approx(90.0).epsilon(1e-9));
    CHECK(rep.consecutive_angles_deg[1] == doctest::Approx(270.0).epsilon(1e-9));
}

TEST_CASE("geometry_report: matches a scalar recomputation") {
    Rng rng(1010);
    const int c = 5, per = 40;
    Matrix emb(c * per, 2);
    std::vector<int> labels(c * per);
    const double pi = std::acos(-1.0);
    for (int k = 0; k < c; ++k) {
        const double ang = 2.0 * pi * k / c + 0.1;
        for (int r = 0; r < per; ++r) {
            emb(k * per + r, 0) = std::cos(ang) + rng.gaussian(0.0, 0.1);
            emb(k * per + r, 1) = std::sin(ang) + rng.gaussian(0.0, 0.1);
            labels[k * per + r] = k;
        }
    }
    const GeometryReport rep = geometry_report(emb, labels);

    // scalar recomputation of the per-class std for one class
    for (int pick = 0; pick < c; ++pick) {
        double sx = 0, sy = 0;
        std::vector<double> xs, ys;
        for (int i = 0; i < c * per; ++i)
            if (labels[i] == pick) {
                const double n = std::hypot(emb(i, 0), emb(i, 1));
                xs.push_back(emb(i, 0) / n);
                ys.push_back(emb(i, 1) / n);
                sx += emb(i, 0) / n;
                sy += emb(i, 1) / n;
            }
        const double mx = sx / per, my = sy / per;
        double vx = 0, vy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            vx += (xs[i] - mx) * (xs[i] - mx);
            vy += (ys[i] - my) * (ys[i] - my);
        }
        const double expect = 0.5 * (std::sqrt(vx / per) + std::sqrt(vy / per));
        // find this class in the polar ordering
        for (std::size_t i = 0; i < rep.class_order.size(); ++i)
            if (rep.class_order[i] == pick)
                CHECK(std::abs(rep.per_class_std[i] - expect) < 1e-9);
    }

    double total = 0.0;
    for (double a : rep.consecutive_angles_deg) total += a;
    CHECK(total == doctest::Approx(360.0).epsilon(1e-9));
}

TEST_CASE("geometry_report: invariant to a global rotation") {
    Rng rng(1111);
    const int c = 4, per = 30;
    Matrix emb(c * per, 2);
    std::vector<int> labels(c * per);
    const double pi = std::acos(-1.0);
    for (int k = 0; k < c; ++k)
        for (int r = 0; r < per; ++r) {
            const double ang = 2.0 * pi * k / c + 0.3;
            emb(k * per + r, 0) = std::cos(ang) + rng.gaussian(0.0, 0.05);
            emb(k * per + r, 1) = std::sin(ang) + rng.gaussian(0.0, 0.05);
            labels[k * per + r] = k;
        }
    const GeometryReport a = geometry_report(emb, labels);

    auto rotate = [&](double rot) {
        Matrix rotated(emb.rows(), 2);
        for (std::size_t i = 0; i < emb.rows(); ++i) {
            rotated(i, 0) = std::cos(rot) * emb(i, 0) - std::sin(rot) * emb(i, 1);
            rotated(i, 1) = std::sin(rot) * emb(i, 0) + std::cos(rot) * emb(i, 1);
        }
        return rotated;
    };
    auto align = [&](const GeometryReport& b) {
        int shift = -1;
        for (int s = 0; s < c; ++s)
            if (b.class_order[s] == a.class_order[0]) shift = s;
        REQUIRE(shift >= 0);
        return shift;
    };

    // cyclic order and angular gaps survive any rotation
    const GeometryReport b = geometry_report(rotate(0.7), labels);
    int shift = align(b);
    for (int i = 0; i < c; ++i) {
        const int j = (shift + i) % c;
        CHECK(b.class_order[j] == a.class_order[i]);
        CHECK(std::abs(b.consecutive_angles_deg[j] - a.consecutive_angles_deg[i]) < 1e-9);
    }

    // the coordinate-wise spread swaps coordinates under a quarter turn, so
    // per-class stds match exactly there
    const GeometryReport q = geometry_report(rotate(pi / 2.0), labels);
    shift = align(q);
    for (int i = 0; i < c; ++i) {
        const int j = (shift + i) % c;
        CHECK(std::abs(q.per_class_std[j] - a.per_class_std[i]) < 1e-9);
        CHECK(std::abs(q.consecutive_angles_deg[j] - a.consecutive_angles_deg[i]) < 1e-9);
    }
}

TEST_CASE("geometry_report: requires 2-D input and non-empty classes") {
    CHECK_THROWS_AS(geometry_report(Matrix(3, 4, 1.0), {0, 1, 2}), RequiresTwoDError);
    // class 1 missing
    CHECK_THROWS_AS(geometry_report(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}), {0, 2}),
                    InvalidSpecError);
}

TEST_CASE("borda_count: first published arc group") {
    Matrix acc = Matrix::from_rows({
        {99.52, 94.58, 93.82, 89.05, 95.24},
        {99.46, 94.83, 93.88, 89.72, 95.36},
        {99.43, 94.66, 93.80, 89.42, 95.53},
    });
    const BordaTable t = borda_count({"m055", "m050", "m045"},
                                     {"lfw", "agedb", "calfw", "cplfw", "cfp"}, acc, {0});
    CHECK(t.bc_sum == std::vector<int>{8, 13, 9});
    CHECK(t.selected == std::vector<std::size_t>{1});
}

TEST_CASE("borda_count: tie shares the top count of its block") {
    Matrix acc = Matrix::from_rows({
        {99.53, 94.80, 93.68, 89.72, 95.43},
        {99.47, 95.13, 93.67, 89.53, 95.54},
        {99.52, 94.95, 93.78, 89.50, 95.44},
        {99.52, 94.82, 93.90, 89.79, 95.59},
    });
    const BordaTable t = borda_count({"s0125", "s0175", "s025", "s05"},
                                     {"lfw", "agedb", "calfw", "cplfw", "cfp"}, acc, {0});
    // the two configs tied at 99.52 both take BC 3 on the first benchmark
    CHECK(t.bc[2][0] == 3);
    CHECK(t.bc[3][0] == 3);
    CHECK(t.bc_sum == std::vector<int>{11, 11, 12, 17});
    CHECK(t.selected == std::vector<std::size_t>{3});
}

TEST_CASE("borda_count: a full tie hands everyone n points") {
    Matrix acc(4, 3, 0.5);
    const BordaTable t = borda_count({"a", "b", "c", "d"}, {"x", "y", "z"}, acc, {0});
    for (int s : t.bc_sum) CHECK(s == 4 * 3);
}

TEST_CASE("borda_count: invariant under strictly increasing transforms") {
    Rng rng(1212);
    Matrix acc(6, 4);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = rng.uniform(80.0, 100.0);
    const BordaTable a = borda_count({"a", "b", "c", "d", "e", "f"},
                                     {"w", "x", "y", "z"}, acc, {0, 3});
    Matrix warped = acc;
    for (std::size_t k = 0; k < warped.size(); ++k) warped[k] = std::exp(warped[k] / 25.0);
    const BordaTable b = borda_count({"a", "b", "c", "d", "e", "f"},
                                     {"w", "x", "y", "z"}, warped, {0, 3});
    CHECK(a.bc_sum == b.bc_sum);
    CHECK(a.selected == b.selected);
}

TEST_CASE("borda_count: singleton group degenerates to one point per benchmark") {
    Matrix acc = Matrix::from_rows({{99.0, 98.0, 97.0}});
    const BordaTable t = borda_count({"only"}, {"x", "y", "z"}, acc, {0});
    CHECK(t.bc_sum == std::vector<int>{3});
}
