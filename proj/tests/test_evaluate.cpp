#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fusionnet/data.hpp"
#include "fusionnet/evaluate.hpp"
#include "fusionnet/models.hpp"
#include "fusionnet/rng.hpp"
#include "fusionnet/train.hpp"

using namespace fusionnet;
namespace fs = std::filesystem;

TEST_CASE("confusion: diagonal and single-error cases") {
    const ConfusionMatrix diag = confusion({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    CHECK(diag.trace() == 4);
    CHECK(diag.total() == 4);

    const ConfusionMatrix one = confusion({1}, {0}, 3);
    CHECK(one.at(0, 1) == 1);
    CHECK(one.trace() == 0);

    CHECK_THROWS_AS(confusion({0, 1}, {0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(confusion({5}, {0}, 3), std::invalid_argument);
}

TEST_CASE("confusion: random case matches a brute-force tally") {
    Rng rng(1);
    const int k = 4;
    std::vector<int> pred(200), truth(200);
    for (int i = 0; i < 200; ++i) {
        pred[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(k));
        truth[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(k));
    }
    const ConfusionMatrix m = confusion(pred, truth, k);
    for (int a = 0; a < k; ++a) {
        for (int p = 0; p < k; ++p) {
            long long count = 0;
            for (int i = 0; i < 200; ++i) count += truth[static_cast<size_t>(i)] == a && pred[static_cast<size_t>(i)] == p;
            CHECK(m.at(a, p) == count);
        }
    }
}

TEST_CASE("prf1: perfect diagonal and fixed points") {
    const Prf1Result perfect = prf1(confusion({0, 1, 2}, {0, 1, 2}, 3));
    CHECK(perfect.accuracy == 1.0);
    for (const ClassMetrics& m : perfect.per_class) {
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }

    // when P == R, the harmonic mean equals both
    ConfusionMatrix m;
    m.classes = 2;
    m.counts = {3, 1, 1, 3};
    const Prf1Result r = prf1(m);
    CHECK(r.per_class[0].precision == r.per_class[0].recall);
    CHECK(r.per_class[0].f1 == doctest::Approx(r.per_class[0].precision).epsilon(1e-15));
}

TEST_CASE("prf1: random matrices match the defining formulas exactly") {
    Rng rng(2);
    for (int round = 0; round < 30; ++round) {
        const int k = 2 + static_cast<int>(rng.uniform_int(4));
        ConfusionMatrix m;
        m.classes = k;
        m.counts.resize(static_cast<size_t>(k * k));
        for (auto& c : m.counts) c = rng.uniform_int(20);
        const Prf1Result r = prf1(m);

        long long total = 0, trace = 0;
        for (int a = 0; a < k; ++a) {
            for (int p = 0; p < k; ++p) total += m.at(a, p);
            trace += m.at(a, a);
        }
        if (total > 0) CHECK(r.accuracy == static_cast<double>(trace) / static_cast<double>(total));

        for (int c = 0; c < k; ++c) {
            long long col = 0, row = 0;
            for (int i = 0; i < k; ++i) {
                col += m.at(i, c);
                row += m.at(c, i);
            }
            if (col > 0) CHECK(r.per_class[static_cast<size_t>(c)].precision == static_cast<double>(m.at(c, c)) / static_cast<double>(col));
            if (row > 0) CHECK(r.per_class[static_cast<size_t>(c)].recall == static_cast<double>(m.at(c, c)) / static_cast<double>(row));
            const double p = r.per_class[static_cast<size_t>(c)].precision, q = r.per_class[static_cast<size_t>(c)].recall;
            if (p + q > 0) CHECK(r.per_class[static_cast<size_t>(c)].f1 == 2 * p * q / (p + q));
        }
    }
}

TEST_CASE("micro-averaged recall equals accuracy for single-label data") {
    Rng rng(3);
    std::vector<int> pred(150), truth(150);
    for (int i = 0; i < 150; ++i) {
        pred[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(3));
        truth[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(3));
    }
    const ConfusionMatrix m = confusion(pred, truth, 3);
    // micro recall = sum tp / sum (tp + fn) = trace / total
    CHECK(static_cast<double>(m.trace()) / static_cast<double>(m.total()) == prf1(m).accuracy);
}

TEST_CASE("roc: perfect and inverted separations") {
    Tensor scores = Tensor::zeros(Shape{6, 2});
    const std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    for (int i = 0; i < 6; ++i) {
        scores.at2(i, 1) = i < 3 ? 0.9 - 0.01 * i : 0.1 - 0.01 * i;
        scores.at2(i, 0) = 1.0 - scores.at2(i, 1);
    }
    const RocResult perfect = roc_auc(scores, labels);
    CHECK(perfect.curves[1].auc == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(perfect.curves[0].auc == doctest::Approx(1.0).epsilon(1e-15));

    const std::vector<int> inverted = {0, 0, 0, 1, 1, 1};
    const RocResult worst = roc_auc(scores, inverted);
    CHECK(worst.curves[1].auc == doctest::Approx(0.0).epsilon(1e-15));
}

namespace {
// O(n^2) pairwise comparison statistic; ties count one half
double mann_whitney_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}
}  // namespace

TEST_CASE("roc: auc equals the pairwise comparison statistic, ties included") {
    Rng rng(4);
    for (int round = 0; round < 10; ++round) {
        const int n = 60;
        Tensor scores = Tensor::zeros(Shape{n, 2});
        std::vector<int> labels(static_cast<size_t>(n));
        std::vector<double> class1(static_cast<size_t>(n));
        std::vector<bool> positive(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            labels[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(2));
            // quantized scores force plenty of ties
            const double s = std::floor(rng.uniform() * 8.0) / 8.0;
            scores.at2(i, 1) = s;
            scores.at2(i, 0) = 1.0 - s;
            class1[static_cast<size_t>(i)] = s;
            positive[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] == 1;
        }
        const RocResult result = roc_auc(scores, labels);
        if (result.curves[1].skipped) continue;
        CHECK(std::abs(result.curves[1].auc - mann_whitney_auc(class1, positive)) <= 1e-9);
    }
}

TEST_CASE("roc: auc is invariant under strictly monotone score transforms") {
    Rng rng(5);
    const int n = 40;
    Tensor scores = Tensor::zeros(Shape{n, 2});
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(2));
        scores.at2(i, 1) = rng.uniform();
        scores.at2(i, 0) = 1.0 - scores.at2(i, 1);
    }
    Tensor warped = scores;
    for (int i = 0; i < n; ++i) {
        warped.at2(i, 1) = 1.0 / (1.0 + std::exp(-6.0 * (scores.at2(i, 1) - 0.3)));
        warped.at2(i, 0) = 1.0 - warped.at2(i, 1);
    }
    const double a = roc_auc(scores, labels).curves[1].auc;
    const double b = roc_auc(warped, labels).curves[1].auc;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("roc: a class with no positives is skipped and flagged") {
    Tensor scores = Tensor::zeros(Shape{4, 3});
    for (int i = 0; i < 4; ++i) scores.at2(i, 0) = 0.5;
    const RocResult result = roc_auc(scores, {0, 0, 1, 1});
    CHECK(result.curves[2].skipped);
    CHECK_FALSE(result.curves[0].skipped);
}

TEST_CASE("report json round trip is exact") {
    Rng rng(6);
    const int n = 50;
    Tensor probs = Tensor::zeros(Shape{n, 3});
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 3; ++j) {
            probs.at2(i, j) = rng.uniform() + 1e-3;
            sum += probs.at2(i, j);
        }
        for (int j = 0; j < 3; ++j) probs.at2(i, j) /= sum;
        labels[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(3));
    }
    const EvalReport report = evaluate(probs, labels);
    const EvalReport parsed = report_from_json(report_to_json(report));
    CHECK(parsed.metrics.accuracy == report.metrics.accuracy);
    CHECK(parsed.matrix.counts == report.matrix.counts);
    CHECK(parsed.roc.macro_auc == report.roc.macro_auc);
    for (size_t c = 0; c < report.roc.curves.size(); ++c) {
        CHECK(parsed.roc.curves[c].auc == report.roc.curves[c].auc);
        CHECK(parsed.roc.curves[c].points == report.roc.curves[c].points);
    }
    for (size_t c = 0; c < report.metrics.per_class.size(); ++c) {
        CHECK(parsed.metrics.per_class[c].precision == report.metrics.per_class[c].precision);
        CHECK(parsed.metrics.per_class[c].f1 == report.metrics.per_class[c].f1);
    }
}

namespace {
std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

size_t count_substr(const std::string& text, const std::string& needle) {
    size_t count = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}
}  // namespace

TEST_CASE("emit_report: files, polyline count, optional curves") {
    Rng rng(7);
    const int n = 30;
    Tensor probs = Tensor::zeros(Shape{n, 3});
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<size_t>(i)] = i % 3;
        for (int j = 0; j < 3; ++j) probs.at2(i, j) = (j == i % 3) ? 0.8 : 0.1;
    }
    const EvalReport report = evaluate(probs, labels);

    const fs::path dir = fs::temp_directory_path() / "fusionnet_report_test";
    fs::remove_all(dir);

    emit_report(report, dir.string());
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "confusion.csv"));
    CHECK(fs::exists(dir / "roc.svg"));
    CHECK_FALSE(fs::exists(dir / "curves.svg"));  // no history given

    // one polyline per class curve, none for axes
    const std::string svg = slurp(dir / "roc.svg");
    CHECK(count_substr(svg, "<polyline") == 3);

    const std::string csv = slurp(dir / "confusion.csv");
    CHECK(count_substr(csv, "\n") == 3);

    std::vector<EpochStats> history(4);
    for (int e = 0; e < 4; ++e) {
        history[static_cast<size_t>(e)] = {1.0 / (e + 1), 0.5 + 0.1 * e, 1.2 / (e + 1), 0.45 + 0.1 * e};
    }
    emit_report(report, dir.string(), history);
    CHECK(fs::exists(dir / "curves.svg"));
    fs::remove_all(dir);
}

TEST_CASE("grad_cam: shape, range, and zero-gradient behaviour") {
    ModelGraph graph = build_compact_cnn(3);
    initialize_parameters(graph, 8);
    Rng rng(9);
    Tensor input = Tensor::zeros(Shape{1, 32, 32, 1});
    for (double& v : input.data) v = rng.uniform(-1.0, 1.0);

    const Tensor map = grad_cam(graph, input, 0);
    CHECK(map.shape == Shape{8, 8});  // designated conv runs at 8x8
    for (double v : map.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // zero out the dense head: class score no longer depends on the convs
    graph.params.at("dense/kernel") = Tensor::zeros(graph.params.at("dense/kernel").shape);
    const Tensor zero_map = grad_cam(graph, input, 0);
    for (double v : zero_map.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(grad_cam(graph, input, 7), std::invalid_argument);
    CHECK_THROWS_AS(grad_cam(graph, input, 0, "missing_node"), std::invalid_argument);
}

TEST_CASE("grad_cam: localizes the evidence quadrant on the synthetic task") {
    // train the compact cnn briefly on the blob/bands/noise data, then check
    // that class-0 maps peak in the lower-left quadrant
    RunConfig cfg;
    cfg.scale = ModelScale::Toy;
    cfg.epochs = 10;
    cfg.synth_per_class = 60;
    cfg.seed = 123;
    const SplitData data = load_run_data(cfg);

    ModelGraph graph = build_compact_cnn(3);
    const TrainResult result = train_loop(cfg, graph, data);
    CHECK(result.test_accuracy > 0.8);

    int correct_class0 = 0, localized = 0;
    for (size_t i = 0; i < data.test.images.size(); ++i) {
        if (data.test.labels[i] != 0) continue;
        const Tensor input = stack(data.test.images, {static_cast<int64_t>(i)});
        const Tensor probs = predict_probs(graph, {data.test.images[i]}, 1);
        if (argmax_rows(probs)[0] != 0) continue;
        ++correct_class0;
        const Tensor map = grad_cam(graph, input, 0);
        int64_t best = 0;
        for (int64_t p = 1; p < map.size(); ++p) {
            if (map.data[static_cast<size_t>(p)] > map.data[static_cast<size_t>(best)]) best = p;
        }
        const int64_t by = best / map.shape.dim(1), bx = best % map.shape.dim(1);
        if (by >= map.shape.dim(0) / 2 && bx < map.shape.dim(1) / 2) ++localized;
    }
    REQUIRE(correct_class0 > 0);
    CHECK(static_cast<double>(localized) / correct_class0 >= 0.8);
}
