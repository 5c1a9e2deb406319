#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "fusionnet/graph.hpp"

using namespace fusionnet;

TEST_CASE("shape inference: pooling, concat, gap") {
    CHECK(infer_output_shape(MaxPool2DSpec{4, 4, 4, 4}, {Shape{28, 28, 128}}) == Shape{7, 7, 128});
    CHECK(infer_output_shape(ConcatSpec{}, {Shape{7, 7, 1920}, Shape{7, 7, 2048}}) == Shape{7, 7, 3968});
    CHECK(infer_output_shape(GlobalAvgPool2DSpec{}, {Shape{7, 7, 2048}}) == Shape{2048});
}

TEST_CASE("shape inference: conv padding modes") {
    // valid: floor((W-k)/s)+1 ; same: ceil(W/s)
    CHECK(infer_output_shape(Conv2DSpec{16, 3, 3, 1, 1, Padding::Valid}, {Shape{28, 28, 3}}) == Shape{26, 26, 16});
    CHECK(infer_output_shape(Conv2DSpec{16, 3, 3, 2, 2, Padding::Same}, {Shape{28, 28, 3}}) == Shape{14, 14, 16});
    CHECK(infer_output_shape(Conv2DSpec{64, 7, 7, 2, 2, Padding::Same}, {Shape{224, 224, 3}}) == Shape{112, 112, 64});
    CHECK(infer_output_shape(Conv2DSpec{32, 1, 7, 1, 1, Padding::Same}, {Shape{5, 5, 448}}) == Shape{5, 5, 32});
    // a valid-padded kernel wider than its input has no output
    CHECK_THROWS_AS(infer_output_shape(Conv2DSpec{32, 1, 7}, {Shape{5, 5, 448}}), std::invalid_argument);
}

TEST_CASE("shape inference: preserving layers and dense") {
    const Shape s{14, 14, 512};
    CHECK(infer_output_shape(BatchNormSpec{}, {s}) == s);
    CHECK(infer_output_shape(ReLUSpec{}, {s}) == s);
    CHECK(infer_output_shape(DropoutSpec{0.3}, {s}) == s);
    CHECK(infer_output_shape(AddSpec{}, {s, s}) == s);
    CHECK(infer_output_shape(DenseSpec{256}, {Shape{2048}}) == Shape{256});
    CHECK(infer_output_shape(SoftmaxSpec{}, {Shape{3}}) == Shape{3});
}

TEST_CASE("shape inference errors") {
    CHECK_THROWS_AS(infer_output_shape(ConcatSpec{}, {Shape{7, 7, 8}, Shape{5, 5, 8}}), std::invalid_argument);
    CHECK_THROWS_AS(infer_output_shape(ConcatSpec{}, {Shape{7, 7, 8}}), std::invalid_argument);
    CHECK_THROWS_AS(infer_output_shape(AddSpec{}, {Shape{7, 7, 8}, Shape{7, 7, 9}}), std::invalid_argument);
    CHECK_THROWS_AS(infer_output_shape(Conv2DSpec{8, 9, 9}, {Shape{5, 5, 3}}), std::invalid_argument);
    CHECK_THROWS_AS(infer_output_shape(DropoutSpec{1.0}, {Shape{3}}), std::invalid_argument);
}

TEST_CASE("parameter counts match the published fusion-head layers") {
    CHECK(count_params(Conv2DSpec{2048, 1, 1}, Shape{7, 7, 3968}).trainable == 8128512);
    CHECK(count_params(Conv2DSpec{2048, 1, 1}, Shape{5, 5, 3584}).trainable == 7342080);
    CHECK(count_params(DenseSpec{256}, Shape{2048}).trainable == 524544);
    CHECK(count_params(DenseSpec{3}, Shape{256}).trainable == 771);

    const ParamCount bn = count_params(BatchNormSpec{}, Shape{5, 5, 3584});
    CHECK(bn.total() == 14336);
    CHECK(bn.trainable == 7168);
    CHECK(count_params(BatchNormSpec{}, Shape{7, 7, 3968}).total() == 15872);

    CHECK(count_params(Conv2DSpec{16, 3, 3}, Shape{32, 32, 3}).trainable == 448);
}

TEST_CASE("scale-free batch norm drops the per-channel scale") {
    const ParamCount bn = count_params(BatchNormSpec{/*scale=*/false}, Shape{8, 8, 10});
    CHECK(bn.total() == 30);
    CHECK(bn.trainable == 10);
    CHECK(bn.non_trainable == 20);
}

TEST_CASE("freezing moves learned parameters to non-trainable, total unchanged") {
    const LayerSpec specs[] = {LayerSpec{Conv2DSpec{8, 3, 3}}, LayerSpec{DenseSpec{8}},
                               LayerSpec{BatchNormSpec{}}};
    const Shape inputs[] = {Shape{8, 8, 4}, Shape{16}, Shape{8, 8, 4}};
    for (int i = 0; i < 3; ++i) {
        const ParamCount open = count_params(specs[i], inputs[i], false);
        const ParamCount frozen = count_params(specs[i], inputs[i], true);
        CHECK(frozen.trainable == 0);
        CHECK(frozen.total() == open.total());
    }
    // moving statistics are non-trainable either way
    CHECK(count_params(BatchNormSpec{}, Shape{8, 8, 4}, true).non_trainable == 16);
}

TEST_CASE("count_params ignores spatial extent") {
    for (int64_t w : {7, 14, 28, 56}) {
        CHECK(count_params(Conv2DSpec{32, 3, 3}, Shape{w, w, 16}).trainable ==
              count_params(Conv2DSpec{32, 3, 3}, Shape{7, 7, 16}).trainable);
        CHECK(count_params(BatchNormSpec{}, Shape{w, w, 16}).total() == 64);
    }
}

TEST_CASE("concat channel count is additive for any arity") {
    for (int arity = 2; arity <= 5; ++arity) {
        std::vector<Shape> inputs;
        int64_t channels = 0;
        for (int i = 0; i < arity; ++i) {
            inputs.push_back(Shape{9, 9, 3 + i});
            channels += 3 + i;
        }
        CHECK(infer_output_shape(ConcatSpec{}, inputs) == Shape{9, 9, channels});
    }
}

namespace {
ModelGraph tiny_graph() {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{256}});
    g.add("dense", DenseSpec{3}, {input});
    return g;
}
}  // namespace

TEST_CASE("summarize: rows, totals, and single-input requirement") {
    const ModelGraph g = tiny_graph();
    const Summary summary = summarize(g);
    REQUIRE(summary.rows.size() == 2);
    CHECK(summary.rows[1].params.trainable == 771);
    CHECK(summary.totals.trainable == 771);

    long long row_sum = 0;
    for (const SummaryRow& row : summary.rows) row_sum += row.params.total();
    CHECK(row_sum == summary.totals.total());

    ModelGraph two_inputs;
    two_inputs.add("a", InputSpec{Shape{4}});
    two_inputs.add("b", InputSpec{Shape{4}});
    CHECK_THROWS_AS(summarize(two_inputs), std::invalid_argument);
}

TEST_CASE("graph construction rules") {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{8, 8, 2}});
    CHECK_THROWS_AS(g.add("input", InputSpec{Shape{8, 8, 2}}), std::invalid_argument);   // duplicate name
    CHECK_THROWS_AS(g.add("bad", ReLUSpec{}, {5}), std::invalid_argument);               // forward reference
    CHECK_THROWS_AS(g.add("orphan", ReLUSpec{}, {}), std::invalid_argument);             // non-input without inputs
    g.add("ok", ReLUSpec{}, {input});
    CHECK(g.find("ok") == 1);
    CHECK(g.find("missing") == -1);
}

TEST_CASE("shape inference failure names the offending node") {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{4, 4, 2}});
    g.add("too_big_pool", MaxPool2DSpec{9, 9, 1, 1}, {input});
    CHECK_THROWS_WITH_AS(summarize(g), doctest::Contains("too_big_pool"), std::invalid_argument);
}

TEST_CASE("ledger: parse, verify, perturb, vacuous") {
    const ModelGraph g = tiny_graph();
    const Summary summary = summarize(g);

    const std::string csv =
        "name,out_shape,params\n"
        "dense,(3),771\n"
        "trainable_params,-,771\n";
    const VerifyReport ok = verify_against_expected(summary, parse_ledger_csv(csv));
    CHECK(ok.pass);
    CHECK(ok.mismatches == 0);

    const std::string bad_csv =
        "name,out_shape,params\n"
        "dense,(4),771\n"
        "trainable_params,-,771\n";
    const VerifyReport bad = verify_against_expected(summary, parse_ledger_csv(bad_csv));
    CHECK_FALSE(bad.pass);
    CHECK(bad.mismatches == 1);

    const VerifyReport vacuous = verify_against_expected(summary, {});
    CHECK(vacuous.pass);
    CHECK(vacuous.warnings.size() == 1);
}

TEST_CASE("ledger: missing row and skipped columns") {
    const ModelGraph g = tiny_graph();
    const Summary summary = summarize(g);
    const VerifyReport missing = verify_against_expected(summary, parse_ledger_csv("name,out_shape,params\nghost,(3),1\n"));
    CHECK_FALSE(missing.pass);

    const VerifyReport relaxed = verify_against_expected(summary, parse_ledger_csv("name,out_shape,params\ndense,-,-\n"));
    CHECK(relaxed.pass);
}
