#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/ledger.hpp"
#include "fusionnet/models.hpp"
#include "fusionnet/rng.hpp"

using namespace fusionnet;

TEST_CASE("backbone parameter totals match the published models") {
    const Summary resnet = summarize(build_backbone_shape(BackboneKind::ResNet50V2));
    CHECK(resnet.totals.total() == 23564800);
    CHECK(resnet.totals.non_trainable == 45440);  // batch-norm moving statistics

    const Summary inception = summarize(build_backbone_shape(BackboneKind::InceptionV3));
    CHECK(inception.totals.total() == 21802784);
    CHECK(inception.totals.non_trainable == 34432);

    CHECK(resnet.totals.total() + inception.totals.total() == 45367584);
}

TEST_CASE("tap points carry the published feature-map shapes") {
    const ModelGraph resnet = build_backbone_shape(BackboneKind::ResNet50V2);
    const std::vector<Shape> rshapes = resnet.infer_shapes();
    CHECK(rshapes[static_cast<size_t>(resnet.find("resnet/conv3_block1_1_relu"))] == Shape{28, 28, 128});
    CHECK(rshapes[static_cast<size_t>(resnet.find("resnet/conv4_block6_out"))] == Shape{7, 7, 1024});
    CHECK(rshapes[static_cast<size_t>(resnet.find("resnet/conv3_block4_out"))] == Shape{14, 14, 512});
    CHECK(rshapes[static_cast<size_t>(resnet.find("resnet/conv2_block3_out"))] == Shape{28, 28, 256});
    CHECK(rshapes[static_cast<size_t>(resnet.find("resnet/post_relu"))] == Shape{7, 7, 2048});

    const ModelGraph inception = build_backbone_shape(BackboneKind::InceptionV3);
    const std::vector<Shape> ishapes = inception.infer_shapes();
    CHECK(ishapes[static_cast<size_t>(inception.find("inception/mixed9_3x3_1_relu"))] == Shape{5, 5, 384});
    CHECK(ishapes[static_cast<size_t>(inception.find("inception/mixed9_3x3dbl_reduce_relu"))] == Shape{5, 5, 448});
    CHECK(ishapes[static_cast<size_t>(inception.find("inception/mixed10"))] == Shape{5, 5, 2048});
}

TEST_CASE("full m4 reproduces the published totals") {
    const ModelGraph m4 = build_multifusionnet(default_fusion_config());
    const Summary summary = summarize(m4);
    CHECK(summary.totals.trainable == 16011011);
    CHECK(summary.totals.non_trainable == 45382688);
    CHECK(summary.totals.total() == 61393699);
}

TEST_CASE("full m4 matches the embedded ledger row by row") {
    const Summary summary = summarize(build_multifusionnet(default_fusion_config()));
    const VerifyReport report = verify_against_expected(summary, multifusionnet_ledger());
    for (const VerifyRowResult& row : report.rows) {
        INFO(row.name, ": expected ", row.expected, ", got ", row.actual);
        CHECK(row.matched);
    }
    CHECK(report.pass);
}

TEST_CASE("two-class head shrinks the final dense layer to 514 parameters") {
    FusionConfig cfg = default_fusion_config();
    cfg.classes = 2;
    const Summary summary = summarize(build_multifusionnet(cfg));
    for (const SummaryRow& row : summary.rows) {
        if (row.name == "dense_3") CHECK(row.params.total() == 514);
    }
}

TEST_CASE("subsidiary models: published fusion widths") {
    const FusionConfig cfg = default_fusion_config();

    const Summary m1 = summarize(build_subsidiary(ModelVariant::M1, cfg));
    bool found = false;
    for (const SummaryRow& row : m1.rows) {
        if (row.name == "concatenate_19") {
            CHECK(row.out_shape == Shape{7, 7, 3968});
            found = true;
        }
    }
    CHECK(found);

    const Summary m2 = summarize(build_subsidiary(ModelVariant::M2, cfg));
    found = false;
    for (const SummaryRow& row : m2.rows) {
        if (row.name == "concatenate_25") {
            CHECK(row.out_shape == Shape{5, 5, 3584});
            found = true;
        }
    }
    CHECK(found);

    const Summary m3 = summarize(build_subsidiary(ModelVariant::M3, cfg));
    found = false;
    for (const SummaryRow& row : m3.rows) {
        if (row.name == "lambda_add") {
            CHECK(row.out_shape == Shape{2048});
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("with frozen backbones the trainable set is exactly the fusion head") {
    const ModelGraph m4 = build_multifusionnet(default_fusion_config());
    const std::vector<std::string> names = trainable_param_names(m4);
    const std::vector<std::string> expected = {
        "batch_norm_112/beta", "batch_norm_112/gamma", "batch_norm_115/beta", "batch_norm_115/gamma",
        "conv2d_102/bias",     "conv2d_102/kernel",    "conv2d_105/bias",     "conv2d_105/kernel",
        "dense_2/bias",        "dense_2/kernel",       "dense_3/bias",        "dense_3/kernel",
    };
    CHECK(names == expected);
}

TEST_CASE("toy variants: size, output arity, and head isomorphism") {
    const ModelGraph toy = build_toy(ModelVariant::M4);
    const Summary summary = summarize(toy);
    CHECK(summary.totals.total() < 100000);
    CHECK(summary.totals.non_trainable == summary.totals.total() - summary.totals.trainable);
    // everything learnable: only batch-norm moving statistics are fixed
    long long moving = 0;
    for (const SummaryRow& row : summary.rows) {
        if (row.kind == "BatchNorm") moving += row.params.non_trainable;
    }
    CHECK(summary.totals.non_trainable == moving);

    ModelGraph graph = build_toy(ModelVariant::M4);
    initialize_parameters(graph, 7);
    Rng rng(8);
    Tensor batch = Tensor::zeros(Shape{8, 32, 32, 1});
    for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
    const ActivationTape tape = forward(graph, batch);
    CHECK(tape.outputs.at(graph.output_node()).shape == Shape{8, 3});

    CHECK(fusion_head_kinds(build_toy(ModelVariant::M4)) ==
          fusion_head_kinds(build_multifusionnet(default_fusion_config())));
}

TEST_CASE("toy m4 gradients agree with central differences (sampled coordinates)") {
    ModelGraph graph = build_toy(ModelVariant::M4);
    initialize_parameters(graph, 70);
    Rng rng(71);
    Tensor batch = Tensor::zeros(Shape{2, 32, 32, 1});
    for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
    const double err = grad_check(graph, batch, {0, 2}, 1e-5, /*max_coords_per_param=*/6);
    CHECK(err < 1e-4);
}

TEST_CASE("all toy variants build, run forward, and summarize deterministically") {
    for (ModelVariant variant : {ModelVariant::M1, ModelVariant::M2, ModelVariant::M3, ModelVariant::M4}) {
        const Summary a = summarize(build_toy(variant));
        const Summary b = summarize(build_toy(variant));
        CHECK(a.totals.total() == b.totals.total());
        CHECK(a.totals.total() < 100000);

        ModelGraph graph = build_toy(variant);
        initialize_parameters(graph, 3);
        Tensor batch = Tensor::zeros(Shape{2, 32, 32, 1});
        const ActivationTape tape = forward(graph, batch);
        CHECK(tape.outputs.at(graph.output_node()).shape == Shape{2, 3});
    }
}

TEST_CASE("full-scale summaries are stable across rebuilds") {
    for (ModelVariant variant : {ModelVariant::M1, ModelVariant::M2, ModelVariant::M3}) {
        const Summary a = summarize(build_subsidiary(variant, default_fusion_config()));
        const Summary b = summarize(build_subsidiary(variant, default_fusion_config()));
        CHECK(a.totals.total() == b.totals.total());
        CHECK(a.totals.trainable == b.totals.trainable);
    }
}

TEST_CASE("misdeclared tap shapes are rejected") {
    FusionConfig cfg = default_fusion_config();
    cfg.resnet_taps[0].shape = Shape{28, 28, 129};
    CHECK_THROWS_AS(build_multifusionnet(cfg), std::invalid_argument);
}

TEST_CASE("fusion config json round trip") {
    const FusionConfig cfg = default_fusion_config();
    const FusionConfig parsed = fusion_config_from_json(fusion_config_to_json(cfg));
    CHECK(parsed.projection_filters == cfg.projection_filters);
    CHECK(parsed.classes == cfg.classes);
    CHECK(parsed.inception_trunk.nodes == cfg.inception_trunk.nodes);
    CHECK(parsed.inception_trunk.shape == cfg.inception_trunk.shape);
}

TEST_CASE("embedded ledger matches the data file") {
    // keep src/ledger.cpp and data/multifusionnet_ledger.csv in sync
    std::vector<LedgerRow> embedded = multifusionnet_ledger();
    CHECK(embedded.size() == 29);
}
