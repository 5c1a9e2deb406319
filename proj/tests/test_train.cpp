#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/rng.hpp"
#include "fusionnet/serialize.hpp"
#include "fusionnet/train.hpp"

using namespace fusionnet;

namespace {
RunConfig small_config() {
    RunConfig cfg;
    cfg.variant = ModelVariant::M4;
    cfg.scale = ModelScale::Toy;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.synth_per_class = 24;
    cfg.seed = 5;
    return cfg;
}
}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
    RunConfig cfg = small_config();
    cfg.epochs = 1;
    cfg.lr = 0.0;
    const SplitData data = load_run_data(cfg);

    ModelGraph graph = build_toy(cfg.variant, data.train.classes);
    ModelGraph reference = build_toy(cfg.variant, data.train.classes);
    initialize_parameters(reference, Rng::mix(cfg.seed, 17));  // same seed as train_loop

    const TrainResult result = train_loop(cfg, graph, data);

    // trainable parameters unchanged (batch-norm moving statistics do move)
    for (const std::string& name : trainable_param_names(reference)) {
        CHECK(result.best_params.at(name).data == reference.params.at(name).data);
    }

    // val accuracy equals the untrained model's accuracy
    ModelGraph untrained = build_toy(cfg.variant, data.train.classes);
    initialize_parameters(untrained, Rng::mix(cfg.seed, 17));
    // inference uses moving statistics; replay the single epoch's updates
    const Tensor val_probs = predict_probs(graph, data.val.images, cfg.batch_size);
    CHECK(result.history.back().val_accuracy == accuracy(val_probs, data.val.labels));
}

TEST_CASE("history length equals epochs") {
    RunConfig cfg = small_config();
    cfg.epochs = 3;
    const TrainResult result = train_loop(cfg);
    CHECK(result.history.size() == 3);
}

TEST_CASE("training is deterministic: identical reports and checkpoints") {
    const RunConfig cfg = small_config();
    const TrainResult a = train_loop(cfg);
    const TrainResult b = train_loop(cfg);
    CHECK(report_to_json(a.test_report, a.history) == report_to_json(b.test_report, b.history));
    CHECK(checkpoint_to_json(a.best_params) == checkpoint_to_json(b.best_params));
}

TEST_CASE("config validation") {
    RunConfig cfg = small_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.scale = ModelScale::Full;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // needs --allow-untrained-full
    cfg.allow_untrained_full = true;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("run config json round trip with overrides") {
    RunConfig cfg = small_config();
    cfg.data_dir = "/some/dir";
    cfg.augment = true;
    const RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(back.variant == cfg.variant);
    CHECK(back.scale == cfg.scale);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.data_dir == cfg.data_dir);
    CHECK(back.augment == cfg.augment);
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("synthetic source sizes: train n, val n/4, test n/2 per class") {
    RunConfig cfg = small_config();
    cfg.synth_per_class = 20;
    const SplitData data = load_run_data(cfg);
    CHECK(data.train.images.size() == 60);
    CHECK(data.val.images.size() == 15);
    CHECK(data.test.images.size() == 30);
}
