// Command-line front end: model summaries, ledger verification, fusion
// planning, synthetic data generation, training, evaluation, activation
// maps, and gradient checking.
//
// Exit codes: 0 success, 1 verification/check failure, 2 usage error.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/data.hpp"
#include "fusionnet/evaluate.hpp"
#include "fusionnet/fdsfm.hpp"
#include "fusionnet/graph.hpp"
#include "fusionnet/ledger.hpp"
#include "fusionnet/models.hpp"
#include "fusionnet/png_io.hpp"
#include "fusionnet/rng.hpp"
#include "fusionnet/serialize.hpp"
#include "fusionnet/train.hpp"

namespace fs = std::filesystem;
using namespace fusionnet;

namespace {

uint64_t env_seed_fallback() {
    if (const char* env = std::getenv("FUSIONNET_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 0;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// Resolved config copy; generated_at is the only timestamped field in any
/// output directory.
void write_config_copy(const RunConfig& cfg, const std::string& out_dir) {
    nlohmann::json doc = nlohmann::json::parse(run_config_to_json(cfg));
    doc["generated_at"] = timestamp_utc();
    write_file((fs::path(out_dir) / "config.json").string(), doc.dump(2) + "\n");
}

ModelGraph build_from(const RunConfig& cfg, int classes) {
    FusionConfig fusion = default_fusion_config();
    fusion.classes = classes;
    fusion.dropout = cfg.dropout;
    return cfg.scale == ModelScale::Toy ? build_toy(cfg.variant, classes) : build_subsidiary(cfg.variant, fusion);
}

struct CommonModelFlags {
    std::string variant = "m4";
    std::string scale = "full";
};

void add_run_config_flags(CLI::App* cmd, RunConfig& cfg, std::string& variant, std::string& scale,
                          std::string& config_path, bool& seed_given, uint64_t& seed_value) {
    cmd->add_option("--config", config_path, "JSON config file; explicit flags override its values");
    cmd->add_option("--variant", variant, "model variant: m1|m2|m3|m4");
    cmd->add_option("--scale", scale, "model scale: full|toy");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--batch-size", cfg.batch_size, "batch size");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--dropout", cfg.dropout, "dropout rate in [0,1)");
    cmd->add_option("--seed", seed_value, "RNG seed (falls back to FUSIONNET_SEED)")->each([&](const std::string&) {
        seed_given = true;
    });
    cmd->add_option("--data", cfg.data_dir, "dataset directory (root/<class>/*.png)");
    cmd->add_option("--synth", cfg.synth_per_class, "synthetic training samples per class");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_flag("--augment", cfg.augment, "apply shear/zoom augmentation while training");
    cmd->add_flag("--allow-untrained-full", cfg.allow_untrained_full,
                  "confirm training a full-scale graph with randomly initialized backbones");
}

RunConfig resolve_run_config(const CLI::App* cmd, RunConfig flag_cfg, const std::string& variant,
                             const std::string& scale, const std::string& config_path, bool seed_given,
                             uint64_t seed_value) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = run_config_from_json(read_file(config_path));

    auto given = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (given("--variant") || config_path.empty()) cfg.variant = parse_variant(variant);
    if (given("--scale") || config_path.empty()) cfg.scale = parse_scale(scale);
    if (given("--epochs")) cfg.epochs = flag_cfg.epochs;
    if (given("--batch-size")) cfg.batch_size = flag_cfg.batch_size;
    if (given("--lr")) cfg.lr = flag_cfg.lr;
    if (given("--dropout")) cfg.dropout = flag_cfg.dropout;
    if (given("--data")) cfg.data_dir = flag_cfg.data_dir;
    if (given("--synth")) cfg.synth_per_class = flag_cfg.synth_per_class;
    if (given("--out")) cfg.out_dir = flag_cfg.out_dir;
    if (given("--augment")) cfg.augment = flag_cfg.augment;
    if (given("--allow-untrained-full")) cfg.allow_untrained_full = flag_cfg.allow_untrained_full;
    cfg.seed = seed_given ? seed_value : (config_path.empty() || given("--seed") ? env_seed_fallback() : cfg.seed);
    if (seed_given) cfg.seed = seed_value;
    return cfg;
}

int cmd_summary(const std::string& variant, const std::string& scale, int64_t classes) {
    FusionConfig cfg = default_fusion_config();
    cfg.classes = classes;
    const ModelGraph graph = build_model(parse_variant(variant), parse_scale(scale), cfg);
    std::cout << format_summary(summarize(graph));
    return 0;
}

int cmd_verify_table(const std::string& variant, const std::string& scale, const std::string& ledger_path) {
    const ModelGraph graph = build_model(parse_variant(variant), parse_scale(scale), default_fusion_config());
    const Summary summary = summarize(graph);
    const std::vector<LedgerRow> expected =
        ledger_path.empty() ? multifusionnet_ledger() : load_ledger_file(ledger_path);
    const VerifyReport report = verify_against_expected(summary, expected);
    std::cout << format_verify_report(report);
    return report.pass ? 0 : 1;
}

int cmd_plan_fdsfm(const std::string& shapes_arg, int64_t target, int64_t filters) {
    std::vector<Shape> shapes;
    std::string item;
    std::stringstream ss(shapes_arg);
    while (std::getline(ss, item, ',')) shapes.push_back(Shape::parse(item));
    const FusionPlan plan = plan_fusion(shapes, target, filters);
    std::cout << plan_to_json(plan) << "\n";
    return 0;
}

int cmd_synth_data(int64_t n_per_class, const std::string& out_dir, uint64_t seed) {
    const LabelledData data = synthesize(n_per_class, seed);
    const std::vector<std::string> class_names = {"covid", "pneumonia", "normal"};
    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.classes = class_names;
    std::vector<int64_t> counters(class_names.size(), 0);
    for (const std::string& name : class_names) fs::create_directories(fs::path(out_dir) / name);
    for (size_t i = 0; i < data.images.size(); ++i) {
        const Tensor& img = data.images[i];
        const int label = data.labels[i];
        ImageU8 u8;
        u8.height = img.shape.dim(0);
        u8.width = img.shape.dim(1);
        u8.channels = 1;
        u8.pixels.resize(static_cast<size_t>(u8.height * u8.width));
        for (size_t p = 0; p < u8.pixels.size(); ++p) {
            u8.pixels[p] = static_cast<uint8_t>(std::lround((img.data[p] + 1.0) * 127.5));
        }
        char name[32];
        std::snprintf(name, sizeof(name), "%05lld.png", static_cast<long long>(counters[static_cast<size_t>(label)]++));
        const fs::path path = fs::path(out_dir) / class_names[static_cast<size_t>(label)] / name;
        write_png(path.string(), u8);
        manifest.samples.emplace_back(path.string(), label);
    }
    write_manifest_csv(manifest, (fs::path(out_dir) / "manifest.csv").string());
    std::cout << "wrote " << data.images.size() << " images under " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const SplitData data = load_run_data(cfg);
    ModelGraph graph = build_from(cfg, data.train.classes);
    const TrainResult result = train_loop(cfg, graph, data);

    fs::create_directories(cfg.out_dir);
    write_config_copy(cfg, cfg.out_dir);
    emit_report(result.test_report, cfg.out_dir, result.history);
    save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.json").string(), result.best_params);

    std::cout << "best val accuracy " << result.best_val_accuracy << " (epoch " << result.best_epoch + 1 << "/"
              << cfg.epochs << ")\n";
    std::cout << "test accuracy " << result.test_accuracy << "\n";
    std::cout << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
    const SplitData data = load_run_data(cfg);
    ModelGraph graph = build_from(cfg, data.test.classes);
    graph.params = load_checkpoint(checkpoint_path);
    const Tensor probs = predict_probs(graph, data.test.images, cfg.batch_size);
    const EvalReport report = evaluate(probs, data.test.labels);
    fs::create_directories(cfg.out_dir);
    write_config_copy(cfg, cfg.out_dir);
    emit_report(report, cfg.out_dir);
    std::cout << "test accuracy " << report.metrics.accuracy << "\n";
    std::cout << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_gradcam(const RunConfig& cfg, const std::string& checkpoint_path, int64_t sample, int class_id) {
    const SplitData data = load_run_data(cfg);
    ModelGraph graph = build_from(cfg, data.test.classes);
    graph.params = load_checkpoint(checkpoint_path);
    if (sample < 0 || sample >= static_cast<int64_t>(data.test.images.size())) {
        throw std::invalid_argument("gradcam: sample index out of range");
    }
    const Tensor input = stack(data.test.images, {sample});
    const int target_class = class_id >= 0 ? class_id : data.test.labels[static_cast<size_t>(sample)];
    const Tensor map = grad_cam(graph, input, target_class);

    fs::create_directories(cfg.out_dir);
    nlohmann::json doc = {{"sample", sample},
                          {"class", target_class},
                          {"height", map.shape.dim(0)},
                          {"width", map.shape.dim(1)},
                          {"values", map.data}};
    write_file((fs::path(cfg.out_dir) / "heatmap.json").string(), doc.dump(2) + "\n");

    ImageU8 u8;
    u8.height = map.shape.dim(0);
    u8.width = map.shape.dim(1);
    u8.channels = 1;
    u8.pixels.resize(map.data.size());
    for (size_t i = 0; i < map.data.size(); ++i) u8.pixels[i] = static_cast<uint8_t>(std::lround(map.data[i] * 255.0));
    write_png((fs::path(cfg.out_dir) / "heatmap.png").string(), u8);
    std::cout << "heatmap " << map.shape.str() << " for class " << target_class << " written to " << cfg.out_dir
              << "\n";
    return 0;
}

/// Small mixed graph exercising every differentiable layer kind.
ModelGraph gradcheck_graph() {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{6, 6, 2}});
    // bias-free: the batch norm right after would cancel a conv bias exactly
    int x = g.add("conv_a", Conv2DSpec{4, 3, 3, 1, 1, Padding::Same, false}, {input});
    x = g.add("bn_a", BatchNormSpec{}, {x});
    x = g.add("relu_a", ReLUSpec{}, {x});
    const int pooled = g.add("pool_a", MaxPool2DSpec{2, 2, 2, 2, Padding::Valid}, {x});
    const int left = g.add("conv_left", Conv2DSpec{4, 1, 1, 1, 1, Padding::Valid, true}, {pooled});
    const int right = g.add("conv_right", Conv2DSpec{4, 3, 3, 1, 1, Padding::Same, true}, {pooled});
    const int added = g.add("add", AddSpec{}, {left, right});
    const int cat = g.add("concat", ConcatSpec{}, {added, pooled});
    x = g.add("gap", GlobalAvgPool2DSpec{}, {cat});
    x = g.add("dense_1", DenseSpec{5, true}, {x});
    x = g.add("relu_d", ReLUSpec{}, {x});
    x = g.add("dense_2", DenseSpec{3, true}, {x});
    g.outputs = {g.add("softmax", SoftmaxSpec{}, {x})};
    return g;
}

int cmd_gradcheck(const std::string& variant, const std::string& scale, double h, int64_t max_coords,
                  uint64_t seed, double tolerance) {
    ModelGraph graph;
    Tensor batch;
    if (variant.empty()) {
        graph = gradcheck_graph();
        Rng rng(Rng::mix(seed, 5));
        batch = Tensor::zeros(Shape{3, 6, 6, 2});
        for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
    } else {
        if (parse_scale(scale) != ModelScale::Toy) {
            throw std::invalid_argument("gradcheck: only toy-scale graphs are small enough to difference");
        }
        graph = build_toy(parse_variant(variant));
        Rng rng(Rng::mix(seed, 5));
        batch = Tensor::zeros(Shape{2, 32, 32, 1});
        for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
        if (max_coords == 0) max_coords = 25;
    }
    initialize_parameters(graph, Rng::mix(seed, 11));
    std::vector<int> labels(static_cast<size_t>(batch.shape.dim(0)));
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);

    const double err = grad_check(graph, batch, labels, h, max_coords);
    std::cout << "max relative gradient error: " << err << " (tolerance " << tolerance << ")\n";
    return err < tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN fusion graph engine: architecture verification, fusion planning, and toy-scale training"};
    app.require_subcommand(0, 1);

    // summary
    auto* summary = app.add_subcommand("summary", "print a layer/shape/parameter summary of a model");
    CommonModelFlags summary_flags;
    int64_t summary_classes = 3;
    summary->add_option("--variant", summary_flags.variant, "m1|m2|m3|m4")->capture_default_str();
    summary->add_option("--scale", summary_flags.scale, "full|toy")->capture_default_str();
    summary->add_option("--classes", summary_classes, "output classes")->capture_default_str();

    // verify-table
    auto* verify = app.add_subcommand("verify-table", "check the model summary against the expected ledger");
    CommonModelFlags verify_flags;
    std::string verify_ledger;
    verify->add_option("--variant", verify_flags.variant, "m1|m2|m3|m4")->capture_default_str();
    verify->add_option("--scale", verify_flags.scale, "full|toy")->capture_default_str();
    verify->add_option("--ledger", verify_ledger, "CSV ledger path (default: embedded ledger)");

    // plan-fdsfm
    auto* plan = app.add_subcommand("plan-fdsfm", "plan pooling for different-sized feature maps");
    std::string plan_shapes;
    int64_t plan_target = 0, plan_filters = 2048;
    plan->add_option("--shapes", plan_shapes, "comma-separated map shapes, e.g. 28x28x128,7x7x1024")->required();
    plan->add_option("--target", plan_target, "target spatial size")->required();
    plan->add_option("--filters", plan_filters, "1x1 projection width")->capture_default_str();

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic png dataset");
    int64_t synth_n = 200;
    std::string synth_out = "synth-data";
    uint64_t synth_seed = env_seed_fallback();
    synth->add_option("--n", synth_n, "samples per class")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();
    synth->add_option("--seed", synth_seed, "RNG seed");

    // train / eval / gradcam share the run config flags
    auto* train = app.add_subcommand("train", "train a model and write report + checkpoint");
    RunConfig train_cfg;
    std::string train_variant = "m4", train_scale = "toy", train_config;
    bool train_seed_given = false;
    uint64_t train_seed = 0;
    add_run_config_flags(train, train_cfg, train_variant, train_scale, train_config, train_seed_given, train_seed);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured dataset");
    RunConfig eval_cfg;
    std::string eval_variant = "m4", eval_scale = "toy", eval_config, eval_checkpoint;
    bool eval_seed_given = false;
    uint64_t eval_seed = 0;
    add_run_config_flags(eval, eval_cfg, eval_variant, eval_scale, eval_config, eval_seed_given, eval_seed);
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint.json to evaluate")->required();

    auto* gradcam_cmd = app.add_subcommand("gradcam", "emit a class activation heatmap for one test sample");
    RunConfig cam_cfg;
    std::string cam_variant = "m4", cam_scale = "toy", cam_config, cam_checkpoint;
    bool cam_seed_given = false;
    uint64_t cam_seed = 0;
    int64_t cam_sample = 0;
    int cam_class = -1;
    add_run_config_flags(gradcam_cmd, cam_cfg, cam_variant, cam_scale, cam_config, cam_seed_given, cam_seed);
    gradcam_cmd->add_option("--checkpoint", cam_checkpoint, "checkpoint.json to explain")->required();
    gradcam_cmd->add_option("--sample", cam_sample, "test-set sample index")->capture_default_str();
    gradcam_cmd->add_option("--class", cam_class, "class id (default: the sample's label)");

    // gradcheck
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
    std::string gc_variant, gc_scale = "toy";
    double gc_h = 1e-5, gc_tolerance = 1e-4;
    int64_t gc_max_coords = 0;
    uint64_t gc_seed = env_seed_fallback();
    gradcheck_cmd->add_option("--variant", gc_variant, "optional toy variant (m1|m2|m3|m4); default: mixed-layer graph");
    gradcheck_cmd->add_option("--scale", gc_scale, "must be toy")->capture_default_str();
    gradcheck_cmd->add_option("--h", gc_h, "central-difference step")->capture_default_str();
    gradcheck_cmd->add_option("--max-coords", gc_max_coords, "coordinates checked per tensor (0 = all)");
    gradcheck_cmd->add_option("--seed", gc_seed, "RNG seed");
    gradcheck_cmd->add_option("--tolerance", gc_tolerance, "pass threshold")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 2;
    }

    try {
        if (summary->parsed()) return cmd_summary(summary_flags.variant, summary_flags.scale, summary_classes);
        if (verify->parsed()) return cmd_verify_table(verify_flags.variant, verify_flags.scale, verify_ledger);
        if (plan->parsed()) return cmd_plan_fdsfm(plan_shapes, plan_target, plan_filters);
        if (synth->parsed()) return cmd_synth_data(synth_n, synth_out, synth_seed);
        if (train->parsed()) {
            return cmd_train(resolve_run_config(train, train_cfg, train_variant, train_scale, train_config,
                                                train_seed_given, train_seed));
        }
        if (eval->parsed()) {
            return cmd_eval(resolve_run_config(eval, eval_cfg, eval_variant, eval_scale, eval_config, eval_seed_given,
                                               eval_seed),
                            eval_checkpoint);
        }
        if (gradcam_cmd->parsed()) {
            return cmd_gradcam(resolve_run_config(gradcam_cmd, cam_cfg, cam_variant, cam_scale, cam_config,
                                                  cam_seed_given, cam_seed),
                               cam_checkpoint, cam_sample, cam_class);
        }
        if (gradcheck_cmd->parsed()) {
            return cmd_gradcheck(gc_variant, gc_scale, gc_h, gc_max_coords, gc_seed, gc_tolerance);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
