#include "fusionnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/rng.hpp"

namespace fusionnet {

void RunConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (lr < 0.0) throw std::invalid_argument("config: lr must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout must be in [0,1)");
    if (synth_per_class < 1) throw std::invalid_argument("config: synth size must be >= 1");
    if (scale == ModelScale::Full && !allow_untrained_full) {
        throw std::invalid_argument(
            "config: full-scale training runs on randomly initialized backbones; pass "
            "--allow-untrained-full to confirm");
    }
}

std::string run_config_to_json(const RunConfig& cfg) {
    const nlohmann::json doc = {
        {"variant", to_string(cfg.variant)},
        {"scale", to_string(cfg.scale)},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"lr", cfg.lr},
        {"dropout", cfg.dropout},
        {"seed", cfg.seed},
        {"data_dir", cfg.data_dir},
        {"synth_per_class", cfg.synth_per_class},
        {"out_dir", cfg.out_dir},
        {"augment", cfg.augment},
        {"allow_untrained_full", cfg.allow_untrained_full},
    };
    return doc.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    RunConfig cfg;
    if (doc.contains("variant")) cfg.variant = parse_variant(doc["variant"].get<std::string>());
    if (doc.contains("scale")) cfg.scale = parse_scale(doc["scale"].get<std::string>());
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.lr = doc.value("lr", cfg.lr);
    cfg.dropout = doc.value("dropout", cfg.dropout);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.data_dir = doc.value("data_dir", cfg.data_dir);
    cfg.synth_per_class = doc.value("synth_per_class", cfg.synth_per_class);
    cfg.out_dir = doc.value("out_dir", cfg.out_dir);
    cfg.augment = doc.value("augment", cfg.augment);
    cfg.allow_untrained_full = doc.value("allow_untrained_full", cfg.allow_untrained_full);
    return cfg;
}

SplitData load_run_data(const RunConfig& cfg) {
    SplitData data;
    if (cfg.data_dir.empty()) {
        const int64_t n = cfg.synth_per_class;
        data.train = synthesize(n, Rng::mix(cfg.seed, 1));
        data.val = synthesize(std::max<int64_t>(n / 4, 1), Rng::mix(cfg.seed, 2));
        data.test = synthesize(std::max<int64_t>(n / 2, 1), Rng::mix(cfg.seed, 3));
        return data;
    }

    const Shape input = cfg.scale == ModelScale::Toy ? Shape{32, 32, 1} : Shape{224, 224, 3};
    const DatasetManifest manifest = scan_dataset(cfg.data_dir);
    SplitSpec spec;
    spec.seed = cfg.seed;
    const SplitIndices indices = split(manifest, spec);

    auto load_subset = [&](const std::vector<int64_t>& subset) {
        LabelledData out;
        out.classes = static_cast<int>(manifest.classes.size());
        for (int64_t idx : subset) {
            out.images.push_back(load_and_preprocess(manifest.samples[static_cast<size_t>(idx)].first, input));
            out.labels.push_back(manifest.samples[static_cast<size_t>(idx)].second);
        }
        return out;
    };
    data.train = load_subset(indices.train);
    data.val = load_subset(indices.val);
    data.test = load_subset(indices.test);
    return data;
}

Tensor predict_probs(const ModelGraph& graph, const std::vector<Tensor>& images, int64_t batch_size) {
    if (images.empty()) throw std::invalid_argument("predict_probs: no images");
    const int64_t n = static_cast<int64_t>(images.size());
    Tensor all;
    int64_t done = 0;
    while (done < n) {
        const int64_t count = std::min(batch_size, n - done);
        std::vector<int64_t> idx(static_cast<size_t>(count));
        std::iota(idx.begin(), idx.end(), done);
        const Tensor batch = stack(images, idx);
        const ActivationTape tape = forward(graph, batch);
        const Tensor& probs = tape.outputs.at(graph.output_node());
        if (done == 0) {
            all = Tensor::zeros(Shape{n, probs.shape.dim(1)});
        }
        std::copy(probs.data.begin(), probs.data.end(), all.data.begin() + done * probs.shape.dim(1));
        done += count;
    }
    return all;
}

TrainResult train_loop(const RunConfig& cfg) {
    cfg.validate();
    const SplitData data = load_run_data(cfg);
    FusionConfig fusion = default_fusion_config();
    fusion.classes = data.train.classes;
    fusion.dropout = cfg.dropout;
    ModelGraph graph = cfg.scale == ModelScale::Toy ? build_toy(cfg.variant, data.train.classes)
                                                    : build_subsidiary(cfg.variant, fusion);
    return train_loop(cfg, graph, data);
}

TrainResult train_loop(const RunConfig& cfg, ModelGraph& graph, const SplitData& data) {
    cfg.validate();
    if (data.train.images.empty() || data.val.images.empty() || data.test.images.empty()) {
        throw std::invalid_argument("train_loop: empty dataset partition");
    }

    initialize_parameters(graph, Rng::mix(cfg.seed, 17));
    AdamState adam;
    adam.lr = cfg.lr;

    TrainResult result;
    result.classes = data.train.classes;
    Rng shuffle_rng(Rng::mix(cfg.seed, 29));

    const int64_t n_train = static_cast<int64_t>(data.train.images.size());
    std::vector<int64_t> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        int64_t correct = 0;
        int64_t step = 0;

        for (int64_t start = 0; start < n_train; start += cfg.batch_size, ++step) {
            const int64_t count = std::min(cfg.batch_size, n_train - start);
            std::vector<int64_t> batch_idx(order.begin() + start, order.begin() + start + count);
            std::vector<int> labels(static_cast<size_t>(count));
            for (int64_t i = 0; i < count; ++i) labels[static_cast<size_t>(i)] = data.train.labels[static_cast<size_t>(batch_idx[static_cast<size_t>(i)])];

            Tensor batch;
            if (cfg.augment) {
                std::vector<Tensor> warped(static_cast<size_t>(count));
                for (int64_t i = 0; i < count; ++i) {
                    const uint64_t aug_seed = Rng::mix(Rng::mix(cfg.seed, 1000 + static_cast<uint64_t>(epoch)),
                                                       static_cast<uint64_t>(batch_idx[static_cast<size_t>(i)]));
                    warped[static_cast<size_t>(i)] = augment(data.train.images[static_cast<size_t>(batch_idx[static_cast<size_t>(i)])], aug_seed);
                }
                batch = stack(warped);
            } else {
                batch = stack(data.train.images, batch_idx);
            }

            ForwardOptions options;
            options.training = true;
            options.dropout_seed = Rng::mix(cfg.seed, static_cast<uint64_t>(epoch * 100000 + step));
            const ActivationTape tape = forward(graph, batch, options);
            const Tensor& probs = tape.outputs.at(graph.output_node());
            const double loss = cce_loss(probs, labels);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train_loop: non-finite loss " + std::to_string(loss) + " at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));
            }
            loss_sum += loss * static_cast<double>(count);
            const std::vector<int> preds = argmax_rows(probs);
            for (int64_t i = 0; i < count; ++i) {
                if (preds[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)]) ++correct;
            }

            const GradMap grads = backward(graph, tape, labels);
            adam_step(graph.params, grads, adam);
            update_batchnorm_moving_stats(graph, tape);
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(n_train);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n_train);

        const Tensor val_probs = predict_probs(graph, data.val.images, cfg.batch_size);
        stats.val_loss = cce_loss(val_probs, data.val.labels);
        stats.val_accuracy = accuracy(val_probs, data.val.labels);
        result.history.push_back(stats);

        if (result.best_epoch < 0 || stats.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = stats.val_accuracy;
            result.best_epoch = epoch;
            result.best_params = graph.params;
        }
    }

    graph.params = result.best_params;
    const Tensor test_probs = predict_probs(graph, data.test.images, cfg.batch_size);
    result.test_report = evaluate(test_probs, data.test.labels);
    result.test_accuracy = result.test_report.metrics.accuracy;
    return result;
}

}  // namespace fusionnet
