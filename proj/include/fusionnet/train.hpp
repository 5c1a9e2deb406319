#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusionnet/data.hpp"
#include "fusionnet/evaluate.hpp"
#include "fusionnet/models.hpp"

namespace fusionnet {

struct RunConfig {
    ModelVariant variant = ModelVariant::M4;
    ModelScale scale = ModelScale::Toy;
    int64_t epochs = 30;  // full-scale runs default to 100
    int64_t batch_size = 32;
    double lr = 0.001;
    double dropout = 0.3;
    uint64_t seed = 0;
    std::string data_dir;           // empty selects the synthetic source
    int64_t synth_per_class = 200;  // training samples per class; val = n/4, test = n/2
    std::string out_dir = "out";
    bool augment = false;  // per-epoch shear/zoom on directory datasets
    bool allow_untrained_full = false;

    void validate() const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

struct SplitData {
    LabelledData train;
    LabelledData val;
    LabelledData test;
};

/// Materializes the configured data source: synthetic partitions with
/// per-class sizes (n, n/4, n/2), or a stratified split of a directory
/// dataset resized to the model input shape.
SplitData load_run_data(const RunConfig& cfg);

struct TrainResult {
    std::vector<EpochStats> history;
    std::map<std::string, Tensor> best_params;
    int64_t best_epoch = -1;
    double best_val_accuracy = 0.0;
    EvalReport test_report;
    double test_accuracy = 0.0;
    int classes = 0;
};

/// Adam training with per-epoch validation; the best-validation parameter
/// set is kept and used for the final test evaluation. Deterministic given
/// (config, seed). Aborts on non-finite loss.
TrainResult train_loop(const RunConfig& cfg);
TrainResult train_loop(const RunConfig& cfg, ModelGraph& graph, const SplitData& data);

/// Inference-mode class probabilities, computed in batches.
Tensor predict_probs(const ModelGraph& graph, const std::vector<Tensor>& images, int64_t batch_size = 32);

}  // namespace fusionnet
