#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusionnet/graph.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kLossClamp = 1e-12;

struct ForwardOptions {
    bool training = false;        // batch-norm uses batch statistics, dropout active
    bool dropout_enabled = true;  // set false to disable dropout while keeping batch stats
    uint64_t dropout_seed = 0;
};

/// Everything one forward pass records for the matching backward pass.
struct ActivationTape {
    std::unordered_map<int, Tensor> outputs;               // node id -> batched output
    std::unordered_map<int, std::vector<int64_t>> argmax;  // max-pool winners
    struct BnStats {
        std::vector<double> mean;
        std::vector<double> inv_std;  // 1/sqrt(var + eps)
        std::vector<double> var;
    };
    std::unordered_map<int, BnStats> bn_stats;          // training-mode batch statistics
    std::unordered_map<int, Tensor> dropout_mask;       // scaled keep masks
    ForwardOptions options;
    int64_t batch = 0;
};

/// Run the graph on a batched input (leading batch dim added to the graph's
/// Input shape). Shape mismatches report the offending node by name.
ActivationTape forward(const ModelGraph& graph, const Tensor& batch, const ForwardOptions& options = {});

/// Row-wise softmax with max subtraction, rank-2 (N,K).
Tensor softmax(const Tensor& logits);

/// Mean over the batch of -log p[label], probabilities clamped at 1e-12.
double cce_loss(const Tensor& probs, const std::vector<int>& labels);

using GradMap = std::map<std::string, Tensor>;

struct BackwardResult {
    GradMap param_grads;
    std::unordered_map<int, Tensor> act_grads;  // gradient w.r.t. each node output
};

/// Gradient of cce_loss(softmax-head output) w.r.t. every trainable
/// parameter. When the graph output is a Softmax node the gradient is seeded
/// at its input with the fused closed form (probs - onehot)/N.
GradMap backward(const ModelGraph& graph, const ActivationTape& tape, const std::vector<int>& labels);

/// Backward from an arbitrary seed gradient placed on `seed_node`'s output;
/// also returns activation gradients (used by class-activation maps).
BackwardResult backward_from(const ModelGraph& graph, const ActivationTape& tape, int seed_node,
                             const Tensor& seed_grad);

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// Standard bias-corrected Adam update applied in place.
void adam_step(std::map<std::string, Tensor>& params, const GradMap& grads, AdamState& state);

/// Max over trainable parameters of the relative error between analytic and
/// central-difference gradients (dropout off, batch-norm in batch mode).
/// Parameters are perturbed in place and restored before returning.
/// max_coords_per_param > 0 checks an evenly strided subset per tensor.
double grad_check(ModelGraph& graph, const Tensor& batch, const std::vector<int>& labels, double h,
                  int64_t max_coords_per_param = 0);

/// He-normal kernels (std = sqrt(2/fan_in)), zero biases, identity
/// batch-norm. Idempotent layout: parameter set depends only on the graph.
void initialize_parameters(ModelGraph& graph, uint64_t seed);

/// Names of the trainable parameter tensors, sorted.
std::vector<std::string> trainable_param_names(const ModelGraph& graph);

/// Blend freshly observed batch statistics into the moving estimates.
void update_batchnorm_moving_stats(ModelGraph& graph, const ActivationTape& tape,
                                   double momentum = kBatchNormMomentum);

/// First maximal index per row (ties resolve to the lowest class id).
std::vector<int> argmax_rows(const Tensor& scores);

double accuracy(const Tensor& probs, const std::vector<int>& labels);

}  // namespace fusionnet
