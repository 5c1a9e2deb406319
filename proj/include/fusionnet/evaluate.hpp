#pragma once

#include <string>
#include <vector>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/graph.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

/// K x K integer counts; rows = actual class, columns = predicted class.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long long> counts;  // row-major

    long long& at(int actual, int predicted) { return counts[static_cast<size_t>(actual * classes + predicted)]; }
    long long at(int actual, int predicted) const { return counts[static_cast<size_t>(actual * classes + predicted)]; }
    long long total() const;
    long long trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual, int classes);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false;  // some denominator was empty
};

struct Prf1Result {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

Prf1Result prf1(const ConfusionMatrix& matrix);

struct RocCurve {
    int class_id = 0;
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), staircase
    double auc = 0.0;
    bool skipped = false;  // no positives (or no negatives) for this class
};

struct RocResult {
    std::vector<RocCurve> curves;
    double macro_auc = 0.0;
};

/// One-vs-rest ROC per class from (N,K) scores; equal scores collapse into
/// one threshold step; AUC by the trapezoid rule, macro-averaged over
/// non-skipped classes.
RocResult roc_auc(const Tensor& scores, const std::vector<int>& labels);

struct EvalReport {
    ConfusionMatrix matrix;
    Prf1Result metrics;
    RocResult roc;
};

/// Full evaluation of class probabilities against labels.
EvalReport evaluate(const Tensor& probs, const std::vector<int>& labels);

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

std::string report_to_json(const EvalReport& report, const std::vector<EpochStats>& history = {});
EvalReport report_from_json(const std::string& text);

/// Writes report.json, confusion.csv, roc.svg and, when history is
/// non-empty, curves.svg into out_dir.
void emit_report(const EvalReport& report, const std::string& out_dir,
                 const std::vector<EpochStats>& history = {});

/// Gradient-weighted class activation map for one sample (batched input of
/// size 1). Channel weights are the spatial mean of d(class logit)/d(act);
/// the map is relu(sum_c w_c A_c) min-max normalized into [0,1], at the
/// designated conv node's spatial resolution.
Tensor grad_cam(const ModelGraph& graph, const Tensor& input, int class_id, const std::string& conv_node = "");

}  // namespace fusionnet
