#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

enum class Padding { Valid, Same };

struct InputSpec {
    Shape shape;  // unbatched, e.g. (224,224,3)
};
struct Conv2DSpec {
    int64_t filters = 1;
    int64_t kh = 1, kw = 1;
    int64_t sh = 1, sw = 1;
    Padding padding = Padding::Valid;
    bool bias = true;
};
struct MaxPool2DSpec {
    int64_t fh = 2, fw = 2;
    int64_t sh = 2, sw = 2;
    Padding padding = Padding::Valid;
};
struct AvgPool2DSpec {
    int64_t fh = 2, fw = 2;
    int64_t sh = 2, sw = 2;
    Padding padding = Padding::Valid;
};
struct BatchNormSpec {
    bool scale = true;  // false drops the per-channel scale parameter
};
struct DenseSpec {
    int64_t units = 1;
    bool bias = true;
};
struct GlobalAvgPool2DSpec {};
struct ConcatSpec {};  // channel axis
struct AddSpec {};
struct ReLUSpec {};
struct DropoutSpec {
    double rate = 0.3;
};
struct SoftmaxSpec {};

using LayerSpec = std::variant<InputSpec, Conv2DSpec, MaxPool2DSpec, AvgPool2DSpec, BatchNormSpec,
                               DenseSpec, GlobalAvgPool2DSpec, ConcatSpec, AddSpec, ReLUSpec,
                               DropoutSpec, SoftmaxSpec>;

std::string layer_kind(const LayerSpec& spec);

struct ParamCount {
    long long trainable = 0;
    long long non_trainable = 0;
    long long total() const { return trainable + non_trainable; }
    ParamCount& operator+=(const ParamCount& other) {
        trainable += other.trainable;
        non_trainable += other.non_trainable;
        return *this;
    }
};

/// Output shape of a layer given unbatched input shapes. Conv/pool spatial
/// math: valid -> floor((in - k)/s) + 1, same -> ceil(in/s).
Shape infer_output_shape(const LayerSpec& spec, const std::vector<Shape>& inputs);

/// Parameters contributed by one node. Frozen nodes report everything as
/// non-trainable; batch-norm moving statistics are non-trainable regardless.
ParamCount count_params(const LayerSpec& spec, const Shape& input, bool frozen = false);

struct Node {
    int id = -1;
    std::string name;
    LayerSpec spec;
    std::vector<int> inputs;
    bool frozen = false;
};

/// DAG of layers. Nodes are appended in topological order (every input id
/// must already exist), which rules out cycles by construction.
class ModelGraph {
public:
    int add(std::string name, LayerSpec spec, std::vector<int> inputs = {}, bool frozen = false);

    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
    int find(const std::string& name) const;  // -1 when absent

    std::vector<int> outputs;  // defaults to the last added node when empty
    std::map<std::string, Tensor> params;

    /// Node whose activations feed class-activation maps, when designated.
    std::optional<std::string> cam_node;

    /// Inferred unbatched output shape per node, in node order.
    std::vector<Shape> infer_shapes() const;

    int output_node() const;

private:
    std::vector<Node> nodes_;
    std::map<std::string, int> by_name_;
};

struct SummaryRow {
    std::string name;
    std::string kind;
    Shape out_shape;
    ParamCount params;
};

struct Summary {
    std::vector<SummaryRow> rows;
    ParamCount totals;
};

/// Topologically ordered rows plus totals. Requires exactly one Input node.
Summary summarize(const ModelGraph& graph);

std::string format_summary(const Summary& summary);

// --- expected-ledger verification -----------------------------------------

struct LedgerRow {
    std::string name;
    std::optional<Shape> shape;        // absent = don't check
    std::optional<long long> params;   // absent = don't check
};

/// CSV columns: name,out_shape,params. '-' or empty skips that check.
/// Special names total_params / trainable_params / non_trainable_params
/// check the summary totals. '#' starts a comment line.
std::vector<LedgerRow> parse_ledger_csv(const std::string& text);
std::vector<LedgerRow> load_ledger_file(const std::string& path);

struct VerifyRowResult {
    std::string name;
    bool matched = false;
    std::string expected;
    std::string actual;
};

struct VerifyReport {
    std::vector<VerifyRowResult> rows;
    std::vector<std::string> warnings;
    bool pass = true;
    int mismatches = 0;
};

VerifyReport verify_against_expected(const Summary& summary, const std::vector<LedgerRow>& expected);

std::string format_verify_report(const VerifyReport& report);

}  // namespace fusionnet
