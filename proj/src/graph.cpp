#include "fusionnet/graph.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fusionnet {

namespace {

int64_t conv_out_dim(int64_t in, int64_t k, int64_t s, Padding padding) {
    if (padding == Padding::Same) return (in + s - 1) / s;  // ceil(in/s)
    const int64_t out = (in - k) / s + 1;                    // floor((in-k)/s)+1
    return out;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

std::string layer_kind(const LayerSpec& spec) {
    struct Visitor {
        std::string operator()(const InputSpec&) const { return "Input"; }
        std::string operator()(const Conv2DSpec&) const { return "Conv2D"; }
        std::string operator()(const MaxPool2DSpec&) const { return "MaxPool2D"; }
        std::string operator()(const AvgPool2DSpec&) const { return "AvgPool2D"; }
        std::string operator()(const BatchNormSpec&) const { return "BatchNorm"; }
        std::string operator()(const DenseSpec&) const { return "Dense"; }
        std::string operator()(const GlobalAvgPool2DSpec&) const { return "GlobalAvgPool2D"; }
        std::string operator()(const ConcatSpec&) const { return "Concat"; }
        std::string operator()(const AddSpec&) const { return "Add"; }
        std::string operator()(const ReLUSpec&) const { return "ReLU"; }
        std::string operator()(const DropoutSpec&) const { return "Dropout"; }
        std::string operator()(const SoftmaxSpec&) const { return "Softmax"; }
    };
    return std::visit(Visitor{}, spec);
}

Shape infer_output_shape(const LayerSpec& spec, const std::vector<Shape>& inputs) {
    const std::string kind = layer_kind(spec);

    if (const auto* in = std::get_if<InputSpec>(&spec)) {
        require(inputs.empty(), "Input takes no inputs");
        return in->shape;
    }

    require(!inputs.empty(), kind + ": needs at least one input");
    const Shape& first = inputs[0];

    if (const auto* conv = std::get_if<Conv2DSpec>(&spec)) {
        require(inputs.size() == 1 && first.rank() == 3, "Conv2D: expects one rank-3 input");
        require(conv->filters >= 1 && conv->kh >= 1 && conv->kw >= 1 && conv->sh >= 1 && conv->sw >= 1,
                "Conv2D: filters/kernel/stride must be >= 1");
        const int64_t oh = conv_out_dim(first.dim(0), conv->kh, conv->sh, conv->padding);
        const int64_t ow = conv_out_dim(first.dim(1), conv->kw, conv->sw, conv->padding);
        require(oh >= 1 && ow >= 1, "Conv2D: non-positive output dims for input " + first.str());
        return Shape{oh, ow, conv->filters};
    }
    if (const auto* pool = std::get_if<MaxPool2DSpec>(&spec)) {
        require(inputs.size() == 1 && first.rank() == 3, "MaxPool2D: expects one rank-3 input");
        require(pool->fh >= 1 && pool->fw >= 1 && pool->sh >= 1 && pool->sw >= 1,
                "MaxPool2D: pool/stride must be >= 1");
        const int64_t oh = conv_out_dim(first.dim(0), pool->fh, pool->sh, pool->padding);
        const int64_t ow = conv_out_dim(first.dim(1), pool->fw, pool->sw, pool->padding);
        require(oh >= 1 && ow >= 1, "MaxPool2D: non-positive output dims for input " + first.str());
        return Shape{oh, ow, first.dim(2)};
    }
    if (const auto* pool = std::get_if<AvgPool2DSpec>(&spec)) {
        require(inputs.size() == 1 && first.rank() == 3, "AvgPool2D: expects one rank-3 input");
        const int64_t oh = conv_out_dim(first.dim(0), pool->fh, pool->sh, pool->padding);
        const int64_t ow = conv_out_dim(first.dim(1), pool->fw, pool->sw, pool->padding);
        require(oh >= 1 && ow >= 1, "AvgPool2D: non-positive output dims for input " + first.str());
        return Shape{oh, ow, first.dim(2)};
    }
    if (std::holds_alternative<BatchNormSpec>(spec)) {
        require(inputs.size() == 1 && first.rank() == 3, "BatchNorm: expects one rank-3 input");
        return first;
    }
    if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
        require(inputs.size() == 1 && first.rank() == 1, "Dense: expects one rank-1 input");
        require(dense->units >= 1, "Dense: units must be >= 1");
        return Shape{dense->units};
    }
    if (std::holds_alternative<GlobalAvgPool2DSpec>(spec)) {
        require(inputs.size() == 1 && first.rank() == 3, "GlobalAvgPool2D: expects one rank-3 input");
        return Shape{first.dim(2)};
    }
    if (std::holds_alternative<ConcatSpec>(spec)) {
        require(inputs.size() >= 2, "Concat: needs >= 2 inputs");
        int64_t channels = 0;
        for (const Shape& s : inputs) {
            require(s.rank() == 3, "Concat: inputs must be rank-3");
            require(s.dim(0) == first.dim(0) && s.dim(1) == first.dim(1),
                    "Concat: spatial dims differ, " + first.str() + " vs " + s.str());
            channels += s.dim(2);
        }
        return Shape{first.dim(0), first.dim(1), channels};
    }
    if (std::holds_alternative<AddSpec>(spec)) {
        require(inputs.size() >= 2, "Add: needs >= 2 inputs");
        for (const Shape& s : inputs) {
            require(s == first, "Add: shapes differ, " + first.str() + " vs " + s.str());
        }
        return first;
    }
    if (std::holds_alternative<ReLUSpec>(spec) || std::holds_alternative<SoftmaxSpec>(spec)) {
        require(inputs.size() == 1, kind + ": expects one input");
        return first;
    }
    if (const auto* drop = std::get_if<DropoutSpec>(&spec)) {
        require(inputs.size() == 1, "Dropout: expects one input");
        require(drop->rate >= 0.0 && drop->rate < 1.0, "Dropout: rate must be in [0,1)");
        return first;
    }
    throw std::logic_error("infer_output_shape: unhandled layer kind " + kind);
}

ParamCount count_params(const LayerSpec& spec, const Shape& input, bool frozen) {
    ParamCount count;
    if (const auto* conv = std::get_if<Conv2DSpec>(&spec)) {
        const int64_t cin = input.dim(input.rank() - 1);
        long long p = static_cast<long long>(conv->kh * conv->kw * cin * conv->filters);
        if (conv->bias) p += conv->filters;
        (frozen ? count.non_trainable : count.trainable) = p;
        return count;
    }
    if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
        const int64_t in = input.dim(0);
        long long p = static_cast<long long>(in * dense->units);
        if (dense->bias) p += dense->units;
        (frozen ? count.non_trainable : count.trainable) = p;
        return count;
    }
    if (const auto* bn = std::get_if<BatchNormSpec>(&spec)) {
        const long long c = input.dim(input.rank() - 1);
        const long long learned = bn->scale ? 2 * c : c;  // scale + shift, or shift only
        count.non_trainable = 2 * c;                      // moving mean/variance
        if (frozen) count.non_trainable += learned;
        else count.trainable = learned;
        return count;
    }
    return count;  // everything else is parameter-free
}

int ModelGraph::add(std::string name, LayerSpec spec, std::vector<int> inputs, bool frozen) {
    if (by_name_.count(name)) throw std::invalid_argument("ModelGraph: duplicate node name '" + name + "'");
    const int id = static_cast<int>(nodes_.size());
    for (int in : inputs) {
        if (in < 0 || in >= id) {
            throw std::invalid_argument("ModelGraph: node '" + name + "' references undefined input " +
                                        std::to_string(in));
        }
    }
    const bool is_input = std::holds_alternative<InputSpec>(spec);
    if (is_input && !inputs.empty()) throw std::invalid_argument("ModelGraph: Input node cannot have inputs");
    if (!is_input && inputs.empty()) {
        throw std::invalid_argument("ModelGraph: node '" + name + "' must have at least one input");
    }
    by_name_[name] = id;
    nodes_.push_back(Node{id, std::move(name), std::move(spec), std::move(inputs), frozen});
    return id;
}

int ModelGraph::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

int ModelGraph::output_node() const {
    if (!outputs.empty()) return outputs.front();
    if (nodes_.empty()) throw std::logic_error("ModelGraph: empty graph has no output");
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<Shape> ModelGraph::infer_shapes() const {
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const Node& node : nodes_) {
        std::vector<Shape> in_shapes;
        in_shapes.reserve(node.inputs.size());
        for (int id : node.inputs) in_shapes.push_back(shapes[static_cast<size_t>(id)]);
        try {
            shapes.push_back(infer_output_shape(node.spec, in_shapes));
        } catch (const std::exception& e) {
            throw std::invalid_argument("shape inference failed at node '" + node.name + "': " + e.what());
        }
    }
    return shapes;
}

Summary summarize(const ModelGraph& graph) {
    int input_count = 0;
    for (const Node& node : graph.nodes()) {
        if (std::holds_alternative<InputSpec>(node.spec)) ++input_count;
    }
    if (input_count != 1) {
        throw std::invalid_argument("summarize: graph must have exactly one Input, found " +
                                    std::to_string(input_count));
    }
    const std::vector<Shape> shapes = graph.infer_shapes();
    Summary summary;
    for (const Node& node : graph.nodes()) {
        const Shape in_shape =
            node.inputs.empty() ? shapes[static_cast<size_t>(node.id)] : shapes[static_cast<size_t>(node.inputs[0])];
        const ParamCount params = count_params(node.spec, in_shape, node.frozen);
        summary.rows.push_back(SummaryRow{node.name, layer_kind(node.spec), shapes[static_cast<size_t>(node.id)], params});
        summary.totals += params;
    }
    return summary;
}

std::string format_summary(const Summary& summary) {
    size_t name_width = 10;
    for (const SummaryRow& row : summary.rows) name_width = std::max(name_width, row.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width) + 2) << "layer" << std::setw(18) << "kind"
       << std::setw(18) << "output" << std::right << std::setw(12) << "params" << "\n";
    for (const SummaryRow& row : summary.rows) {
        os << std::left << std::setw(static_cast<int>(name_width) + 2) << row.name << std::setw(18) << row.kind
           << std::setw(18) << row.out_shape.str() << std::right << std::setw(12) << row.params.total() << "\n";
    }
    os << "total params: " << summary.totals.total() << "\n";
    os << "trainable params: " << summary.totals.trainable << "\n";
    os << "non-trainable params: " << summary.totals.non_trainable << "\n";
    return os.str();
}

std::vector<LedgerRow> parse_ledger_csv(const std::string& text) {
    std::vector<LedgerRow> rows;
    std::istringstream stream(text);
    std::string line;
    bool first = true;
    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        // out_shape may contain commas inside parentheses
        std::string field;
        int depth = 0;
        for (char ch : line) {
            if (ch == '(') ++depth;
            if (ch == ')') --depth;
            if (ch == ',' && depth == 0) {
                fields.push_back(field);
                field.clear();
            } else {
                field.push_back(ch);
            }
        }
        fields.push_back(field);
        if (first && fields.size() >= 1 && fields[0] == "name") {
            first = false;
            continue;  // header
        }
        first = false;
        if (fields.size() != 3) {
            throw std::invalid_argument("ledger: expected 3 columns, got " + std::to_string(fields.size()) +
                                        " in line '" + line + "'");
        }
        LedgerRow row;
        row.name = fields[0];
        if (!fields[1].empty() && fields[1] != "-") row.shape = Shape::parse(fields[1]);
        if (!fields[2].empty() && fields[2] != "-") row.params = std::stoll(fields[2]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<LedgerRow> load_ledger_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ledger: cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_ledger_csv(buffer.str());
}

VerifyReport verify_against_expected(const Summary& summary, const std::vector<LedgerRow>& expected) {
    VerifyReport report;
    if (expected.empty()) {
        report.warnings.push_back("expected ledger is empty; verification is vacuous");
        return report;
    }
    std::map<std::string, const SummaryRow*> by_name;
    for (const SummaryRow& row : summary.rows) by_name[row.name] = &row;

    for (const LedgerRow& exp : expected) {
        VerifyRowResult result;
        result.name = exp.name;
        if (exp.name == "total_params" || exp.name == "trainable_params" || exp.name == "non_trainable_params") {
            const long long actual = exp.name == "total_params"       ? summary.totals.total()
                                     : exp.name == "trainable_params" ? summary.totals.trainable
                                                                      : summary.totals.non_trainable;
            result.expected = exp.params ? std::to_string(*exp.params) : "-";
            result.actual = std::to_string(actual);
            result.matched = !exp.params || *exp.params == actual;
        } else {
            auto it = by_name.find(exp.name);
            if (it == by_name.end()) {
                result.matched = false;
                result.expected = "present";
                result.actual = "missing";
            } else {
                const SummaryRow& row = *it->second;
                bool ok = true;
                std::ostringstream want, got;
                if (exp.shape) {
                    want << exp.shape->str();
                    got << row.out_shape.str();
                    ok = ok && (*exp.shape == row.out_shape);
                }
                if (exp.params) {
                    if (exp.shape) {
                        want << " ";
                        got << " ";
                    }
                    want << *exp.params;
                    got << row.params.total();
                    ok = ok && (*exp.params == row.params.total());
                }
                result.matched = ok;
                result.expected = want.str();
                result.actual = got.str();
            }
        }
        if (!result.matched) {
            report.pass = false;
            ++report.mismatches;
        }
        report.rows.push_back(std::move(result));
    }
    return report;
}

std::string format_verify_report(const VerifyReport& report) {
    size_t name_width = 10;
    for (const VerifyRowResult& row : report.rows) name_width = std::max(name_width, row.name.size());
    std::ostringstream os;
    for (const std::string& warning : report.warnings) os << "warning: " << warning << "\n";
    for (const VerifyRowResult& row : report.rows) {
        os << (row.matched ? "[PASS] " : "[FAIL] ") << std::left << std::setw(static_cast<int>(name_width) + 2)
           << row.name;
        if (row.matched) {
            os << row.actual << "\n";
        } else {
            os << "expected " << row.expected << ", got " << row.actual << "\n";
        }
    }
    os << (report.pass ? "ledger check passed" : "ledger check FAILED") << " ("
       << (report.rows.size() - static_cast<size_t>(report.mismatches)) << "/" << report.rows.size()
       << " rows matched)\n";
    return os.str();
}

}  // namespace fusionnet
