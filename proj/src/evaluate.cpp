#include "fusionnet/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fusionnet {

long long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

long long ConfusionMatrix::trace() const {
    long long t = 0;
    for (int k = 0; k < classes; ++k) t += at(k, k);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual, int classes) {
    if (predicted.size() != actual.size()) {
        throw std::invalid_argument("confusion: prediction/label counts differ");
    }
    ConfusionMatrix matrix;
    matrix.classes = classes;
    matrix.counts.assign(static_cast<size_t>(classes) * classes, 0);
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] < 0 || predicted[i] >= classes || actual[i] < 0 || actual[i] >= classes) {
            throw std::invalid_argument("confusion: label out of range at sample " + std::to_string(i));
        }
        ++matrix.at(actual[i], predicted[i]);
    }
    return matrix;
}

Prf1Result prf1(const ConfusionMatrix& matrix) {
    const int k = matrix.classes;
    Prf1Result result;
    result.per_class.resize(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        long long col = 0, row = 0;
        for (int i = 0; i < k; ++i) {
            col += matrix.at(i, c);
            row += matrix.at(c, i);
        }
        ClassMetrics& m = result.per_class[static_cast<size_t>(c)];
        const long long tp = matrix.at(c, c);
        if (col == 0) {
            m.zero_division = true;
        } else {
            m.precision = static_cast<double>(tp) / static_cast<double>(col);
        }
        if (row == 0) {
            m.zero_division = true;
        } else {
            m.recall = static_cast<double>(tp) / static_cast<double>(row);
        }
        if (m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        } else {
            m.zero_division = m.zero_division || tp == 0;
        }
        result.macro_precision += m.precision;
        result.macro_recall += m.recall;
        result.macro_f1 += m.f1;
    }
    result.macro_precision /= static_cast<double>(k);
    result.macro_recall /= static_cast<double>(k);
    result.macro_f1 /= static_cast<double>(k);
    const long long total = matrix.total();
    result.accuracy = total > 0 ? static_cast<double>(matrix.trace()) / static_cast<double>(total) : 0.0;
    return result;
}

RocResult roc_auc(const Tensor& scores, const std::vector<int>& labels) {
    if (scores.shape.rank() != 2) throw std::invalid_argument("roc_auc: scores must be rank-2 (N,K)");
    const int64_t n = scores.shape.dim(0), k = scores.shape.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) throw std::invalid_argument("roc_auc: label count mismatch");

    RocResult result;
    int counted = 0;
    for (int64_t cls = 0; cls < k; ++cls) {
        RocCurve curve;
        curve.class_id = static_cast<int>(cls);
        int64_t positives = 0;
        std::vector<std::pair<double, bool>> scored(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            const bool positive = labels[static_cast<size_t>(i)] == cls;
            positives += positive;
            scored[static_cast<size_t>(i)] = {scores.data[i * k + cls], positive};
        }
        const int64_t negatives = n - positives;
        if (positives == 0 || negatives == 0) {
            curve.skipped = true;
            result.curves.push_back(std::move(curve));
            continue;
        }
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        curve.points.emplace_back(0.0, 0.0);
        int64_t tp = 0, fp = 0;
        size_t i = 0;
        while (i < scored.size()) {
            const double threshold = scored[i].first;
            // all samples sharing a score move in one step
            while (i < scored.size() && scored[i].first == threshold) {
                if (scored[i].second) ++tp;
                else ++fp;
                ++i;
            }
            curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(negatives),
                                      static_cast<double>(tp) / static_cast<double>(positives));
        }
        for (size_t p = 1; p < curve.points.size(); ++p) {
            const auto& [x0, y0] = curve.points[p - 1];
            const auto& [x1, y1] = curve.points[p];
            curve.auc += (x1 - x0) * (y0 + y1) * 0.5;
        }
        result.macro_auc += curve.auc;
        ++counted;
        result.curves.push_back(std::move(curve));
    }
    if (counted > 0) result.macro_auc /= static_cast<double>(counted);
    return result;
}

EvalReport evaluate(const Tensor& probs, const std::vector<int>& labels) {
    EvalReport report;
    report.matrix = confusion(argmax_rows(probs), labels, static_cast<int>(probs.shape.dim(1)));
    report.metrics = prf1(report.matrix);
    report.roc = roc_auc(probs, labels);
    return report;
}

// ---------------------------------------------------------------------------
// report serialization
// ---------------------------------------------------------------------------

std::string report_to_json(const EvalReport& report, const std::vector<EpochStats>& history) {
    nlohmann::json doc;
    doc["schema"] = 1;
    doc["accuracy"] = report.metrics.accuracy;
    const int k = report.matrix.classes;
    nlohmann::json matrix = nlohmann::json::array();
    for (int r = 0; r < k; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < k; ++c) row.push_back(report.matrix.at(r, c));
        matrix.push_back(std::move(row));
    }
    doc["confusion"] = std::move(matrix);
    nlohmann::json per_class = nlohmann::json::array();
    for (const ClassMetrics& m : report.metrics.per_class) {
        per_class.push_back({{"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"zero_division", m.zero_division}});
    }
    doc["per_class"] = std::move(per_class);
    doc["macro"] = {{"precision", report.metrics.macro_precision},
                    {"recall", report.metrics.macro_recall},
                    {"f1", report.metrics.macro_f1}};
    nlohmann::json curves = nlohmann::json::array();
    for (const RocCurve& curve : report.roc.curves) {
        nlohmann::json entry = {{"class", curve.class_id}, {"auc", curve.auc}, {"skipped", curve.skipped}};
        nlohmann::json points = nlohmann::json::array();
        for (const auto& [fpr, tpr] : curve.points) points.push_back({fpr, tpr});
        entry["points"] = std::move(points);
        curves.push_back(std::move(entry));
    }
    doc["roc"] = {{"curves", std::move(curves)}, {"macro_auc", report.roc.macro_auc}};
    if (!history.empty()) {
        nlohmann::json epochs = nlohmann::json::array();
        for (const EpochStats& e : history) {
            epochs.push_back({{"train_loss", e.train_loss},
                              {"train_accuracy", e.train_accuracy},
                              {"val_loss", e.val_loss},
                              {"val_accuracy", e.val_accuracy}});
        }
        doc["history"] = std::move(epochs);
    }
    return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    EvalReport report;
    const auto& matrix = doc.at("confusion");
    report.matrix.classes = static_cast<int>(matrix.size());
    for (const auto& row : matrix) {
        for (const auto& value : row) report.matrix.counts.push_back(value.get<long long>());
    }
    report.metrics.accuracy = doc.at("accuracy").get<double>();
    for (const auto& entry : doc.at("per_class")) {
        ClassMetrics m;
        m.precision = entry.at("precision").get<double>();
        m.recall = entry.at("recall").get<double>();
        m.f1 = entry.at("f1").get<double>();
        m.zero_division = entry.at("zero_division").get<bool>();
        report.metrics.per_class.push_back(m);
    }
    report.metrics.macro_precision = doc.at("macro").at("precision").get<double>();
    report.metrics.macro_recall = doc.at("macro").at("recall").get<double>();
    report.metrics.macro_f1 = doc.at("macro").at("f1").get<double>();
    for (const auto& entry : doc.at("roc").at("curves")) {
        RocCurve curve;
        curve.class_id = entry.at("class").get<int>();
        curve.auc = entry.at("auc").get<double>();
        curve.skipped = entry.at("skipped").get<bool>();
        for (const auto& point : entry.at("points")) {
            curve.points.emplace_back(point[0].get<double>(), point[1].get<double>());
        }
        report.roc.curves.push_back(std::move(curve));
    }
    report.roc.macro_auc = doc.at("roc").at("macro_auc").get<double>();
    return report;
}

// ---------------------------------------------------------------------------
// SVG plotting (static SVG 1.1 documents)
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCurveColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string svg_header(int width, int height) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    return os.str();
}

/// Maps (x,y) in [0,1]^2 to plot coordinates inside the margins.
struct PlotFrame {
    double left, top, width, height;
    double px(double x) const { return left + x * width; }
    double py(double y) const { return top + (1.0 - y) * height; }
};

void draw_axes(std::ostringstream& os, const PlotFrame& frame, const std::string& x_label,
               const std::string& y_label) {
    os << "  <line x1=\"" << frame.px(0) << "\" y1=\"" << frame.py(0) << "\" x2=\"" << frame.px(1) << "\" y2=\""
       << frame.py(0) << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << frame.px(0) << "\" y1=\"" << frame.py(0) << "\" x2=\"" << frame.px(0) << "\" y2=\""
       << frame.py(1) << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << frame.px(0.5) << "\" y=\"" << frame.py(0) + 32 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << x_label << "</text>\n";
    os << "  <text x=\"" << frame.px(0) - 30 << "\" y=\"" << frame.py(0.5)
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 " << frame.px(0) - 30 << " "
       << frame.py(0.5) << ")\">" << y_label << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        os << "  <text x=\"" << frame.px(v) << "\" y=\"" << frame.py(0) + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << v << "</text>\n";
        os << "  <text x=\"" << frame.px(0) - 6 << "\" y=\"" << frame.py(v) + 4
           << "\" text-anchor=\"end\" font-size=\"10\">" << v << "</text>\n";
    }
}

std::string roc_svg(const RocResult& roc) {
    std::ostringstream os;
    os << svg_header(520, 520);
    const PlotFrame frame{60, 20, 420, 440};
    draw_axes(os, frame, "false positive rate", "true positive rate");
    os << "  <line x1=\"" << frame.px(0) << "\" y1=\"" << frame.py(0) << "\" x2=\"" << frame.px(1) << "\" y2=\""
       << frame.py(1) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n";
    int color = 0;
    for (const RocCurve& curve : roc.curves) {
        if (curve.skipped) continue;
        os << "  <polyline fill=\"none\" stroke=\"" << kCurveColors[color % 6] << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [fpr, tpr] : curve.points) os << frame.px(fpr) << "," << frame.py(tpr) << " ";
        os << "\"/>\n";
        os << "  <text x=\"" << frame.px(0.62) << "\" y=\"" << frame.py(0.05) - 16 * color
           << "\" font-size=\"11\" fill=\"" << kCurveColors[color % 6] << "\">class " << curve.class_id
           << " auc=" << curve.auc << "</text>\n";
        ++color;
    }
    os << "</svg>\n";
    return os.str();
}

std::string curves_svg(const std::vector<EpochStats>& history) {
    std::ostringstream os;
    os << svg_header(1040, 520);
    const PlotFrame acc_frame{60, 20, 420, 440};
    const PlotFrame loss_frame{580, 20, 420, 440};
    draw_axes(os, acc_frame, "epoch", "accuracy");

    double max_loss = 0.0;
    for (const EpochStats& e : history) max_loss = std::max({max_loss, e.train_loss, e.val_loss});
    if (max_loss <= 0.0) max_loss = 1.0;

    const double denom = history.size() > 1 ? static_cast<double>(history.size() - 1) : 1.0;
    auto polyline = [&](const PlotFrame& frame, auto getter, double scale, const char* stroke) {
        os << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < history.size(); ++i) {
            os << frame.px(static_cast<double>(i) / denom) << "," << frame.py(getter(history[i]) / scale) << " ";
        }
        os << "\"/>\n";
    };
    polyline(acc_frame, [](const EpochStats& e) { return e.train_accuracy; }, 1.0, kCurveColors[0]);
    polyline(acc_frame, [](const EpochStats& e) { return e.val_accuracy; }, 1.0, kCurveColors[1]);
    os << "  <text x=\"" << acc_frame.px(0.05) << "\" y=\"" << acc_frame.py(0.97) << "\" font-size=\"11\" fill=\""
       << kCurveColors[0] << "\">train</text>\n";
    os << "  <text x=\"" << acc_frame.px(0.05) << "\" y=\"" << acc_frame.py(0.92) << "\" font-size=\"11\" fill=\""
       << kCurveColors[1] << "\">val</text>\n";

    draw_axes(os, loss_frame, "epoch", "loss / max");
    polyline(loss_frame, [](const EpochStats& e) { return e.train_loss; }, max_loss, kCurveColors[0]);
    polyline(loss_frame, [](const EpochStats& e) { return e.val_loss; }, max_loss, kCurveColors[1]);
    os << "</svg>\n";
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("emit_report: cannot write " + path);
    out << text;
}

}  // namespace

void emit_report(const EvalReport& report, const std::string& out_dir, const std::vector<EpochStats>& history) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_text((dir / "report.json").string(), report_to_json(report, history));

    std::ostringstream csv;
    for (int r = 0; r < report.matrix.classes; ++r) {
        for (int c = 0; c < report.matrix.classes; ++c) {
            if (c) csv << ",";
            csv << report.matrix.at(r, c);
        }
        csv << "\n";
    }
    write_text((dir / "confusion.csv").string(), csv.str());
    write_text((dir / "roc.svg").string(), roc_svg(report.roc));
    if (!history.empty()) {
        write_text((dir / "curves.svg").string(), curves_svg(history));
    }
}

// ---------------------------------------------------------------------------
// Grad-CAM
// ---------------------------------------------------------------------------

Tensor grad_cam(const ModelGraph& graph, const Tensor& input, int class_id, const std::string& conv_node) {
    if (input.shape.rank() != 4 || input.shape.dim(0) != 1) {
        throw std::invalid_argument("grad_cam: expects a single-sample batch (1,H,W,C)");
    }
    const std::string cam_name = conv_node.empty() ? graph.cam_node.value_or("") : conv_node;
    const int cam_id = graph.find(cam_name);
    if (cam_id < 0) {
        throw std::invalid_argument("grad_cam: no designated conv node" +
                                    (cam_name.empty() ? std::string() : " '" + cam_name + "'"));
    }

    const ActivationTape tape = forward(graph, input);
    const int out_id = graph.output_node();
    const Node& out_node = graph.node(out_id);
    // class score is the pre-softmax logit
    const int logits_id = std::holds_alternative<SoftmaxSpec>(out_node.spec) ? out_node.inputs[0] : out_id;
    const Tensor& logits = tape.outputs.at(logits_id);
    if (class_id < 0 || class_id >= logits.shape.dim(1)) {
        throw std::invalid_argument("grad_cam: class id out of range");
    }

    Tensor seed = Tensor::zeros(logits.shape);
    seed.data[static_cast<size_t>(class_id)] = 1.0;
    const BackwardResult back = backward_from(graph, tape, logits_id, seed);

    const Tensor& act = tape.outputs.at(cam_id);  // (1,H,W,C)
    const int64_t h = act.shape.dim(1), w = act.shape.dim(2), c = act.shape.dim(3);
    Tensor map = Tensor::zeros(Shape{h, w});

    auto grad_it = back.act_grads.find(cam_id);
    if (grad_it != back.act_grads.end()) {
        const Tensor& grad = grad_it->second;
        std::vector<double> weights(static_cast<size_t>(c), 0.0);
        for (int64_t s = 0; s < h * w; ++s) {
            for (int64_t ch = 0; ch < c; ++ch) weights[static_cast<size_t>(ch)] += grad.data[s * c + ch];
        }
        for (double& v : weights) v /= static_cast<double>(h * w);
        for (int64_t s = 0; s < h * w; ++s) {
            double value = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) value += weights[static_cast<size_t>(ch)] * act.data[s * c + ch];
            map.data[static_cast<size_t>(s)] = std::max(value, 0.0);
        }
    }

    double lo = map.data[0], hi = map.data[0];
    for (double v : map.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo) {
        for (double& v : map.data) v = (v - lo) / (hi - lo);
    }
    // an all-constant (e.g. all-zero) map stays as-is
    return map;
}

}  // namespace fusionnet
