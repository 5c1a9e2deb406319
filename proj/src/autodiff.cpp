#include "fusionnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusionnet/kernels.hpp"
#include "fusionnet/rng.hpp"

namespace fusionnet {

namespace {

struct ParamDef {
    std::string suffix;
    Shape shape;
    bool trainable;  // before the frozen flag is applied
};

std::vector<ParamDef> param_defs(const LayerSpec& spec, const Shape& in_shape) {
    if (const auto* conv = std::get_if<Conv2DSpec>(&spec)) {
        std::vector<ParamDef> defs;
        defs.push_back({"kernel", Shape{conv->kh, conv->kw, in_shape.dim(2), conv->filters}, true});
        if (conv->bias) defs.push_back({"bias", Shape{conv->filters}, true});
        return defs;
    }
    if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
        std::vector<ParamDef> defs;
        defs.push_back({"kernel", Shape{in_shape.dim(0), dense->units}, true});
        if (dense->bias) defs.push_back({"bias", Shape{dense->units}, true});
        return defs;
    }
    if (const auto* bn = std::get_if<BatchNormSpec>(&spec)) {
        const int64_t c = in_shape.dim(in_shape.rank() - 1);
        std::vector<ParamDef> defs;
        if (bn->scale) defs.push_back({"gamma", Shape{c}, true});
        defs.push_back({"beta", Shape{c}, true});
        defs.push_back({"moving_mean", Shape{c}, false});
        defs.push_back({"moving_variance", Shape{c}, false});
        return defs;
    }
    return {};
}

Shape batched(const Shape& s, int64_t n) {
    std::vector<int64_t> dims;
    dims.push_back(n);
    for (int64_t d : s.dims()) dims.push_back(d);
    return Shape(std::move(dims));
}

kernels::ConvDims conv_dims(const Conv2DSpec& conv, const Shape& in, const Shape& out, int64_t n) {
    kernels::ConvDims d;
    d.n = n;
    d.in_h = in.dim(0);
    d.in_w = in.dim(1);
    d.in_c = in.dim(2);
    d.kh = conv.kh;
    d.kw = conv.kw;
    d.out_c = conv.filters;
    d.sh = conv.sh;
    d.sw = conv.sw;
    d.out_h = out.dim(0);
    d.out_w = out.dim(1);
    if (conv.padding == Padding::Same) {
        const int64_t pad_h = std::max<int64_t>((d.out_h - 1) * d.sh + d.kh - d.in_h, 0);
        const int64_t pad_w = std::max<int64_t>((d.out_w - 1) * d.sw + d.kw - d.in_w, 0);
        d.pad_top = pad_h / 2;
        d.pad_left = pad_w / 2;
    }
    return d;
}

template <typename PoolSpec>
kernels::PoolDims pool_dims(const PoolSpec& pool, const Shape& in, const Shape& out, int64_t n) {
    kernels::PoolDims d;
    d.n = n;
    d.in_h = in.dim(0);
    d.in_w = in.dim(1);
    d.c = in.dim(2);
    d.fh = pool.fh;
    d.fw = pool.fw;
    d.sh = pool.sh;
    d.sw = pool.sw;
    d.out_h = out.dim(0);
    d.out_w = out.dim(1);
    if (pool.padding == Padding::Same) {
        const int64_t pad_h = std::max<int64_t>((d.out_h - 1) * d.sh + d.fh - d.in_h, 0);
        const int64_t pad_w = std::max<int64_t>((d.out_w - 1) * d.sw + d.fw - d.in_w, 0);
        d.pad_top = pad_h / 2;
        d.pad_left = pad_w / 2;
    }
    return d;
}

const Tensor& param(const ModelGraph& graph, const std::string& node, const std::string& suffix) {
    auto it = graph.params.find(node + "/" + suffix);
    if (it == graph.params.end()) {
        throw std::runtime_error("missing parameter '" + node + "/" + suffix +
                                 "'; call initialize_parameters or load a checkpoint");
    }
    return it->second;
}

}  // namespace

ActivationTape forward(const ModelGraph& graph, const Tensor& batch, const ForwardOptions& options) {
    ActivationTape tape;
    tape.options = options;

    const std::vector<Shape> shapes = graph.infer_shapes();
    for (const Node& node : graph.nodes()) {
        const Shape& out_shape = shapes[static_cast<size_t>(node.id)];

        if (std::holds_alternative<InputSpec>(node.spec)) {
            if (!(batch.shape == batched(out_shape, batch.shape.dim(0)))) {
                throw std::invalid_argument("forward: batch shape " + batch.shape.str() +
                                            " does not match input node '" + node.name + "' " + out_shape.str());
            }
            tape.batch = batch.shape.dim(0);
            tape.outputs.emplace(node.id, batch);
            continue;
        }

        const int64_t n = tape.batch;
        const Tensor& x = tape.outputs.at(node.inputs[0]);
        const Shape& in_shape = shapes[static_cast<size_t>(node.inputs[0])];

        if (const auto* conv = std::get_if<Conv2DSpec>(&node.spec)) {
            Tensor y = Tensor::zeros(batched(out_shape, n));
            const Tensor& kernel = param(graph, node.name, "kernel");
            const double* bias = conv->bias ? param(graph, node.name, "bias").data.data() : nullptr;
            kernels::conv2d_forward(x.data.data(), kernel.data.data(), bias, y.data.data(),
                                    conv_dims(*conv, in_shape, out_shape, n));
            tape.outputs.emplace(node.id, std::move(y));
        } else if (const auto* pool = std::get_if<MaxPool2DSpec>(&node.spec)) {
            Tensor y = Tensor::zeros(batched(out_shape, n));
            std::vector<int64_t> argmax(static_cast<size_t>(y.size()));
            kernels::maxpool_forward(x.data.data(), y.data.data(), argmax.data(),
                                     pool_dims(*pool, in_shape, out_shape, n));
            tape.argmax.emplace(node.id, std::move(argmax));
            tape.outputs.emplace(node.id, std::move(y));
        } else if (const auto* pool = std::get_if<AvgPool2DSpec>(&node.spec)) {
            Tensor y = Tensor::zeros(batched(out_shape, n));
            kernels::avgpool_forward(x.data.data(), y.data.data(), pool_dims(*pool, in_shape, out_shape, n));
            tape.outputs.emplace(node.id, std::move(y));
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&node.spec)) {
            const int64_t c = in_shape.dim(2);
            const int64_t rows = x.size() / c;
            Tensor y = Tensor::zeros(x.shape);
            const double* gamma = bn->scale ? param(graph, node.name, "gamma").data.data() : nullptr;
            const Tensor& beta = param(graph, node.name, "beta");
            if (options.training) {
                ActivationTape::BnStats stats;
                stats.mean.assign(static_cast<size_t>(c), 0.0);
                stats.var.assign(static_cast<size_t>(c), 0.0);
                stats.inv_std.assign(static_cast<size_t>(c), 0.0);
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t ch = 0; ch < c; ++ch) stats.mean[static_cast<size_t>(ch)] += x.data[i * c + ch];
                }
                for (int64_t ch = 0; ch < c; ++ch) stats.mean[static_cast<size_t>(ch)] /= static_cast<double>(rows);
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const double d = x.data[i * c + ch] - stats.mean[static_cast<size_t>(ch)];
                        stats.var[static_cast<size_t>(ch)] += d * d;
                    }
                }
                for (int64_t ch = 0; ch < c; ++ch) {
                    stats.var[static_cast<size_t>(ch)] /= static_cast<double>(rows);
                    stats.inv_std[static_cast<size_t>(ch)] =
                        1.0 / std::sqrt(stats.var[static_cast<size_t>(ch)] + kBatchNormEpsilon);
                }
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const double x_hat = (x.data[i * c + ch] - stats.mean[static_cast<size_t>(ch)]) *
                                             stats.inv_std[static_cast<size_t>(ch)];
                        y.data[i * c + ch] = (gamma ? gamma[ch] : 1.0) * x_hat + beta.data[static_cast<size_t>(ch)];
                    }
                }
                tape.bn_stats.emplace(node.id, std::move(stats));
            } else {
                const Tensor& mean = param(graph, node.name, "moving_mean");
                const Tensor& variance = param(graph, node.name, "moving_variance");
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const double inv = 1.0 / std::sqrt(variance.data[static_cast<size_t>(ch)] + kBatchNormEpsilon);
                        const double x_hat = (x.data[i * c + ch] - mean.data[static_cast<size_t>(ch)]) * inv;
                        y.data[i * c + ch] = (gamma ? gamma[ch] : 1.0) * x_hat + beta.data[static_cast<size_t>(ch)];
                    }
                }
            }
            tape.outputs.emplace(node.id, std::move(y));
        } else if (const auto* dense = std::get_if<DenseSpec>(&node.spec)) {
            const Tensor& kernel = param(graph, node.name, "kernel");
            Tensor y = Tensor::zeros(Shape{n, dense->units});
            kernels::matmul(x.data.data(), kernel.data.data(), y.data.data(), n, in_shape.dim(0), dense->units);
            if (dense->bias) {
                const Tensor& bias = param(graph, node.name, "bias");
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < dense->units; ++j) y.data[i * dense->units + j] += bias.data[static_cast<size_t>(j)];
                }
            }
            tape.outputs.emplace(node.id, std::move(y));
        } else if (std::holds_alternative<GlobalAvgPool2DSpec>(node.spec)) {
            const int64_t spatial = in_shape.dim(0) * in_shape.dim(1);
            const int64_t c = in_shape.dim(2);
            Tensor y = Tensor::zeros(Shape{n, c});
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t s = 0; s < spatial; ++s) {
                    const double* row = x.data.data() + (i * spatial + s) * c;
                    for (int64_t ch = 0; ch < c; ++ch) y.data[i * c + ch] += row[ch];
                }
                for (int64_t ch = 0; ch < c; ++ch) y.data[i * c + ch] /= static_cast<double>(spatial);
            }
            tape.outputs.emplace(node.id, std::move(y));
        } else if (std::holds_alternative<ConcatSpec>(node.spec)) {
            Tensor y = Tensor::zeros(batched(out_shape, n));
            const int64_t spatial = out_shape.dim(0) * out_shape.dim(1);
            const int64_t out_c = out_shape.dim(2);
            int64_t offset = 0;
            for (int in_id : node.inputs) {
                const Tensor& part = tape.outputs.at(in_id);
                const int64_t part_c = shapes[static_cast<size_t>(in_id)].dim(2);
                for (int64_t i = 0; i < n * spatial; ++i) {
                    const double* src = part.data.data() + i * part_c;
                    double* dst = y.data.data() + i * out_c + offset;
                    std::copy(src, src + part_c, dst);
                }
                offset += part_c;
            }
            tape.outputs.emplace(node.id, std::move(y));
        } else if (std::holds_alternative<AddSpec>(node.spec)) {
            Tensor y = tape.outputs.at(node.inputs[0]);
            for (size_t i = 1; i < node.inputs.size(); ++i) {
                kernels::add(tape.outputs.at(node.inputs[i]).data.data(), y.data.data(), y.size());
            }
            tape.outputs.emplace(node.id, std::move(y));
        } else if (std::holds_alternative<ReLUSpec>(node.spec)) {
            Tensor y = x;
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            tape.outputs.emplace(node.id, std::move(y));
        } else if (const auto* drop = std::get_if<DropoutSpec>(&node.spec)) {
            if (options.training && options.dropout_enabled && drop->rate > 0.0) {
                Rng rng(Rng::mix(options.dropout_seed, static_cast<uint64_t>(node.id)));
                const double keep_scale = 1.0 / (1.0 - drop->rate);
                Tensor mask = Tensor::zeros(x.shape);
                Tensor y = Tensor::zeros(x.shape);
                for (int64_t i = 0; i < x.size(); ++i) {
                    const double m = rng.uniform() >= drop->rate ? keep_scale : 0.0;
                    mask.data[static_cast<size_t>(i)] = m;
                    y.data[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)] * m;
                }
                tape.dropout_mask.emplace(node.id, std::move(mask));
                tape.outputs.emplace(node.id, std::move(y));
            } else {
                tape.outputs.emplace(node.id, x);
            }
        } else if (std::holds_alternative<SoftmaxSpec>(node.spec)) {
            tape.outputs.emplace(node.id, softmax(x));
        } else {
            throw std::logic_error("forward: unhandled node kind at '" + node.name + "'");
        }
    }
    return tape;
}

Tensor softmax(const Tensor& logits) {
    if (logits.shape.rank() != 2) throw std::invalid_argument("softmax: expects rank-2 (N,K)");
    const int64_t n = logits.shape.dim(0), k = logits.shape.dim(1);
    Tensor out = Tensor::zeros(logits.shape);
    for (int64_t i = 0; i < n; ++i) {
        const double* row = logits.data.data() + i * k;
        double* dst = out.data.data() + i * k;
        double max_v = row[0];
        for (int64_t j = 1; j < k; ++j) max_v = std::max(max_v, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            dst[j] = std::exp(row[j] - max_v);
            sum += dst[j];
        }
        for (int64_t j = 0; j < k; ++j) dst[j] /= sum;
    }
    return out;
}

double cce_loss(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.shape.rank() != 2) throw std::invalid_argument("cce_loss: expects rank-2 (N,K)");
    const int64_t n = probs.shape.dim(0), k = probs.shape.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("cce_loss: label count does not match batch");
    }
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= k) {
            throw std::invalid_argument("cce_loss: label " + std::to_string(label) + " out of range for K=" +
                                        std::to_string(k));
        }
        total += -std::log(std::max(probs.data[i * k + label], kLossClamp));
    }
    return total / static_cast<double>(n);
}

namespace {

struct BackwardContext {
    const ModelGraph& graph;
    const ActivationTape& tape;
    const std::vector<Shape>& shapes;
    std::unordered_map<int, Tensor> act_grads;
    GradMap param_grads;

    Tensor& grad_slot(int id, int64_t n) {
        auto it = act_grads.find(id);
        if (it == act_grads.end()) {
            std::vector<int64_t> dims{n};
            for (int64_t d : shapes[static_cast<size_t>(id)].dims()) dims.push_back(d);
            it = act_grads.emplace(id, Tensor::zeros(Shape(std::move(dims)))).first;
        }
        return it->second;
    }
};

void backward_node(BackwardContext& ctx, const Node& node) {
    auto grad_it = ctx.act_grads.find(node.id);
    if (grad_it == ctx.act_grads.end()) return;  // nothing flowed into this node
    const Tensor& dy = grad_it->second;
    const ActivationTape& tape = ctx.tape;
    const int64_t n = tape.batch;

    if (std::holds_alternative<InputSpec>(node.spec)) return;

    const int in_id = node.inputs[0];
    const Shape& in_shape = ctx.shapes[static_cast<size_t>(in_id)];
    const Shape& out_shape = ctx.shapes[static_cast<size_t>(node.id)];

    if (const auto* conv = std::get_if<Conv2DSpec>(&node.spec)) {
        const kernels::ConvDims d = conv_dims(*conv, in_shape, out_shape, n);
        const Tensor& kernel = param(ctx.graph, node.name, "kernel");
        Tensor& dx = ctx.grad_slot(in_id, n);
        Tensor dx_local = Tensor::zeros(dx.shape);
        kernels::conv2d_backward_input(dy.data.data(), kernel.data.data(), dx_local.data.data(), d);
        kernels::add(dx_local.data.data(), dx.data.data(), dx.size());
        if (!node.frozen) {
            const Tensor& x = tape.outputs.at(in_id);
            Tensor dk = Tensor::zeros(kernel.shape);
            kernels::conv2d_backward_filter(x.data.data(), dy.data.data(), dk.data.data(), d);
            ctx.param_grads.emplace(node.name + "/kernel", std::move(dk));
            if (conv->bias) {
                Tensor db = Tensor::zeros(Shape{conv->filters});
                kernels::conv2d_backward_bias(dy.data.data(), db.data.data(), d);
                ctx.param_grads.emplace(node.name + "/bias", std::move(db));
            }
        }
    } else if (const auto* pool = std::get_if<MaxPool2DSpec>(&node.spec)) {
        const kernels::PoolDims d = pool_dims(*pool, in_shape, out_shape, n);
        Tensor& dx = ctx.grad_slot(in_id, n);
        Tensor dx_local = Tensor::zeros(dx.shape);
        kernels::maxpool_backward(dy.data.data(), tape.argmax.at(node.id).data(), dx_local.data.data(), d);
        kernels::add(dx_local.data.data(), dx.data.data(), dx.size());
    } else if (const auto* pool = std::get_if<AvgPool2DSpec>(&node.spec)) {
        const kernels::PoolDims d = pool_dims(*pool, in_shape, out_shape, n);
        Tensor& dx = ctx.grad_slot(in_id, n);
        Tensor dx_local = Tensor::zeros(dx.shape);
        kernels::avgpool_backward(dy.data.data(), dx_local.data.data(), d);
        kernels::add(dx_local.data.data(), dx.data.data(), dx.size());
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&node.spec)) {
        const int64_t c = in_shape.dim(2);
        const int64_t rows = dy.size() / c;
        const Tensor& x = tape.outputs.at(in_id);
        Tensor& dx = ctx.grad_slot(in_id, n);
        const double* gamma = bn->scale ? param(ctx.graph, node.name, "gamma").data.data() : nullptr;

        std::vector<double> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
        const bool batch_mode = tape.bn_stats.count(node.id) > 0;
        if (batch_mode) {
            const auto& stats = tape.bn_stats.at(node.id);
            mean = stats.mean;
            inv_std = stats.inv_std;
        } else {
            const Tensor& mm = param(ctx.graph, node.name, "moving_mean");
            const Tensor& mv = param(ctx.graph, node.name, "moving_variance");
            for (int64_t ch = 0; ch < c; ++ch) {
                mean[static_cast<size_t>(ch)] = mm.data[static_cast<size_t>(ch)];
                inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(mv.data[static_cast<size_t>(ch)] + kBatchNormEpsilon);
            }
        }

        std::vector<double> sum_dy(static_cast<size_t>(c), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<size_t>(c), 0.0);
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const double x_hat = (x.data[i * c + ch] - mean[static_cast<size_t>(ch)]) * inv_std[static_cast<size_t>(ch)];
                sum_dy[static_cast<size_t>(ch)] += dy.data[i * c + ch];
                sum_dy_xhat[static_cast<size_t>(ch)] += dy.data[i * c + ch] * x_hat;
            }
        }

        if (batch_mode) {
            // d/dx of y = gamma * (x - mu)/sqrt(var + eps) + beta with mu, var
            // functions of the batch:
            //   dx = gamma*inv_std*(dy - mean(dy) - x_hat*mean(dy*x_hat))
            const double inv_rows = 1.0 / static_cast<double>(rows);
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    const size_t sch = static_cast<size_t>(ch);
                    const double x_hat = (x.data[i * c + ch] - mean[sch]) * inv_std[sch];
                    const double g = gamma ? gamma[ch] : 1.0;
                    dx.data[i * c + ch] += g * inv_std[sch] *
                                           (dy.data[i * c + ch] - sum_dy[sch] * inv_rows - x_hat * sum_dy_xhat[sch] * inv_rows);
                }
            }
        } else {
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    const size_t sch = static_cast<size_t>(ch);
                    const double g = gamma ? gamma[ch] : 1.0;
                    dx.data[i * c + ch] += dy.data[i * c + ch] * g * inv_std[sch];
                }
            }
        }

        if (!node.frozen) {
            if (bn->scale) {
                Tensor dgamma(Shape{c}, std::move(sum_dy_xhat));
                ctx.param_grads.emplace(node.name + "/gamma", std::move(dgamma));
            }
            Tensor dbeta(Shape{c}, std::move(sum_dy));
            ctx.param_grads.emplace(node.name + "/beta", std::move(dbeta));
        }
    } else if (const auto* dense = std::get_if<DenseSpec>(&node.spec)) {
        const Tensor& kernel = param(ctx.graph, node.name, "kernel");
        const int64_t in = in_shape.dim(0), units = dense->units;
        Tensor& dx = ctx.grad_slot(in_id, n);
        Tensor dx_local = Tensor::zeros(dx.shape);
        kernels::matmul_nt(dy.data.data(), kernel.data.data(), dx_local.data.data(), n, units, in);
        kernels::add(dx_local.data.data(), dx.data.data(), dx.size());
        if (!node.frozen) {
            const Tensor& x = tape.outputs.at(in_id);
            Tensor dk = Tensor::zeros(kernel.shape);
            kernels::matmul_tn(x.data.data(), dy.data.data(), dk.data.data(), in, n, units);
            ctx.param_grads.emplace(node.name + "/kernel", std::move(dk));
            if (dense->bias) {
                Tensor db = Tensor::zeros(Shape{units});
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < units; ++j) db.data[static_cast<size_t>(j)] += dy.data[i * units + j];
                }
                ctx.param_grads.emplace(node.name + "/bias", std::move(db));
            }
        }
    } else if (std::holds_alternative<GlobalAvgPool2DSpec>(node.spec)) {
        const int64_t spatial = in_shape.dim(0) * in_shape.dim(1);
        const int64_t c = in_shape.dim(2);
        Tensor& dx = ctx.grad_slot(in_id, n);
        const double inv = 1.0 / static_cast<double>(spatial);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t s = 0; s < spatial; ++s) {
                double* dst = dx.data.data() + (i * spatial + s) * c;
                const double* src = dy.data.data() + i * c;
                for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch] * inv;
            }
        }
    } else if (std::holds_alternative<ConcatSpec>(node.spec)) {
        const int64_t spatial = out_shape.dim(0) * out_shape.dim(1);
        const int64_t out_c = out_shape.dim(2);
        int64_t offset = 0;
        for (int part_id : node.inputs) {
            const int64_t part_c = ctx.shapes[static_cast<size_t>(part_id)].dim(2);
            Tensor& dx = ctx.grad_slot(part_id, n);
            for (int64_t i = 0; i < n * spatial; ++i) {
                const double* src = dy.data.data() + i * out_c + offset;
                double* dst = dx.data.data() + i * part_c;
                for (int64_t ch = 0; ch < part_c; ++ch) dst[ch] += src[ch];
            }
            offset += part_c;
        }
    } else if (std::holds_alternative<AddSpec>(node.spec)) {
        for (int part_id : node.inputs) {
            Tensor& dx = ctx.grad_slot(part_id, n);
            kernels::add(dy.data.data(), dx.data.data(), dx.size());
        }
    } else if (std::holds_alternative<ReLUSpec>(node.spec)) {
        const Tensor& y = tape.outputs.at(node.id);
        Tensor& dx = ctx.grad_slot(in_id, n);
        for (int64_t i = 0; i < dy.size(); ++i) {
            if (y.data[static_cast<size_t>(i)] > 0.0) dx.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(i)];
        }
    } else if (std::holds_alternative<DropoutSpec>(node.spec)) {
        Tensor& dx = ctx.grad_slot(in_id, n);
        auto mask_it = tape.dropout_mask.find(node.id);
        if (mask_it == tape.dropout_mask.end()) {
            kernels::add(dy.data.data(), dx.data.data(), dx.size());
        } else {
            const Tensor& mask = mask_it->second;
            for (int64_t i = 0; i < dy.size(); ++i) {
                dx.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(i)] * mask.data[static_cast<size_t>(i)];
            }
        }
    } else if (std::holds_alternative<SoftmaxSpec>(node.spec)) {
        // dx_j = p_j * (dy_j - sum_i p_i dy_i) per row
        const Tensor& p = tape.outputs.at(node.id);
        const int64_t k = out_shape.dim(0);
        Tensor& dx = ctx.grad_slot(in_id, n);
        for (int64_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < k; ++j) dot += p.data[i * k + j] * dy.data[i * k + j];
            for (int64_t j = 0; j < k; ++j) {
                dx.data[i * k + j] += p.data[i * k + j] * (dy.data[i * k + j] - dot);
            }
        }
    } else {
        throw std::logic_error("backward: unhandled node kind at '" + node.name + "'");
    }
}

BackwardResult run_backward(const ModelGraph& graph, const ActivationTape& tape, int seed_node,
                            Tensor seed_grad) {
    const std::vector<Shape> shapes = graph.infer_shapes();
    BackwardContext ctx{graph, tape, shapes, {}, {}};
    ctx.act_grads.emplace(seed_node, std::move(seed_grad));
    const auto& nodes = graph.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (it->id > seed_node) continue;
        backward_node(ctx, *it);
    }
    BackwardResult result;
    result.param_grads = std::move(ctx.param_grads);
    result.act_grads = std::move(ctx.act_grads);
    return result;
}

}  // namespace

GradMap backward(const ModelGraph& graph, const ActivationTape& tape, const std::vector<int>& labels) {
    const int out_id = graph.output_node();
    const Node& out_node = graph.node(out_id);
    const Tensor& out = tape.outputs.at(out_id);
    const int64_t n = out.shape.dim(0), k = out.shape.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("backward: label count does not match batch");
    }

    if (std::holds_alternative<SoftmaxSpec>(out_node.spec)) {
        // fused softmax + cross-entropy: gradient at the logits is (p - y)/N
        Tensor seed = Tensor::zeros(out.shape);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < k; ++j) {
                const double target = labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0;
                seed.data[i * k + j] = (out.data[i * k + j] - target) / static_cast<double>(n);
            }
        }
        return run_backward(graph, tape, out_node.inputs[0], std::move(seed)).param_grads;
    }

    // generic head: differentiate the clamped loss w.r.t. the probabilities
    Tensor seed = Tensor::zeros(out.shape);
    for (int64_t i = 0; i < n; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        const double p = out.data[i * k + label];
        if (p > kLossClamp) seed.data[i * k + label] = -1.0 / (static_cast<double>(n) * p);
    }
    return run_backward(graph, tape, out_id, std::move(seed)).param_grads;
}

BackwardResult backward_from(const ModelGraph& graph, const ActivationTape& tape, int seed_node,
                             const Tensor& seed_grad) {
    return run_backward(graph, tape, seed_node, seed_grad);
}

void adam_step(std::map<std::string, Tensor>& params, const GradMap& grads, AdamState& state) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (const auto& [name, grad] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("adam_step: gradient for unknown parameter '" + name + "'");
        Tensor& theta = it->second;
        if (!(theta.shape == grad.shape)) {
            throw std::invalid_argument("adam_step: shape mismatch for '" + name + "'");
        }
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(grad.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(grad.shape)).first->second;
        for (int64_t i = 0; i < grad.size(); ++i) {
            const size_t si = static_cast<size_t>(i);
            m.data[si] = state.beta1 * m.data[si] + (1.0 - state.beta1) * grad.data[si];
            v.data[si] = state.beta2 * v.data[si] + (1.0 - state.beta2) * grad.data[si] * grad.data[si];
            const double m_hat = m.data[si] / bc1;
            const double v_hat = v.data[si] / bc2;
            theta.data[si] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

std::vector<std::string> trainable_param_names(const ModelGraph& graph) {
    const std::vector<Shape> shapes = graph.infer_shapes();
    std::vector<std::string> names;
    for (const Node& node : graph.nodes()) {
        if (node.frozen || node.inputs.empty()) continue;
        const Shape& in_shape = shapes[static_cast<size_t>(node.inputs[0])];
        for (const ParamDef& def : param_defs(node.spec, in_shape)) {
            if (def.trainable) names.push_back(node.name + "/" + def.suffix);
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

double grad_check(ModelGraph& graph, const Tensor& batch, const std::vector<int>& labels, double h,
                  int64_t max_coords_per_param) {
    ForwardOptions options;
    options.training = true;
    options.dropout_enabled = false;

    const ActivationTape tape = forward(graph, batch, options);
    const GradMap analytic = backward(graph, tape, labels);

    auto loss_at = [&]() {
        const ActivationTape t = forward(graph, batch, options);
        return cce_loss(t.outputs.at(graph.output_node()), labels);
    };

    double max_rel_err = 0.0;
    for (const std::string& name : trainable_param_names(graph)) {
        auto grad_it = analytic.find(name);
        if (grad_it == analytic.end()) {
            throw std::runtime_error("grad_check: no analytic gradient for '" + name + "'");
        }
        Tensor& theta = graph.params.at(name);
        const int64_t count = theta.size();
        const int64_t stride = (max_coords_per_param > 0 && count > max_coords_per_param)
                                   ? (count + max_coords_per_param - 1) / max_coords_per_param
                                   : 1;
        for (int64_t i = 0; i < count; i += stride) {
            const size_t si = static_cast<size_t>(i);
            const double saved = theta.data[si];
            theta.data[si] = saved + h;
            const double loss_plus = loss_at();
            theta.data[si] = saved - h;
            const double loss_minus = loss_at();
            theta.data[si] = saved;
            const double numeric = (loss_plus - loss_minus) / (2.0 * h);
            const double a = grad_it->second.data[si];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

void initialize_parameters(ModelGraph& graph, uint64_t seed) {
    const std::vector<Shape> shapes = graph.infer_shapes();
    graph.params.clear();
    for (const Node& node : graph.nodes()) {
        if (node.inputs.empty()) continue;
        const Shape& in_shape = shapes[static_cast<size_t>(node.inputs[0])];
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(node.id)));
        for (const ParamDef& def : param_defs(node.spec, in_shape)) {
            Tensor tensor = Tensor::zeros(def.shape);
            if (def.suffix == "kernel") {
                int64_t fan_in = 0;
                if (std::holds_alternative<Conv2DSpec>(node.spec)) {
                    fan_in = def.shape.dim(0) * def.shape.dim(1) * def.shape.dim(2);
                } else {
                    fan_in = def.shape.dim(0);
                }
                const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (double& v : tensor.data) v = rng.normal(0.0, stddev);
            } else if (def.suffix == "gamma" || def.suffix == "moving_variance") {
                for (double& v : tensor.data) v = 1.0;
            }
            // beta, bias, moving_mean stay zero
            graph.params.emplace(node.name + "/" + def.suffix, std::move(tensor));
        }
    }
}

void update_batchnorm_moving_stats(ModelGraph& graph, const ActivationTape& tape, double momentum) {
    for (const auto& [node_id, stats] : tape.bn_stats) {
        const std::string& name = graph.node(node_id).name;
        Tensor& mean = graph.params.at(name + "/moving_mean");
        Tensor& variance = graph.params.at(name + "/moving_variance");
        for (size_t ch = 0; ch < stats.mean.size(); ++ch) {
            mean.data[ch] = momentum * mean.data[ch] + (1.0 - momentum) * stats.mean[ch];
            variance.data[ch] = momentum * variance.data[ch] + (1.0 - momentum) * stats.var[ch];
        }
    }
}

std::vector<int> argmax_rows(const Tensor& scores) {
    const int64_t n = scores.shape.dim(0), k = scores.shape.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int best = 0;
        for (int64_t j = 1; j < k; ++j) {
            if (scores.data[i * k + j] > scores.data[i * k + best]) best = static_cast<int>(j);
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

double accuracy(const Tensor& probs, const std::vector<int>& labels) {
    const std::vector<int> preds = argmax_rows(probs);
    int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) ++correct;
    }
    return preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace fusionnet
