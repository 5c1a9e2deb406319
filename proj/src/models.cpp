#include "fusionnet/models.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fusionnet/fdsfm.hpp"

namespace fusionnet {

namespace {

// ---------------------------------------------------------------------------
// ResNet50V2 (pre-activation). Explicit zero-padding layers of the reference
// definition are folded into same-padded convs/pools; output shapes and
// parameter counts are unchanged by that. Stem conv and the 1x1 convs named
// _0_conv/_3_conv carry biases, _1_conv/_2_conv do not.
// ---------------------------------------------------------------------------

struct ResnetBlockArgs {
    int64_t filters;
    int64_t stride = 1;
    bool conv_shortcut = false;
};

int resnet_block(ModelGraph& g, const std::string& name, int x, const ResnetBlockArgs& args, bool frozen) {
    const int64_t f = args.filters;
    const int preact_bn = g.add(name + "_preact_bn", BatchNormSpec{}, {x}, frozen);
    const int preact = g.add(name + "_preact_relu", ReLUSpec{}, {preact_bn}, frozen);

    int shortcut;
    if (args.conv_shortcut) {
        shortcut = g.add(name + "_0_conv", Conv2DSpec{4 * f, 1, 1, args.stride, args.stride, Padding::Valid, true},
                         {preact}, frozen);
    } else if (args.stride > 1) {
        shortcut = g.add(name + "_0_pool", MaxPool2DSpec{1, 1, args.stride, args.stride, Padding::Valid}, {x}, frozen);
    } else {
        shortcut = x;
    }

    int y = g.add(name + "_1_conv", Conv2DSpec{f, 1, 1, 1, 1, Padding::Valid, false}, {preact}, frozen);
    y = g.add(name + "_1_bn", BatchNormSpec{}, {y}, frozen);
    y = g.add(name + "_1_relu", ReLUSpec{}, {y}, frozen);
    y = g.add(name + "_2_conv", Conv2DSpec{f, 3, 3, args.stride, args.stride, Padding::Same, false}, {y}, frozen);
    y = g.add(name + "_2_bn", BatchNormSpec{}, {y}, frozen);
    y = g.add(name + "_2_relu", ReLUSpec{}, {y}, frozen);
    y = g.add(name + "_3_conv", Conv2DSpec{4 * f, 1, 1, 1, 1, Padding::Valid, true}, {y}, frozen);
    return g.add(name + "_out", AddSpec{}, {shortcut, y}, frozen);
}

int append_resnet50v2(ModelGraph& g, int input, const std::string& prefix, bool frozen) {
    int x = g.add(prefix + "conv1_conv", Conv2DSpec{64, 7, 7, 2, 2, Padding::Same, true}, {input}, frozen);
    x = g.add(prefix + "pool1_pool", MaxPool2DSpec{3, 3, 2, 2, Padding::Same}, {x}, frozen);

    const struct {
        const char* name;
        int64_t filters;
        int blocks;
        int64_t last_stride;
    } stacks[] = {
        {"conv2", 64, 3, 2},
        {"conv3", 128, 4, 2},
        {"conv4", 256, 6, 2},
        {"conv5", 512, 3, 1},
    };
    for (const auto& stack : stacks) {
        for (int b = 1; b <= stack.blocks; ++b) {
            ResnetBlockArgs args;
            args.filters = stack.filters;
            args.conv_shortcut = (b == 1);
            args.stride = (b == stack.blocks) ? stack.last_stride : 1;
            x = resnet_block(g, prefix + stack.name + "_block" + std::to_string(b), x, args, frozen);
        }
    }
    x = g.add(prefix + "post_bn", BatchNormSpec{}, {x}, frozen);
    return g.add(prefix + "post_relu", ReLUSpec{}, {x}, frozen);
}

// ---------------------------------------------------------------------------
// InceptionV3. Every conv is a bias-free Conv2D followed by a scale-free
// BatchNorm and ReLU.
// ---------------------------------------------------------------------------

struct InceptionBuilder {
    ModelGraph& g;
    std::string prefix;
    bool frozen;

    int cbn(int x, const std::string& name, int64_t filters, int64_t kh, int64_t kw, int64_t stride = 1,
            Padding padding = Padding::Same) {
        int y = g.add(prefix + name + "_conv", Conv2DSpec{filters, kh, kw, stride, stride, padding, false}, {x},
                      frozen);
        y = g.add(prefix + name + "_bn", BatchNormSpec{/*scale=*/false}, {y}, frozen);
        return g.add(prefix + name + "_relu", ReLUSpec{}, {y}, frozen);
    }
    int maxpool(int x, const std::string& name, int64_t f, int64_t stride, Padding padding = Padding::Valid) {
        return g.add(prefix + name, MaxPool2DSpec{f, f, stride, stride, padding}, {x}, frozen);
    }
    int avgpool_same(int x, const std::string& name) {
        return g.add(prefix + name, AvgPool2DSpec{3, 3, 1, 1, Padding::Same}, {x}, frozen);
    }
    int concat(const std::string& name, std::vector<int> inputs) {
        return g.add(prefix + name, ConcatSpec{}, std::move(inputs), frozen);
    }
};

int append_inceptionv3(ModelGraph& g, int input, const std::string& prefix, bool frozen) {
    InceptionBuilder b{g, prefix, frozen};

    int x = b.cbn(input, "stem_conv1", 32, 3, 3, 2, Padding::Valid);
    x = b.cbn(x, "stem_conv2", 32, 3, 3, 1, Padding::Valid);
    x = b.cbn(x, "stem_conv3", 64, 3, 3);
    x = b.maxpool(x, "stem_pool1", 3, 2);
    x = b.cbn(x, "stem_conv4", 80, 1, 1, 1, Padding::Valid);
    x = b.cbn(x, "stem_conv5", 192, 3, 3, 1, Padding::Valid);
    x = b.maxpool(x, "stem_pool2", 3, 2);

    // mixed0..mixed2: 1x1 / 5x5 / double-3x3 / pooled-1x1 branches
    const int64_t pool_filters[3] = {32, 64, 64};
    for (int i = 0; i < 3; ++i) {
        const std::string m = "mixed" + std::to_string(i);
        const int b1 = b.cbn(x, m + "_1x1", 64, 1, 1);
        int b5 = b.cbn(x, m + "_5x5_reduce", 48, 1, 1);
        b5 = b.cbn(b5, m + "_5x5", 64, 5, 5);
        int b3 = b.cbn(x, m + "_3x3dbl_reduce", 64, 1, 1);
        b3 = b.cbn(b3, m + "_3x3dbl_1", 96, 3, 3);
        b3 = b.cbn(b3, m + "_3x3dbl_2", 96, 3, 3);
        int bp = b.avgpool_same(x, m + "_pool");
        bp = b.cbn(bp, m + "_pool_proj", pool_filters[i], 1, 1);
        x = b.concat(m, {b1, b5, b3, bp});
    }

    {  // mixed3: stride-2 reduction
        int b3 = b.cbn(x, "mixed3_3x3", 384, 3, 3, 2, Padding::Valid);
        int bd = b.cbn(x, "mixed3_3x3dbl_reduce", 64, 1, 1);
        bd = b.cbn(bd, "mixed3_3x3dbl_1", 96, 3, 3);
        bd = b.cbn(bd, "mixed3_3x3dbl_2", 96, 3, 3, 2, Padding::Valid);
        const int bp = b.maxpool(x, "mixed3_pool", 3, 2);
        x = b.concat("mixed3", {b3, bd, bp});
    }

    // mixed4..mixed7: factorized 7x7 branches
    const int64_t mid[4] = {128, 160, 160, 192};
    for (int i = 0; i < 4; ++i) {
        const std::string m = "mixed" + std::to_string(4 + i);
        const int64_t c = mid[i];
        const int b1 = b.cbn(x, m + "_1x1", 192, 1, 1);
        int b7 = b.cbn(x, m + "_7x7_reduce", c, 1, 1);
        b7 = b.cbn(b7, m + "_7x7_1", c, 1, 7);
        b7 = b.cbn(b7, m + "_7x7_2", 192, 7, 1);
        int bd = b.cbn(x, m + "_7x7dbl_reduce", c, 1, 1);
        bd = b.cbn(bd, m + "_7x7dbl_1", c, 7, 1);
        bd = b.cbn(bd, m + "_7x7dbl_2", c, 1, 7);
        bd = b.cbn(bd, m + "_7x7dbl_3", c, 7, 1);
        bd = b.cbn(bd, m + "_7x7dbl_4", 192, 1, 7);
        int bp = b.avgpool_same(x, m + "_pool");
        bp = b.cbn(bp, m + "_pool_proj", 192, 1, 1);
        x = b.concat(m, {b1, b7, bd, bp});
    }

    {  // mixed8: stride-2 reduction
        int b3 = b.cbn(x, "mixed8_3x3_reduce", 192, 1, 1);
        b3 = b.cbn(b3, "mixed8_3x3", 320, 3, 3, 2, Padding::Valid);
        int b7 = b.cbn(x, "mixed8_7x7x3_reduce", 192, 1, 1);
        b7 = b.cbn(b7, "mixed8_7x7x3_1", 192, 1, 7);
        b7 = b.cbn(b7, "mixed8_7x7x3_2", 192, 7, 1);
        b7 = b.cbn(b7, "mixed8_7x7x3_3", 192, 3, 3, 2, Padding::Valid);
        const int bp = b.maxpool(x, "mixed8_pool", 3, 2);
        x = b.concat("mixed8", {b3, b7, bp});
    }

    // mixed9, mixed10: split 3x3 branches
    for (int i = 0; i < 2; ++i) {
        const std::string m = "mixed" + std::to_string(9 + i);
        const int b1 = b.cbn(x, m + "_1x1", 320, 1, 1);
        const int b3r = b.cbn(x, m + "_3x3_reduce", 384, 1, 1);
        const int b3a = b.cbn(b3r, m + "_3x3_1", 384, 1, 3);
        const int b3b = b.cbn(b3r, m + "_3x3_2", 384, 3, 1);
        const int b3 = b.concat(m + "_branch3x3", {b3a, b3b});
        const int bdr = b.cbn(x, m + "_3x3dbl_reduce", 448, 1, 1);
        const int bdm = b.cbn(bdr, m + "_3x3dbl_mid", 384, 3, 3);
        const int bda = b.cbn(bdm, m + "_3x3dbl_1", 384, 1, 3);
        const int bdb = b.cbn(bdm, m + "_3x3dbl_2", 384, 3, 1);
        const int bd = b.concat(m + "_branch3x3dbl", {bda, bdb});
        int bp = b.avgpool_same(x, m + "_pool");
        bp = b.cbn(bp, m + "_pool_proj", 192, 1, 1);
        x = b.concat(m, {b1, b3, bd, bp});
    }
    return x;
}

// ---------------------------------------------------------------------------
// assembly helpers
// ---------------------------------------------------------------------------

int resolve_tap(ModelGraph& g, const TapPoint& tap, const std::string& concat_name) {
    if (tap.nodes.empty()) throw std::invalid_argument("tap with no node names");
    std::vector<int> ids;
    for (const std::string& name : tap.nodes) {
        const int id = g.find(name);
        if (id < 0) throw std::invalid_argument("tap node '" + name + "' not found in graph");
        ids.push_back(id);
    }
    int id = ids[0];
    if (ids.size() > 1) {
        id = g.add(concat_name, ConcatSpec{}, ids, g.node(ids[0]).frozen);
    }
    const Shape actual = g.infer_shapes()[static_cast<size_t>(id)];
    if (!(actual == tap.shape)) {
        throw std::invalid_argument("tap '" + g.node(id).name + "' has shape " + actual.str() +
                                    ", configured as " + tap.shape.str());
    }
    return id;
}

struct SideNames {
    FusionNames fusion;
    std::string gap;
};

/// FDSFM over the side's taps, trunk appended at the second concat, then
/// batch-norm, 1x1 projection, and GAP2D. Returns the GAP node id.
int assemble_side(ModelGraph& g, const std::vector<TapPoint>& taps, const TapPoint& trunk,
                  int64_t projection_filters, const SideNames& names, const std::string& trunk_concat_name) {
    if (taps.size() < 2) throw std::invalid_argument("fusion side needs >= 2 taps");
    std::vector<int> tap_ids;
    std::vector<Shape> tap_shapes;
    for (size_t i = 0; i < taps.size(); ++i) {
        tap_ids.push_back(resolve_tap(g, taps[i], names.fusion.prefix + "tap" + std::to_string(i)));
        tap_shapes.push_back(taps[i].shape);
    }
    const int trunk_id = resolve_tap(g, trunk, trunk_concat_name);

    int64_t target = tap_shapes[0].dim(0);
    for (const Shape& s : tap_shapes) target = std::min(target, s.dim(0));
    if (trunk.shape.dim(0) != target) {
        throw std::invalid_argument("trunk spatial " + std::to_string(trunk.shape.dim(0)) +
                                    " does not match fusion target " + std::to_string(target));
    }

    const FusionPlan plan = plan_fusion(tap_shapes, target, projection_filters);
    const FusionFragment fragment = emit_subgraph(g, plan, tap_ids, trunk_id, names.fusion);
    return g.add(names.gap.empty() ? names.fusion.prefix + "gap" : names.gap, GlobalAvgPool2DSpec{},
                 {fragment.projection});
}

int add_classifier_head(ModelGraph& g, int fused, const FusionConfig& cfg, const std::string& dropout_name,
                        const std::string& dense1_name, const std::string& dense2_name,
                        const std::string& softmax_name) {
    if (cfg.classes < 2) throw std::invalid_argument("classes must be >= 2");
    int x = g.add(dropout_name, DropoutSpec{cfg.dropout}, {fused});
    x = g.add(dense1_name, DenseSpec{cfg.dense_units, true}, {x});
    x = g.add(dense2_name, DenseSpec{cfg.classes, true}, {x});
    return g.add(softmax_name, SoftmaxSpec{}, {x});
}

SideNames table_resnet_names() {
    SideNames names;
    names.fusion.prefix = "res_fusion_";
    names.fusion.pools = {"max_pooling2d_36", "", "max_pooling2d_39", "max_pooling2d_37"};
    names.fusion.concat = "concatenate_18";
    names.fusion.trunk_concat = "concatenate_19";
    names.fusion.batch_norm = "batch_norm_112";
    names.fusion.projection = "conv2d_102";
    names.gap = "global_avg_pool2d_4";
    return names;
}

SideNames table_inception_names() {
    SideNames names;
    names.fusion.prefix = "inc_fusion_";
    names.fusion.concat = "concatenate_24";
    names.fusion.trunk_concat = "concatenate_25";
    names.fusion.batch_norm = "batch_norm_115";
    names.fusion.projection = "conv2d_105";
    names.gap = "global_avg_pool2d_7";
    return names;
}

// ---------------------------------------------------------------------------
// toy backbones
// ---------------------------------------------------------------------------

int append_toy_residual(ModelGraph& g, int input) {
    const std::string p = "toyres/";
    int x = g.add(p + "stem_conv", Conv2DSpec{8, 3, 3, 2, 2, Padding::Same, false}, {input});
    x = g.add(p + "stem_bn", BatchNormSpec{}, {x});
    const int stem = g.add(p + "stem_relu", ReLUSpec{}, {x});

    // block1: two convs, taps at the mid relu and the block output (16,16,8)
    x = g.add(p + "block1_conv1", Conv2DSpec{8, 3, 3, 1, 1, Padding::Same, false}, {stem});
    x = g.add(p + "block1_bn1", BatchNormSpec{}, {x});
    const int block1_mid = g.add(p + "block1_relu", ReLUSpec{}, {x});
    x = g.add(p + "block1_conv2", Conv2DSpec{8, 3, 3, 1, 1, Padding::Same, false}, {block1_mid});
    x = g.add(p + "block1_bn2", BatchNormSpec{}, {x});
    x = g.add(p + "block1_add", AddSpec{}, {x, stem});
    const int block1 = g.add(p + "block1_out", ReLUSpec{}, {x});

    x = g.add(p + "down1_conv", Conv2DSpec{16, 3, 3, 2, 2, Padding::Same, false}, {block1});
    x = g.add(p + "down1_bn", BatchNormSpec{}, {x});
    const int down1 = g.add(p + "down1_relu", ReLUSpec{}, {x});

    // block2: single conv residual (8,8,16)
    x = g.add(p + "block2_conv", Conv2DSpec{16, 3, 3, 1, 1, Padding::Same, false}, {down1});
    x = g.add(p + "block2_bn", BatchNormSpec{}, {x});
    x = g.add(p + "block2_add", AddSpec{}, {x, down1});
    g.add(p + "block2_out", ReLUSpec{}, {x});

    const int block2 = g.find(p + "block2_out");
    x = g.add(p + "down2_conv", Conv2DSpec{24, 3, 3, 2, 2, Padding::Same, false}, {block2});
    x = g.add(p + "down2_bn", BatchNormSpec{}, {x});
    const int down2 = g.add(p + "down2_relu", ReLUSpec{}, {x});

    // block3: single conv residual, pre-add tap (4,4,24)
    x = g.add(p + "block3_conv", Conv2DSpec{24, 3, 3, 1, 1, Padding::Same, false}, {down2});
    const int block3_bn = g.add(p + "block3_bn", BatchNormSpec{}, {x});
    x = g.add(p + "block3_add", AddSpec{}, {block3_bn, down2});
    return g.add(p + "trunk", ReLUSpec{}, {x});
}

int append_toy_branched(ModelGraph& g, int input) {
    const std::string p = "toyinc/";
    int x = g.add(p + "stem_conv", Conv2DSpec{8, 3, 3, 2, 2, Padding::Same, false}, {input});
    x = g.add(p + "stem_bn", BatchNormSpec{}, {x});
    x = g.add(p + "stem_relu", ReLUSpec{}, {x});
    x = g.add(p + "poolA", MaxPool2DSpec{2, 2, 2, 2, Padding::Valid}, {x});

    // blockA: two parallel filter sizes (8,8,16)
    int a1 = g.add(p + "blockA_1x1_conv", Conv2DSpec{8, 1, 1, 1, 1, Padding::Valid, false}, {x});
    a1 = g.add(p + "blockA_1x1_relu", ReLUSpec{}, {a1});
    int a2 = g.add(p + "blockA_3x3_conv", Conv2DSpec{8, 3, 3, 1, 1, Padding::Same, false}, {x});
    a2 = g.add(p + "blockA_3x3_relu", ReLUSpec{}, {a2});
    const int block_a = g.add(p + "blockA_out", ConcatSpec{}, {a1, a2});

    const int pooled = g.add(p + "poolB", MaxPool2DSpec{2, 2, 2, 2, Padding::Valid}, {block_a});

    // blockB: four parallel branches at (4,4); each is a fusion tap
    int b1 = g.add(p + "blockB_1x1_conv", Conv2DSpec{6, 1, 1, 1, 1, Padding::Valid, false}, {pooled});
    b1 = g.add(p + "blockB_b1", ReLUSpec{}, {b1});
    int b2 = g.add(p + "blockB_3x3_conv", Conv2DSpec{6, 3, 3, 1, 1, Padding::Same, false}, {pooled});
    b2 = g.add(p + "blockB_b2", ReLUSpec{}, {b2});
    int b3 = g.add(p + "blockB_dbl_reduce", Conv2DSpec{6, 1, 1, 1, 1, Padding::Valid, false}, {pooled});
    b3 = g.add(p + "blockB_dbl_relu1", ReLUSpec{}, {b3});
    b3 = g.add(p + "blockB_dbl_conv", Conv2DSpec{6, 3, 3, 1, 1, Padding::Same, false}, {b3});
    b3 = g.add(p + "blockB_b3", ReLUSpec{}, {b3});
    int b4 = g.add(p + "blockB_pool", MaxPool2DSpec{3, 3, 1, 1, Padding::Same}, {pooled});
    b4 = g.add(p + "blockB_pool_conv", Conv2DSpec{6, 1, 1, 1, 1, Padding::Valid, false}, {b4});
    b4 = g.add(p + "blockB_b4", ReLUSpec{}, {b4});
    return g.add(p + "trunk", ConcatSpec{}, {b1, b2, b3, b4});
}

FusionConfig toy_fusion_config(int64_t classes) {
    FusionConfig cfg;
    cfg.resnet_taps = {
        {{"toyres/block1_relu"}, Shape{16, 16, 8}},
        {{"toyres/block3_bn"}, Shape{4, 4, 24}},
        {{"toyres/block2_out"}, Shape{8, 8, 16}},
        {{"toyres/block1_out"}, Shape{16, 16, 8}},
    };
    cfg.resnet_trunk = {{"toyres/trunk"}, Shape{4, 4, 24}};
    cfg.inception_taps = {
        {{"toyinc/blockB_b1"}, Shape{4, 4, 6}},
        {{"toyinc/blockB_b2"}, Shape{4, 4, 6}},
        {{"toyinc/blockB_b3"}, Shape{4, 4, 6}},
        {{"toyinc/blockB_b4"}, Shape{4, 4, 6}},
    };
    cfg.inception_trunk = {{"toyinc/trunk"}, Shape{4, 4, 24}};
    cfg.projection_filters = 24;
    cfg.dense_units = 16;
    cfg.classes = classes;
    cfg.dropout = 0.3;
    cfg.freeze_backbones = false;
    return cfg;
}

SideNames toy_side_names(const std::string& prefix) {
    SideNames names;
    names.fusion.prefix = prefix;
    return names;
}

const char* kBackbonePrefixes[] = {"resnet/", "inception/", "toyres/", "toyinc/"};

bool is_backbone_node(const std::string& name) {
    for (const char* prefix : kBackbonePrefixes) {
        if (name.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

enum class Side { Resnet, Inception, Both };

ModelGraph build_fused(const FusionConfig& cfg, Side side, bool toy) {
    ModelGraph g;
    const int input = g.add("input", InputSpec{toy ? Shape{32, 32, 1} : Shape{224, 224, 3}});

    int res_gap = -1, inc_gap = -1;
    if (side == Side::Resnet || side == Side::Both) {
        if (toy) append_toy_residual(g, input);
        else append_resnet50v2(g, input, "resnet/", cfg.freeze_backbones);
        const SideNames names = toy ? toy_side_names("res_fusion_") : table_resnet_names();
        res_gap = assemble_side(g, cfg.resnet_taps, cfg.resnet_trunk, cfg.projection_filters, names,
                                toy ? "toyres/trunk_concat" : "resnet/trunk_concat");
    }
    if (side == Side::Inception || side == Side::Both) {
        if (toy) append_toy_branched(g, input);
        else append_inceptionv3(g, input, "inception/", cfg.freeze_backbones);
        const SideNames names = toy ? toy_side_names("inc_fusion_") : table_inception_names();
        inc_gap = assemble_side(g, cfg.inception_taps, cfg.inception_trunk, cfg.projection_filters, names,
                                toy ? "toyinc/trunk_concat" : "inception/trunk_concat");
    }

    int fused;
    if (side == Side::Both) {
        fused = g.add("lambda_add", AddSpec{}, {res_gap, inc_gap});
    } else {
        fused = side == Side::Resnet ? res_gap : inc_gap;
    }
    const int softmax = add_classifier_head(g, fused, cfg, "dropout", "dense_2", "dense_3", "softmax");
    g.outputs = {softmax};
    g.cam_node = side == Side::Inception ? (toy ? "inc_fusion_proj" : "conv2d_105")
                                         : (toy ? "res_fusion_proj" : "conv2d_102");
    return g;
}

ModelGraph build_trunk_only(const FusionConfig& cfg, bool toy) {
    ModelGraph g;
    const int input = g.add("input", InputSpec{toy ? Shape{32, 32, 1} : Shape{224, 224, 3}});
    int res_trunk, inc_trunk;
    if (toy) {
        append_toy_residual(g, input);
        append_toy_branched(g, input);
        res_trunk = resolve_tap(g, cfg.resnet_trunk, "toyres/trunk_concat");
        inc_trunk = resolve_tap(g, cfg.inception_trunk, "toyinc/trunk_concat");
    } else {
        append_resnet50v2(g, input, "resnet/", cfg.freeze_backbones);
        append_inceptionv3(g, input, "inception/", cfg.freeze_backbones);
        // model-level fusion taps the final backbone outputs, both 2048-wide
        res_trunk = g.find("resnet/post_relu");
        inc_trunk = g.find("inception/mixed10");
    }
    const int res_gap = g.add("global_avg_pool2d_4", GlobalAvgPool2DSpec{}, {res_trunk});
    const int inc_gap = g.add("global_avg_pool2d_7", GlobalAvgPool2DSpec{}, {inc_trunk});
    const int fused = g.add("lambda_add", AddSpec{}, {res_gap, inc_gap});
    const int softmax = add_classifier_head(g, fused, cfg, "dropout", "dense_2", "dense_3", "softmax");
    g.outputs = {softmax};
    return g;
}

}  // namespace

FusionConfig default_fusion_config() {
    FusionConfig cfg;
    cfg.resnet_taps = {
        {{"resnet/conv3_block1_1_relu"}, Shape{28, 28, 128}},
        {{"resnet/conv4_block6_out"}, Shape{7, 7, 1024}},
        {{"resnet/conv3_block4_out"}, Shape{14, 14, 512}},
        {{"resnet/conv2_block3_out"}, Shape{28, 28, 256}},
    };
    cfg.resnet_trunk = {{"resnet/post_relu"}, Shape{7, 7, 2048}};
    cfg.inception_taps = {
        {{"inception/mixed9_3x3_1_relu"}, Shape{5, 5, 384}},
        {{"inception/mixed9_3x3dbl_reduce_relu"}, Shape{5, 5, 448}},
        {{"inception/mixed10_3x3_1_relu"}, Shape{5, 5, 384}},
        {{"inception/mixed10_3x3dbl_reduce_relu"}, Shape{5, 5, 448}},
    };
    // no single 1920-channel node exists in the reference backbone; the
    // trunk is a zero-parameter concat of three late-stage branch outputs
    cfg.inception_trunk = {
        {"inception/mixed10_branch3x3", "inception/mixed10_branch3x3dbl", "inception/mixed10_3x3dbl_mid_relu"},
        Shape{5, 5, 1920}};
    return cfg;
}

ModelGraph build_backbone_shape(BackboneKind kind) {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{224, 224, 3}});
    if (kind == BackboneKind::ResNet50V2) {
        g.outputs = {append_resnet50v2(g, input, "resnet/", false)};
    } else {
        g.outputs = {append_inceptionv3(g, input, "inception/", false)};
    }
    return g;
}

ModelGraph build_multifusionnet(const FusionConfig& cfg) {
    return build_fused(cfg, Side::Both, /*toy=*/false);
}

ModelGraph build_subsidiary(ModelVariant variant, const FusionConfig& cfg) {
    switch (variant) {
        case ModelVariant::M1: return build_fused(cfg, Side::Resnet, false);
        case ModelVariant::M2: return build_fused(cfg, Side::Inception, false);
        case ModelVariant::M3: return build_trunk_only(cfg, false);
        case ModelVariant::M4: return build_multifusionnet(cfg);
    }
    throw std::logic_error("unknown variant");
}

ModelGraph build_toy(ModelVariant variant, int64_t classes) {
    const FusionConfig cfg = toy_fusion_config(classes);
    switch (variant) {
        case ModelVariant::M1: return build_fused(cfg, Side::Resnet, true);
        case ModelVariant::M2: return build_fused(cfg, Side::Inception, true);
        case ModelVariant::M3: return build_trunk_only(cfg, true);
        case ModelVariant::M4: return build_fused(cfg, Side::Both, true);
    }
    throw std::logic_error("unknown variant");
}

ModelGraph build_compact_cnn(int64_t classes) {
    ModelGraph g;
    const int input = g.add("input", InputSpec{Shape{32, 32, 1}});
    int x = g.add("conv1", Conv2DSpec{8, 3, 3, 2, 2, Padding::Same, true}, {input});
    x = g.add("relu1", ReLUSpec{}, {x});
    x = g.add("conv2", Conv2DSpec{16, 3, 3, 1, 1, Padding::Same, true}, {x});
    x = g.add("relu2", ReLUSpec{}, {x});
    x = g.add("pool2", MaxPool2DSpec{2, 2, 2, 2, Padding::Valid}, {x});
    x = g.add("conv3", Conv2DSpec{16, 3, 3, 1, 1, Padding::Same, true}, {x});
    x = g.add("relu3", ReLUSpec{}, {x});
    x = g.add("gap", GlobalAvgPool2DSpec{}, {x});
    x = g.add("dense", DenseSpec{classes, true}, {x});
    const int softmax = g.add("softmax", SoftmaxSpec{}, {x});
    g.outputs = {softmax};
    g.cam_node = "conv3";
    return g;
}

ModelGraph build_model(ModelVariant variant, ModelScale scale, const FusionConfig& cfg) {
    if (scale == ModelScale::Toy) return build_toy(variant, cfg.classes);
    return build_subsidiary(variant, cfg);
}

ModelGraph build_model(ModelVariant variant, ModelScale scale) {
    return build_model(variant, scale, default_fusion_config());
}

std::vector<std::string> fusion_head_kinds(const ModelGraph& graph) {
    std::vector<std::string> kinds;
    for (const Node& node : graph.nodes()) {
        if (std::holds_alternative<InputSpec>(node.spec)) continue;
        if (is_backbone_node(node.name)) continue;
        kinds.push_back(layer_kind(node.spec));
    }
    return kinds;
}

ModelVariant parse_variant(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "m1") return ModelVariant::M1;
    if (t == "m2") return ModelVariant::M2;
    if (t == "m3") return ModelVariant::M3;
    if (t == "m4") return ModelVariant::M4;
    throw std::invalid_argument("unknown variant '" + text + "' (expected m1|m2|m3|m4)");
}

ModelScale parse_scale(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "full") return ModelScale::Full;
    if (t == "toy") return ModelScale::Toy;
    throw std::invalid_argument("unknown scale '" + text + "' (expected full|toy)");
}

std::string to_string(ModelVariant variant) {
    switch (variant) {
        case ModelVariant::M1: return "m1";
        case ModelVariant::M2: return "m2";
        case ModelVariant::M3: return "m3";
        case ModelVariant::M4: return "m4";
    }
    return "?";
}

std::string to_string(ModelScale scale) { return scale == ModelScale::Full ? "full" : "toy"; }

namespace {

nlohmann::json tap_to_json(const TapPoint& tap) {
    return {{"nodes", tap.nodes}, {"shape", tap.shape.dims()}};
}

TapPoint tap_from_json(const nlohmann::json& j) {
    TapPoint tap;
    tap.nodes = j.at("nodes").get<std::vector<std::string>>();
    tap.shape = Shape(j.at("shape").get<std::vector<int64_t>>());
    return tap;
}

}  // namespace

std::string fusion_config_to_json(const FusionConfig& cfg) {
    nlohmann::json taps_r = nlohmann::json::array(), taps_i = nlohmann::json::array();
    for (const TapPoint& tap : cfg.resnet_taps) taps_r.push_back(tap_to_json(tap));
    for (const TapPoint& tap : cfg.inception_taps) taps_i.push_back(tap_to_json(tap));
    const nlohmann::json doc = {
        {"resnet_taps", taps_r},
        {"resnet_trunk", tap_to_json(cfg.resnet_trunk)},
        {"inception_taps", taps_i},
        {"inception_trunk", tap_to_json(cfg.inception_trunk)},
        {"projection_filters", cfg.projection_filters},
        {"dense_units", cfg.dense_units},
        {"classes", cfg.classes},
        {"dropout", cfg.dropout},
        {"freeze_backbones", cfg.freeze_backbones},
    };
    return doc.dump(2);
}

FusionConfig fusion_config_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    FusionConfig cfg;
    for (const auto& j : doc.at("resnet_taps")) cfg.resnet_taps.push_back(tap_from_json(j));
    cfg.resnet_trunk = tap_from_json(doc.at("resnet_trunk"));
    for (const auto& j : doc.at("inception_taps")) cfg.inception_taps.push_back(tap_from_json(j));
    cfg.inception_trunk = tap_from_json(doc.at("inception_trunk"));
    cfg.projection_filters = doc.value("projection_filters", cfg.projection_filters);
    cfg.dense_units = doc.value("dense_units", cfg.dense_units);
    cfg.classes = doc.value("classes", cfg.classes);
    cfg.dropout = doc.value("dropout", cfg.dropout);
    cfg.freeze_backbones = doc.value("freeze_backbones", cfg.freeze_backbones);
    return cfg;
}

}  // namespace fusionnet
