#pragma once

#include <string>
#include <vector>

#include "fusionnet/graph.hpp"

namespace fusionnet {

enum class BackboneKind { ResNet50V2, InceptionV3 };
enum class ModelVariant { M1, M2, M3, M4 };
enum class ModelScale { Full, Toy };

/// A named extraction point in a backbone. When several node names are
/// listed the tap is their channel concatenation (adds a zero-parameter
/// Concat node on the backbone side).
struct TapPoint {
    std::vector<std::string> nodes;
    Shape shape;  // declared; verified against the built graph
};

struct FusionConfig {
    std::vector<TapPoint> resnet_taps;
    TapPoint resnet_trunk;
    std::vector<TapPoint> inception_taps;
    TapPoint inception_trunk;
    int64_t projection_filters = 2048;
    int64_t dense_units = 256;
    int64_t classes = 3;
    double dropout = 0.3;
    bool freeze_backbones = true;
};

FusionConfig default_fusion_config();

/// Shape-level graph of one backbone on a (224,224,3) input. Parameters are
/// counted, never loaded.
ModelGraph build_backbone_shape(BackboneKind kind);

/// Full two-backbone fusion model: per side, pooled taps are concatenated,
/// the trunk is appended at a second concat, then batch-norm, 1x1
/// projection, and global average pooling; the sides fuse by element-wise
/// addition into a dropout + dense + dense + softmax head.
ModelGraph build_multifusionnet(const FusionConfig& cfg);

/// M1 = single-side fusion over the first backbone, M2 = over the second,
/// M3 = trunk-only pooling of both backbones fused by addition.
ModelGraph build_subsidiary(ModelVariant variant, const FusionConfig& cfg);

/// Hand-sized trainable twin on a (32,32,1) input: a 3-block residual stack
/// and a 2-block parallel-branch stack feeding the same fusion plumbing.
ModelGraph build_toy(ModelVariant variant, int64_t classes = 3);

/// Small plain CNN with a designated final conv at 8x8 spatial resolution;
/// used for class-activation-map localization checks and demos.
ModelGraph build_compact_cnn(int64_t classes = 3);

ModelGraph build_model(ModelVariant variant, ModelScale scale, const FusionConfig& cfg);
ModelGraph build_model(ModelVariant variant, ModelScale scale);

/// Layer kinds of the fusion head (all nodes outside the backbone
/// namespaces), for structural comparison between scales.
std::vector<std::string> fusion_head_kinds(const ModelGraph& graph);

ModelVariant parse_variant(const std::string& text);
ModelScale parse_scale(const std::string& text);
std::string to_string(ModelVariant variant);
std::string to_string(ModelScale scale);

std::string fusion_config_to_json(const FusionConfig& cfg);
FusionConfig fusion_config_from_json(const std::string& text);

}  // namespace fusionnet
