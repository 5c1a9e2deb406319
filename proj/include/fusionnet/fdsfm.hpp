#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fusionnet/graph.hpp"

namespace fusionnet {

/// Max-pool window/stride pair that maps one spatial size onto the fusion
/// target, or the identity when the map is already at target size.
struct PoolChoice {
    int64_t f = 0;
    int64_t s = 0;
    bool is_identity() const { return f == 0; }
    static PoolChoice identity() { return PoolChoice{}; }
};

/// Downsampling choice for W -> T: s = floor(W/T), f = W - s*(T-1).
/// Guarantees floor((W-f)/s)+1 == T and s*(T-1)+f == W (windows tile the
/// input exactly). Rejects W < T: upsampling is unsupported.
PoolChoice plan_pool(int64_t source_spatial, int64_t target_spatial);

struct FusionPlan {
    int64_t target_spatial = 0;
    std::vector<std::pair<Shape, PoolChoice>> per_map;
    int64_t concat_channels = 0;
    int64_t projection_filters = 0;
    bool batch_norm = true;
};

/// Plan pooling for >= 2 square feature maps so all reach (target, target),
/// preserving input order for the concatenation.
FusionPlan plan_fusion(const std::vector<Shape>& maps, int64_t target, int64_t projection_filters);

/// Optional node names for the emitted fragment; blank entries fall back to
/// "<prefix>pool<i>" etc.
struct FusionNames {
    std::string prefix;
    std::vector<std::string> pools;
    std::string concat;
    std::string trunk_concat;
    std::string batch_norm;
    std::string projection;
};

struct FusionFragment {
    int concat = -1;        // fused taps
    int trunk_concat = -1;  // -1 when no trunk was appended
    int projection = -1;    // final 1x1 conv node
};

/// Append the planned fragment to `graph`: pool each tap, concatenate,
/// optionally concatenate the trunk, batch-normalize, project with a 1x1
/// conv. `tap_nodes` must match plan.per_map in order and shape.
FusionFragment emit_subgraph(ModelGraph& graph, const FusionPlan& plan, const std::vector<int>& tap_nodes,
                             std::optional<int> trunk_node = std::nullopt, const FusionNames& names = {});

std::string plan_to_json(const FusionPlan& plan);

}  // namespace fusionnet
