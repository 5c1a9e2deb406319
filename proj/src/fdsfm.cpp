#include "fusionnet/fdsfm.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fusionnet {

PoolChoice plan_pool(int64_t source_spatial, int64_t target_spatial) {
    if (target_spatial < 1) throw std::invalid_argument("plan_pool: target must be >= 1");
    if (source_spatial < target_spatial) {
        throw std::invalid_argument("plan_pool: cannot upsample " + std::to_string(source_spatial) + " -> " +
                                    std::to_string(target_spatial));
    }
    if (source_spatial == target_spatial) return PoolChoice::identity();
    PoolChoice choice;
    choice.s = source_spatial / target_spatial;
    choice.f = source_spatial - choice.s * (target_spatial - 1);
    return choice;
}

FusionPlan plan_fusion(const std::vector<Shape>& maps, int64_t target, int64_t projection_filters) {
    if (maps.size() < 2) throw std::invalid_argument("plan_fusion: needs >= 2 feature maps");
    if (projection_filters < 1) throw std::invalid_argument("plan_fusion: projection_filters must be >= 1");
    FusionPlan plan;
    plan.target_spatial = target;
    plan.projection_filters = projection_filters;
    for (const Shape& shape : maps) {
        if (shape.rank() != 3) throw std::invalid_argument("plan_fusion: maps must be rank-3, got " + shape.str());
        if (shape.dim(0) != shape.dim(1)) {
            throw std::invalid_argument("plan_fusion: non-square map " + shape.str());
        }
        plan.per_map.emplace_back(shape, plan_pool(shape.dim(0), target));
        plan.concat_channels += shape.dim(2);
    }
    return plan;
}

FusionFragment emit_subgraph(ModelGraph& graph, const FusionPlan& plan, const std::vector<int>& tap_nodes,
                             std::optional<int> trunk_node, const FusionNames& names) {
    if (plan.per_map.size() < 2) throw std::invalid_argument("emit_subgraph: plan must cover >= 2 maps");
    if (tap_nodes.size() != plan.per_map.size()) {
        throw std::invalid_argument("emit_subgraph: tap node count does not match plan");
    }
    auto pick = [&](const std::string& given, const std::string& fallback) {
        return given.empty() ? names.prefix + fallback : given;
    };

    std::vector<int> concat_inputs;
    for (size_t i = 0; i < plan.per_map.size(); ++i) {
        const PoolChoice& choice = plan.per_map[i].second;
        if (choice.is_identity()) {
            concat_inputs.push_back(tap_nodes[i]);
            continue;
        }
        std::string name = i < names.pools.size() && !names.pools[i].empty()
                               ? names.pools[i]
                               : names.prefix + "pool" + std::to_string(i);
        concat_inputs.push_back(graph.add(
            std::move(name), MaxPool2DSpec{choice.f, choice.f, choice.s, choice.s, Padding::Valid}, {tap_nodes[i]}));
    }

    FusionFragment fragment;
    fragment.concat = graph.add(pick(names.concat, "concat"), ConcatSpec{}, concat_inputs);
    int fused = fragment.concat;
    if (trunk_node) {
        fragment.trunk_concat =
            graph.add(pick(names.trunk_concat, "trunk_concat"), ConcatSpec{}, {fused, *trunk_node});
        fused = fragment.trunk_concat;
    }
    if (plan.batch_norm) {
        fused = graph.add(pick(names.batch_norm, "bn"), BatchNormSpec{}, {fused});
    }
    fragment.projection = graph.add(pick(names.projection, "proj"),
                                    Conv2DSpec{plan.projection_filters, 1, 1, 1, 1, Padding::Valid, true}, {fused});
    return fragment;
}

std::string plan_to_json(const FusionPlan& plan) {
    nlohmann::json maps = nlohmann::json::array();
    for (const auto& [shape, choice] : plan.per_map) {
        nlohmann::json entry;
        entry["source"] = shape.dims();
        if (choice.is_identity()) {
            entry["pool"] = "identity";
        } else {
            entry["pool"] = {{"f", choice.f}, {"s", choice.s}};
        }
        maps.push_back(std::move(entry));
    }
    nlohmann::json doc = {
        {"target_spatial", plan.target_spatial},
        {"maps", std::move(maps)},
        {"concat_channels", plan.concat_channels},
        {"projection_filters", plan.projection_filters},
        {"batch_norm", plan.batch_norm},
    };
    return doc.dump(2);
}

}  // namespace fusionnet
