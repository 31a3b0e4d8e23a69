#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hdnet/errors.hpp"

namespace hdnet {

// Single source of architectural truth.
struct ModelConfig {
    int num_levels = 3;
    std::vector<int> channels_per_level = {16, 32, 64};
    int head_channels = 32;  // hidden width of the DDM / density heads
    bool shared_backbone = true;
    bool use_saff = true;
    bool freeze_saff_w = false;  // SAFF "without channel-wise parameter": w pinned at 1
    bool use_soft_masks = true;  // false = truncated binary masks (gradient ablation)
    double lambda_weight = 1.0;

    // head_to_level[i] is the pyramid level index (0-based) feeding density
    // head i (density level i+1). Empty = default: densest head gets the
    // highest-resolution level.
    std::vector<int> head_to_level;

    void validate() const {
        if (num_levels < 1) throw ConfigError("model: num_levels must be >= 1");
        if (static_cast<int>(channels_per_level.size()) != num_levels)
            throw ConfigError("model: channels_per_level must have num_levels entries");
        for (int c : channels_per_level)
            if (c <= 0) throw ConfigError("model: channel counts must be positive");
        if (head_channels <= 0) throw ConfigError("model: head_channels must be positive");
        if (lambda_weight < 0.0) throw ConfigError("model: lambda_weight must be >= 0");
        if (!head_to_level.empty()) {
            if (static_cast<int>(head_to_level.size()) != num_levels)
                throw ConfigError("model: head_to_level must have num_levels entries");
            for (int l : head_to_level)
                if (l < 0 || l >= num_levels)
                    throw ConfigError("model: head_to_level index out of range");
        }
    }

    int level_for_head(int head) const {
        if (!head_to_level.empty()) return head_to_level[static_cast<size_t>(head)];
        return num_levels - 1 - head;
    }

    // Inputs must be spatially divisible by this.
    int spatial_divisor() const { return 4 << (num_levels - 1); }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace hdnet
