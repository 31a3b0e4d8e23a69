#pragma once

#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "hdnet/config.hpp"
#include "hdnet/nn.hpp"

namespace hdnet {

// Multi-resolution pyramid {X_i}: level i (0-based) lives at
// (H / (4 * 2^i), W / (4 * 2^i)) with channels_per_level[i] channels.
using FeaturePyramid = std::vector<ag::Var>;

// Small HRNet stand-in: a two-stride-2-conv stem down to H/4 followed by
// per-level branches with stride-2 transitions between them.
class Backbone : public nn::Module {
public:
    Backbone(const ModelConfig& config, std::mt19937& rng);

    // image: rank-2 (H, W) grid, H and W divisible by config.spatial_divisor().
    FeaturePyramid forward(const Tensor& image, bool training);
    FeaturePyramid forward(const ag::Var& image, bool training);

    void collect_params(const std::string& prefix, std::vector<nn::Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) override;

private:
    ModelConfig config_;
    nn::ConvBlock stem1_, stem2_;
    std::vector<std::unique_ptr<nn::ConvBlock>> transitions_;  // level i-1 -> i
    std::vector<std::unique_ptr<nn::ConvBlock>> branch_a_, branch_b_;
};

// Two independently initialized backbones with identical architecture, for
// the split-backbone (no feature interaction) ablation.
std::pair<std::unique_ptr<Backbone>, std::unique_ptr<Backbone>>
clone_unshared(const ModelConfig& config, std::mt19937& rng);

}  // namespace hdnet
