#pragma once

#include <memory>
#include <random>
#include <vector>

#include "hdnet/backbone.hpp"

namespace hdnet {

// Foreground Density Estimation Module: n expert heads, one per density
// level, each a 3x3 conv block + 1x1 conv + ReLU producing a nonnegative
// single-channel map that is bilinearly upsampled to (H/4, W/4).
class FDEM : public nn::Module {
public:
    FDEM(const ModelConfig& config, std::mt19937& rng);

    // fused[l] is the (possibly SAFF-fused) pyramid level l; head i reads
    // fused[config.level_for_head(i)].
    std::vector<ag::Var> forward(const std::vector<ag::Var>& fused, bool training);

    void collect_params(const std::string& prefix, std::vector<nn::Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) override;

private:
    ModelConfig config_;
    std::vector<std::unique_ptr<nn::ConvBlock>> blocks_;
    std::vector<std::unique_ptr<nn::Conv2d>> outs_;
};

// Eq. 3: D_tilde = sum_{i=1..n} D_i (Hadamard) Mhat_i. `masks` carries n+1
// channels, channel 0 (background) never enters the sum. With
// use_soft_masks=false the soft masks are replaced by detached argmax one-hot
// masks, severing gradient flow into the decoupling branch.
ag::Var fuse_density(const std::vector<ag::Var>& heads, const ag::Var& masks,
                     bool use_soft_masks);

}  // namespace hdnet
