#pragma once

#include <memory>
#include <random>

#include "hdnet/backbone.hpp"
#include "hdnet/gt_pipeline.hpp"

namespace hdnet {

// Density Decoupling Module: upsample-and-concat the pyramid into X_dec,
// predict (n+1)-way per-pixel logits (channel 0 = background), softmax them
// into soft masks, and supervise with cross-entropy against LevelMaskGT.
class DDM : public nn::Module {
public:
    DDM(const ModelConfig& config, std::mt19937& rng);

    // Every level bilinearly upsampled to (H/4, W/4), concatenated along
    // channels (sum C_i channels total).
    static ag::Var build_decoupling_input(const FeaturePyramid& pyramid);

    // 3x3 conv block + activation-free 1x1 conv -> (n+1, H/4, W/4) logits.
    ag::Var decoupling_head(const ag::Var& x_dec, bool training);

    void collect_params(const std::string& prefix, std::vector<nn::Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) override;

private:
    ModelConfig config_;
    nn::ConvBlock block3x3_;
    nn::Conv2d conv1x1_;
};

// Eq-style channel softmax; validates against non-finite logits.
ag::Var soft_masks(const ag::Var& logits);

// Mean over locations of -log softmax(logits)[label].
ag::Var decoupling_loss(const ag::Var& logits, const gt::LevelMaskGT& gt);

}  // namespace hdnet
