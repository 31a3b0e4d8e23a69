#pragma once

#include <memory>
#include <random>
#include <vector>

#include "hdnet/backbone.hpp"
#include "hdnet/ddm.hpp"
#include "hdnet/fdem.hpp"
#include "hdnet/saff.hpp"

namespace hdnet {

struct ForwardResult {
    FeaturePyramid pyramid;            // {X_i} (regression-branch backbone)
    std::vector<ag::Var> fused;        // {Xhat_i}
    ag::Var logits;                    // (n+1, H/4, W/4)
    ag::Var masks;                     // soft masks Mhat
    std::vector<ag::Var> head_maps;    // {D_i}
    ag::Var final_density;             // D_tilde at (H/4, W/4)

    double predicted_count() const { return final_density->value.sum(); }
};

class HDNet {
public:
    HDNet(const ModelConfig& config, uint64_t seed);

    ForwardResult forward(const Tensor& image, bool training);

    std::vector<nn::Param> parameters();
    std::vector<nn::Buffer> buffers();
    // The decoupling-head parameters only (gradient interaction probe).
    std::vector<nn::Param> ddm_parameters();

    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<Backbone> backbone_dec_;  // only when shared_backbone=false
    std::unique_ptr<SAFF> saff_;              // only when use_saff
    std::unique_ptr<DDM> ddm_;
    std::unique_ptr<FDEM> fdem_;
};

}  // namespace hdnet
