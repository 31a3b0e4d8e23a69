#pragma once

#include <memory>
#include <random>
#include <vector>

#include "hdnet/backbone.hpp"

namespace hdnet {

// Scale Adaptive Feature Fusion:
//   Xhat_i = X_i + sum_{k != i} P_{i,k}( w_{i,k} * F_{i,k}(X_k) )
// F_{i,k} resamples level k to level i's spatial size and keeps C_k channels;
// w_{i,k} is a learnable per-channel vector (zero-init, so fusion starts as an
// exact identity); P_{i,k} is a 1x1 projection to C_i channels, identity-init
// when C_k == C_i.
class SAFF : public nn::Module {
public:
    SAFF(const ModelConfig& config, std::mt19937& rng);

    std::vector<ag::Var> fuse(const FeaturePyramid& pyramid, bool training);

    // Resample level `source` to level `target`'s spatial size (F_{i,k}).
    ag::Var resample(const ag::Var& source, int source_level, int target_level,
                     bool training);

    void collect_params(const std::string& prefix, std::vector<nn::Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) override;

    ag::Var& weight(int target_level, int source_level);

private:
    struct Path {
        int target = 0, source = 0;
        std::vector<std::unique_ptr<nn::ConvBlock>> stages;  // one per factor-2 step
        ag::Var w;                                           // length C_source
        std::unique_ptr<nn::Conv2d> projection;              // C_source -> C_target
    };

    Path& path(int target_level, int source_level);

    ModelConfig config_;
    std::vector<Path> paths_;  // all ordered pairs (i, k), i != k
};

}  // namespace hdnet
