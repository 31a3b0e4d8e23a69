#include "hdnet/ddm.hpp"

#include <cmath>
#include <numeric>

#include "hdnet/errors.hpp"

namespace hdnet {

namespace {

int sum_channels(const ModelConfig& c) {
    return std::accumulate(c.channels_per_level.begin(), c.channels_per_level.end(), 0);
}

}  // namespace

DDM::DDM(const ModelConfig& config, std::mt19937& rng)
    : config_(config),
      block3x3_(sum_channels(config), config.head_channels, 3, 1, rng),
      conv1x1_(config.head_channels, config.num_levels + 1, 1, 1, 0, rng) {}

ag::Var DDM::build_decoupling_input(const FeaturePyramid& pyramid) {
    std::vector<ag::Var> upsampled;
    upsampled.reserve(pyramid.size());
    const int H = pyramid[0]->value.dim(1), W = pyramid[0]->value.dim(2);
    for (size_t i = 0; i < pyramid.size(); ++i) {
        ag::Var x = pyramid[i];
        while (x->value.dim(1) < H || x->value.dim(2) < W)
            x = ag::upsample_bilinear_x2(x);
        if (x->value.dim(1) != H || x->value.dim(2) != W)
            throw ValidationError("ddm: pyramid level not reachable by factor-2 upsampling");
        upsampled.push_back(x);
    }
    return pyramid.size() == 1 ? upsampled[0] : ag::concat_channels(upsampled);
}

ag::Var DDM::decoupling_head(const ag::Var& x_dec, bool training) {
    return conv1x1_.forward(block3x3_.forward(x_dec, training));
}

void DDM::collect_params(const std::string& prefix, std::vector<nn::Param>& out) {
    block3x3_.collect_params(prefix + ".block", out);
    conv1x1_.collect_params(prefix + ".out", out);
}

void DDM::collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) {
    block3x3_.collect_buffers(prefix + ".block", out);
}

ag::Var soft_masks(const ag::Var& logits) {
    for (size_t i = 0; i < logits->value.size(); ++i)
        if (!std::isfinite(logits->value[i]))
            throw ValidationError("soft_masks: non-finite logit");
    return ag::softmax_channels(logits);
}

ag::Var decoupling_loss(const ag::Var& logits, const gt::LevelMaskGT& gt) {
    const int C = logits->value.dim(0);
    for (size_t i = 0; i < gt.labels.size(); ++i) {
        const double l = gt.labels[i];
        if (l < 0.0 || l >= static_cast<double>(C) || l != std::floor(l))
            throw ValidationError("decoupling_loss: label outside 0..n");
    }
    return ag::cross_entropy_mean(logits, gt.labels);
}

}  // namespace hdnet
