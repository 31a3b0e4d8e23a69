#include "hdnet/fdem.hpp"

#include "hdnet/errors.hpp"

namespace hdnet {

FDEM::FDEM(const ModelConfig& config, std::mt19937& rng) : config_(config) {
    for (int i = 0; i < config_.num_levels; ++i) {
        const int ch = config_.channels_per_level[config_.level_for_head(i)];
        blocks_.push_back(std::make_unique<nn::ConvBlock>(ch, config_.head_channels, 3, 1, rng));
        outs_.push_back(std::make_unique<nn::Conv2d>(config_.head_channels, 1, 1, 1, 0, rng));
    }
}

std::vector<ag::Var> FDEM::forward(const std::vector<ag::Var>& fused, bool training) {
    if (static_cast<int>(fused.size()) != config_.num_levels)
        throw ValidationError("fdem: fused pyramid has wrong number of levels");
    const int H = fused[0]->value.dim(1), W = fused[0]->value.dim(2);
    std::vector<ag::Var> maps;
    maps.reserve(blocks_.size());
    for (int i = 0; i < config_.num_levels; ++i) {
        const int level = config_.level_for_head(i);
        ag::Var x = blocks_[i]->forward(fused[level], training);
        x = ag::relu(outs_[i]->forward(x));
        while (x->value.dim(1) < H || x->value.dim(2) < W)
            x = ag::upsample_bilinear_x2(x);
        maps.push_back(x);
    }
    return maps;
}

void FDEM::collect_params(const std::string& prefix, std::vector<nn::Param>& out) {
    for (size_t i = 0; i < blocks_.size(); ++i) {
        blocks_[i]->collect_params(prefix + ".head" + std::to_string(i) + ".block", out);
        outs_[i]->collect_params(prefix + ".head" + std::to_string(i) + ".out", out);
    }
}

void FDEM::collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) {
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i]->collect_buffers(prefix + ".head" + std::to_string(i) + ".block", out);
}

ag::Var fuse_density(const std::vector<ag::Var>& heads, const ag::Var& masks,
                     bool use_soft_masks) {
    if (heads.empty()) throw ValidationError("fuse_density: no density heads");
    const int n = static_cast<int>(heads.size());
    if (masks->value.ndim() != 3 || masks->value.dim(0) != n + 1)
        throw ValidationError("fuse_density: masks must have n+1 channels");
    const int H = heads[0]->value.dim(1), W = heads[0]->value.dim(2);
    if (masks->value.dim(1) != H || masks->value.dim(2) != W)
        throw ValidationError("fuse_density: mask/head spatial mismatch");

    ag::Var gate = masks;
    if (!use_soft_masks)
        gate = ag::constant(ag::onehot_argmax_channels(masks->value));

    ag::Var total;
    for (int i = 0; i < n; ++i) {
        if (heads[i]->value.dim(0) != 1 || heads[i]->value.dim(1) != H ||
            heads[i]->value.dim(2) != W)
            throw ValidationError("fuse_density: head " + std::to_string(i) + " shape mismatch");
        ag::Var term = ag::hadamard(heads[i], ag::slice_channels(gate, i + 1, 1));
        total = total ? ag::add(total, term) : term;
    }
    return total;
}

}  // namespace hdnet
