#include "hdnet/backbone.hpp"

#include "hdnet/errors.hpp"

namespace hdnet {

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"num_levels", c.num_levels},
                       {"channels_per_level", c.channels_per_level},
                       {"head_channels", c.head_channels},
                       {"shared_backbone", c.shared_backbone},
                       {"use_saff", c.use_saff},
                       {"freeze_saff_w", c.freeze_saff_w},
                       {"use_soft_masks", c.use_soft_masks},
                       {"lambda_weight", c.lambda_weight},
                       {"head_to_level", c.head_to_level}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.num_levels = j.value("num_levels", 3);
    c.channels_per_level = j.value("channels_per_level", std::vector<int>{16, 32, 64});
    c.head_channels = j.value("head_channels", 32);
    c.shared_backbone = j.value("shared_backbone", true);
    c.use_saff = j.value("use_saff", true);
    c.freeze_saff_w = j.value("freeze_saff_w", false);
    c.use_soft_masks = j.value("use_soft_masks", true);
    c.lambda_weight = j.value("lambda_weight", 1.0);
    c.head_to_level = j.value("head_to_level", std::vector<int>{});
    c.validate();
}

Backbone::Backbone(const ModelConfig& config, std::mt19937& rng)
    : config_(config),
      stem1_(1, config.channels_per_level[0], 3, 2, rng),
      stem2_(config.channels_per_level[0], config.channels_per_level[0], 3, 2, rng) {
    config_.validate();
    const auto& ch = config_.channels_per_level;
    for (int i = 0; i < config_.num_levels; ++i) {
        if (i > 0)
            transitions_.push_back(
                std::make_unique<nn::ConvBlock>(ch[i - 1], ch[i], 3, 2, rng));
        branch_a_.push_back(std::make_unique<nn::ConvBlock>(ch[i], ch[i], 3, 1, rng));
        branch_b_.push_back(std::make_unique<nn::ConvBlock>(ch[i], ch[i], 3, 1, rng));
    }
}

FeaturePyramid Backbone::forward(const Tensor& image, bool training) {
    if (image.ndim() != 2) throw ValidationError("backbone: image must be rank-2");
    const int div = config_.spatial_divisor();
    if (image.dim(0) % div != 0 || image.dim(1) % div != 0)
        throw ValidationError("backbone: image size must be divisible by " +
                              std::to_string(div) + " (padding contract violation)");
    Tensor chw({1, image.dim(0), image.dim(1)});
    std::copy(image.data(), image.data() + image.size(), chw.data());
    return forward(ag::constant(std::move(chw)), training);
}

FeaturePyramid Backbone::forward(const ag::Var& image, bool training) {
    ag::Var trunk = stem2_.forward(stem1_.forward(image, training), training);
    FeaturePyramid levels;
    for (int i = 0; i < config_.num_levels; ++i) {
        if (i > 0) trunk = transitions_[i - 1]->forward(trunk, training);
        levels.push_back(
            branch_b_[i]->forward(branch_a_[i]->forward(trunk, training), training));
    }
    return levels;
}

void Backbone::collect_params(const std::string& prefix, std::vector<nn::Param>& out) {
    stem1_.collect_params(prefix + ".stem1", out);
    stem2_.collect_params(prefix + ".stem2", out);
    for (size_t i = 0; i < transitions_.size(); ++i)
        transitions_[i]->collect_params(prefix + ".transition" + std::to_string(i + 1), out);
    for (size_t i = 0; i < branch_a_.size(); ++i) {
        branch_a_[i]->collect_params(prefix + ".branch" + std::to_string(i) + ".0", out);
        branch_b_[i]->collect_params(prefix + ".branch" + std::to_string(i) + ".1", out);
    }
}

void Backbone::collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) {
    stem1_.collect_buffers(prefix + ".stem1", out);
    stem2_.collect_buffers(prefix + ".stem2", out);
    for (size_t i = 0; i < transitions_.size(); ++i)
        transitions_[i]->collect_buffers(prefix + ".transition" + std::to_string(i + 1), out);
    for (size_t i = 0; i < branch_a_.size(); ++i) {
        branch_a_[i]->collect_buffers(prefix + ".branch" + std::to_string(i) + ".0", out);
        branch_b_[i]->collect_buffers(prefix + ".branch" + std::to_string(i) + ".1", out);
    }
}

std::pair<std::unique_ptr<Backbone>, std::unique_ptr<Backbone>>
clone_unshared(const ModelConfig& config, std::mt19937& rng) {
    auto a = std::make_unique<Backbone>(config, rng);
    auto b = std::make_unique<Backbone>(config, rng);
    return {std::move(a), std::move(b)};
}

}  // namespace hdnet
