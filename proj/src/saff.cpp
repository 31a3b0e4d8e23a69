#include "hdnet/saff.hpp"

#include "hdnet/errors.hpp"

namespace hdnet {

SAFF::SAFF(const ModelConfig& config, std::mt19937& rng) : config_(config) {
    const auto& ch = config_.channels_per_level;
    const int n = config_.num_levels;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            Path p;
            p.target = i;
            p.source = k;
            const int steps = std::abs(k - i);
            for (int s = 0; s < steps; ++s) {
                if (k > i)  // source coarser: 1x1 block, then bilinear x2
                    p.stages.push_back(std::make_unique<nn::ConvBlock>(ch[k], ch[k], 1, 1, rng));
                else  // source finer: 3x3 stride-2 block
                    p.stages.push_back(std::make_unique<nn::ConvBlock>(ch[k], ch[k], 3, 2, rng));
            }
            const double init = config_.freeze_saff_w ? 1.0 : 0.0;
            p.w = ag::leaf(Tensor({ch[k]}, init));
            p.projection = std::make_unique<nn::Conv2d>(ch[k], ch[i], 1, 1, 0, rng);
            if (ch[k] == ch[i]) p.projection->set_identity();
            paths_.push_back(std::move(p));
        }
}

SAFF::Path& SAFF::path(int target_level, int source_level) {
    for (auto& p : paths_)
        if (p.target == target_level && p.source == source_level) return p;
    throw ValidationError("saff: no resample path for i == k (indicator excludes diagonal)");
}

ag::Var& SAFF::weight(int target_level, int source_level) {
    return path(target_level, source_level).w;
}

ag::Var SAFF::resample(const ag::Var& source, int source_level, int target_level,
                       bool training) {
    Path& p = path(target_level, source_level);
    ag::Var x = source;
    for (auto& stage : p.stages) {
        x = stage->forward(x, training);
        if (source_level > target_level) x = ag::upsample_bilinear_x2(x);
    }
    return x;
}

std::vector<ag::Var> SAFF::fuse(const FeaturePyramid& pyramid, bool training) {
    const int n = config_.num_levels;
    if (static_cast<int>(pyramid.size()) != n)
        throw ValidationError("saff: pyramid has wrong number of levels");
    std::vector<ag::Var> fused;
    fused.reserve(pyramid.size());
    for (int i = 0; i < n; ++i) {
        ag::Var acc = pyramid[i];
        for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            Path& p = path(i, k);
            ag::Var term = resample(pyramid[k], k, i, training);
            if (term->value.dim(0) != p.w->value.dim(0))
                throw ConfigError("saff: w length does not match transformed channels");
            term = ag::scale_channels(term, p.w);
            term = p.projection->forward(term);
            acc = ag::add(acc, term);
        }
        fused.push_back(acc);
    }
    return fused;
}

void SAFF::collect_params(const std::string& prefix, std::vector<nn::Param>& out) {
    for (auto& p : paths_) {
        const std::string base = prefix + ".path_" + std::to_string(p.target) + "_" +
                                 std::to_string(p.source);
        for (size_t s = 0; s < p.stages.size(); ++s)
            p.stages[s]->collect_params(base + ".stage" + std::to_string(s), out);
        if (!config_.freeze_saff_w) out.push_back({base + ".w", p.w});
        p.projection->collect_params(base + ".proj", out);
    }
}

void SAFF::collect_buffers(const std::string& prefix, std::vector<nn::Buffer>& out) {
    for (auto& p : paths_) {
        const std::string base = prefix + ".path_" + std::to_string(p.target) + "_" +
                                 std::to_string(p.source);
        for (size_t s = 0; s < p.stages.size(); ++s)
            p.stages[s]->collect_buffers(base + ".stage" + std::to_string(s), out);
    }
}

}  // namespace hdnet
