#include "hdnet/model.hpp"

#include "hdnet/errors.hpp"

namespace hdnet {

HDNet::HDNet(const ModelConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937 rng(static_cast<uint32_t>(seed * 0x51D5B48Bull + 0x165667B1ull));
    backbone_ = std::make_unique<Backbone>(config_, rng);
    if (!config_.shared_backbone) backbone_dec_ = std::make_unique<Backbone>(config_, rng);
    if (config_.use_saff) saff_ = std::make_unique<SAFF>(config_, rng);
    ddm_ = std::make_unique<DDM>(config_, rng);
    fdem_ = std::make_unique<FDEM>(config_, rng);
}

ForwardResult HDNet::forward(const Tensor& image, bool training) {
    ForwardResult r;
    r.pyramid = backbone_->forward(image, training);
    FeaturePyramid dec_pyramid =
        backbone_dec_ ? backbone_dec_->forward(image, training) : r.pyramid;

    r.fused = saff_ ? saff_->fuse(r.pyramid, training) : r.pyramid;

    ag::Var x_dec = DDM::build_decoupling_input(dec_pyramid);
    r.logits = ddm_->decoupling_head(x_dec, training);
    r.masks = soft_masks(r.logits);

    r.head_maps = fdem_->forward(r.fused, training);
    r.final_density = fuse_density(r.head_maps, r.masks, config_.use_soft_masks);
    return r;
}

std::vector<nn::Param> HDNet::parameters() {
    std::vector<nn::Param> out;
    backbone_->collect_params("backbone", out);
    if (backbone_dec_) backbone_dec_->collect_params("backbone_dec", out);
    if (saff_) saff_->collect_params("saff", out);
    ddm_->collect_params("ddm", out);
    fdem_->collect_params("fdem", out);
    return out;
}

std::vector<nn::Buffer> HDNet::buffers() {
    std::vector<nn::Buffer> out;
    backbone_->collect_buffers("backbone", out);
    if (backbone_dec_) backbone_dec_->collect_buffers("backbone_dec", out);
    if (saff_) saff_->collect_buffers("saff", out);
    ddm_->collect_buffers("ddm", out);
    fdem_->collect_buffers("fdem", out);
    return out;
}

std::vector<nn::Param> HDNet::ddm_parameters() {
    std::vector<nn::Param> out;
    ddm_->collect_params("ddm", out);
    return out;
}

}  // namespace hdnet
