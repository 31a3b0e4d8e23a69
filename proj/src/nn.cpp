#include "hdnet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hdnet::nn {

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::mt19937& rng)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
    const int fan_in = in_ch * kernel * kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    Tensor w({out_ch, fan_in});
    for (size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
    weight = ag::leaf(std::move(w));
    bias = ag::leaf(Tensor({out_ch}));
}

ag::Var Conv2d::forward(const ag::Var& x) const {
    return ag::conv2d(x, weight, bias, kernel_, stride_, pad_);
}

void Conv2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

void Conv2d::set_identity() {
    if (in_ch_ != out_ch_ || stride_ != 1)
        throw std::logic_error("set_identity: requires square stride-1 conv");
    weight->value.fill(0.0);
    const int center = (kernel_ * kernel_) / 2;
    for (int c = 0; c < out_ch_; ++c)
        weight->value(c, c * kernel_ * kernel_ + center) = 1.0;
    bias->value.fill(0.0);
}

BatchNorm2d::BatchNorm2d(int channels) : channels_(channels) {
    gamma = ag::leaf(Tensor({channels}, 1.0));
    beta = ag::leaf(Tensor({channels}));
    running_mean = Tensor({channels});
    running_var = Tensor({channels}, 1.0);
}

ag::Var BatchNorm2d::forward(const ag::Var& x, bool training) {
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    if (C != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
    const double m = static_cast<double>(H) * W;

    auto mean = std::make_shared<Tensor>(std::vector<int>{C});
    auto inv_std = std::make_shared<Tensor>(std::vector<int>{C});
    if (training) {
        for (int c = 0; c < C; ++c) {
            double mu = 0.0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) mu += x->value(c, h, w);
            mu /= m;
            double var = 0.0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double d = x->value(c, h, w) - mu;
                    var += d * d;
                }
            var /= m;
            (*mean)(c) = mu;
            (*inv_std)(c) = 1.0 / std::sqrt(var + eps);
            running_mean(c) = (1.0 - momentum) * running_mean(c) + momentum * mu;
            running_var(c) = (1.0 - momentum) * running_var(c) + momentum * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)(c) = running_mean(c);
            (*inv_std)(c) = 1.0 / std::sqrt(running_var(c) + eps);
        }
    }

    // xhat is kept for the backward pass
    auto xhat = std::make_shared<Tensor>(std::vector<int>{C, H, W});
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c) {
        const double mu = (*mean)(c), is = (*inv_std)(c);
        const double g = gamma->value(c), b = beta->value(c);
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const double xh = (x->value(c, h, w) - mu) * is;
                (*xhat)(c, h, w) = xh;
                out(c, h, w) = g * xh + b;
            }
    }

    auto node = std::make_shared<ag::Node>(std::move(out), true);
    node->parents = {x, gamma, beta};
    node->backward_fn = [C, H, W, m, training, xhat, inv_std](ag::Node& n) {
        ag::Node* px = n.parents[0].get();
        ag::Node* pg = n.parents[1].get();
        ag::Node* pb = n.parents[2].get();
        for (int c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double g = n.grad(c, h, w);
                    sum_g += g;
                    sum_gx += g * (*xhat)(c, h, w);
                }
            if (pg->requires_grad) pg->grad(c) += sum_gx;
            if (pb->requires_grad) pb->grad(c) += sum_g;
            if (!px->requires_grad) continue;
            const double gm = pg->value(c), is = (*inv_std)(c);
            if (training) {
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const double g = n.grad(c, h, w);
                        px->grad(c, h, w) += gm * is / m *
                            (m * g - sum_g - (*xhat)(c, h, w) * sum_gx);
                    }
            } else {
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w)
                        px->grad(c, h, w) += n.grad(c, h, w) * gm * is;
            }
        }
    };
    return node;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
}

ConvBlock::ConvBlock(int in_ch, int out_ch, int kernel, int stride, std::mt19937& rng)
    : conv(in_ch, out_ch, kernel, stride, kernel / 2, rng), bn(out_ch) {}

ag::Var ConvBlock::forward(const ag::Var& x, bool training) {
    return ag::relu(bn.forward(conv.forward(x), training));
}

void ConvBlock::collect_params(const std::string& prefix, std::vector<Param>& out) {
    conv.collect_params(prefix + ".conv", out);
    bn.collect_params(prefix + ".bn", out);
}

void ConvBlock::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
    bn.collect_buffers(prefix + ".bn", out);
}

SGD::SGD(std::vector<Param> params, double lr, double momentum, double weight_decay)
    : lr(lr), momentum(momentum), weight_decay(weight_decay), params_(std::move(params)) {
    velocity_.reserve(params_.size());
    for (auto& p : params_) velocity_.emplace_back(p.var->value.shape());
}

void SGD::zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
}

void SGD::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& v = velocity_[i];
        Tensor& p = params_[i].var->value;
        const Tensor& g = params_[i].var->grad;
        for (size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum * v[j] + g[j] + weight_decay * p[j];
            p[j] -= lr * v[j];
        }
    }
}

size_t count_parameters(const std::vector<Param>& params) {
    size_t n = 0;
    for (auto& p : params) n += p.var->value.size();
    return n;
}

}  // namespace hdnet::nn
