#pragma once

#include <random>
#include <string>
#include <vector>

#include "hdnet/autograd.hpp"

namespace hdnet::nn {

struct Param {
    std::string path;
    ag::Var var;
};

// Non-trainable state (batch-norm running stats) that still belongs in a
// checkpoint.
struct Buffer {
    std::string path;
    Tensor* tensor;
};

class Module {
public:
    virtual ~Module() = default;
    virtual void collect_params(const std::string& prefix, std::vector<Param>& out) = 0;
    virtual void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {}
};

class Conv2d : public Module {
public:
    // Kaiming fan-in init for the kernel, zero bias.
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::mt19937& rng);

    ag::Var forward(const ag::Var& x) const;

    void collect_params(const std::string& prefix, std::vector<Param>& out) override;

    // Sets the kernel to a per-channel identity (center tap 1) and zero bias;
    // requires in_ch == out_ch and stride 1.
    void set_identity();

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    ag::Var weight, bias;

private:
    int in_ch_, out_ch_, kernel_, stride_, pad_;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(int channels);

    // training=true uses batch statistics and updates the running estimates;
    // training=false normalizes with the frozen running statistics.
    ag::Var forward(const ag::Var& x, bool training);

    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;

    ag::Var gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

private:
    int channels_;
};

// conv -> batch norm -> ReLU
class ConvBlock : public Module {
public:
    ConvBlock(int in_ch, int out_ch, int kernel, int stride, std::mt19937& rng);

    ag::Var forward(const ag::Var& x, bool training);

    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;

    Conv2d conv;
    BatchNorm2d bn;
};

class SGD {
public:
    SGD(std::vector<Param> params, double lr, double momentum, double weight_decay);

    void zero_grad();
    void step();

    double lr;
    double momentum;
    double weight_decay;

private:
    std::vector<Param> params_;
    std::vector<Tensor> velocity_;
};

size_t count_parameters(const std::vector<Param>& params);

}  // namespace hdnet::nn
