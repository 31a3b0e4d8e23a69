#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hdnet/tensor.hpp"

namespace hdnet::ag {

// Reverse-mode tape node. Graphs are built per forward pass and freed when
// the last Var handle goes out of scope; parameters are long-lived leaves.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = true;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into parents' grads.
    std::function<void(Node&)> backward_fn;

    explicit Node(Tensor v, bool req = true)
        : value(std::move(v)), requires_grad(req) {
        if (requires_grad) grad = Tensor(value.shape());
    }

    void zero_grad() { grad.fill(0.0); }
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor value);            // trainable leaf (requires grad)
Var constant(Tensor value);        // no gradient tracking

// Seeds `root` with grad 1 (scalar) and runs reverse topological sweep.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var mul_scalar(const Var& x, double s);
Var relu(const Var& x);

// x: (C,H,W), w: (C). Multiplies channel c of x by w[c].
Var scale_channels(const Var& x, const Var& w);

// x: (Cin,H,W), weight: (Cout,Cin,kh,kw) flattened as (Cout, Cin*kh*kw),
// bias: (Cout). Zero padding `pad`, stride `stride`.
Var conv2d(const Var& x, const Var& weight, const Var& bias,
           int kernel, int stride, int pad);

// Factor-2 bilinear upsampling (half-pixel centers); constant-preserving.
Var upsample_bilinear_x2(const Var& x);

Var concat_channels(const std::vector<Var>& xs);

// Channels [begin, begin+count) of a (C,H,W) tensor.
Var slice_channels(const Var& x, int begin, int count);

// Channel-wise softmax over dim 0 of (C,H,W), max-subtracted.
Var softmax_channels(const Var& logits);

// Mean over locations of -log softmax(logits)[label]; labels: (H,W) grid of
// integer class ids in [0, C).
Var cross_entropy_mean(const Var& logits, const Tensor& labels);

// Mean squared error against a fixed target of the same shape.
Var mse_mean(const Var& pred, const Tensor& target);

Var sum_all(const Var& x);  // -> scalar shape (1)

// Cuts gradient flow: value shared, no parents.
Var detach(const Var& x);

// Argmax one-hot over channels of a (C,H,W) tensor (plain Tensor op).
Tensor onehot_argmax_channels(const Tensor& probs);

}  // namespace hdnet::ag
