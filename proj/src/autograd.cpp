#include "hdnet/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace hdnet::ag {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Var leaf(Tensor value) { return std::make_shared<Node>(std::move(value), true); }

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false); }

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    if (!n->requires_grad || seen.count(n)) return;
    seen.insert(n);
    for (auto& p : n->parents) topo_visit(p.get(), seen, order);
    order.push_back(n);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    bool any_grad = false;
    for (auto& p : parents)
        if (p->requires_grad) any_grad = true;
    auto node = std::make_shared<Node>(std::move(value), any_grad);
    if (any_grad) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(back);
    }
    return node;
}

}  // namespace

void backward(const Var& root) {
    if (!root->requires_grad)
        throw std::logic_error("backward() on a non-differentiable node");
    std::unordered_set<Node*> seen;
    std::vector<Node*> order;
    topo_visit(root.get(), seen, order);
    for (Node* n : order)
        if (n != root.get()) n->zero_grad();
    root->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("add: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            Node* p = n.parents[s].get();
            if (!p->requires_grad) continue;
            for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

Var hadamard(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("hadamard: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* a = n.parents[0].get();
        Node* b = n.parents[1].get();
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i)
                a->grad[i] += n.grad[i] * b->value[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i)
                b->grad[i] += n.grad[i] * a->value[i];
    });
}

Var mul_scalar(const Var& x, double s) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * s;
    return make_op(std::move(out), {x}, [s](Node& n) {
        Node* p = n.parents[0].get();
        for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * s;
    });
}

Var relu(const Var& x) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x->value[i]);
    return make_op(std::move(out), {x}, [](Node& n) {
        Node* p = n.parents[0].get();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (p->value[i] > 0.0) p->grad[i] += n.grad[i];
    });
}

Var scale_channels(const Var& x, const Var& w) {
    if (x->value.ndim() != 3 || w->value.ndim() != 1 ||
        w->value.dim(0) != x->value.dim(0))
        throw std::invalid_argument("scale_channels: w length must equal channel count");
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c) {
        const double wc = w->value(c);
        for (int h = 0; h < H; ++h)
            for (int ww = 0; ww < W; ++ww) out(c, h, ww) = x->value(c, h, ww) * wc;
    }
    return make_op(std::move(out), {x, w}, [C, H, W](Node& n) {
        Node* x = n.parents[0].get();
        Node* w = n.parents[1].get();
        for (int c = 0; c < C; ++c) {
            const double wc = w->value(c);
            double gw = 0.0;
            for (int h = 0; h < H; ++h)
                for (int ww = 0; ww < W; ++ww) {
                    const double g = n.grad(c, h, ww);
                    if (x->requires_grad) x->grad(c, h, ww) += g * wc;
                    gw += g * x->value(c, h, ww);
                }
            if (w->requires_grad) w->grad(c) += gw;
        }
    });
}

namespace {

struct ConvDims {
    int cin, hin, win, cout, k, stride, pad, hout, wout;
};

void im2col(const Tensor& x, const ConvDims& d, MatRM& col) {
    col.setZero(d.cin * d.k * d.k, d.hout * d.wout);
    for (int c = 0; c < d.cin; ++c)
        for (int ky = 0; ky < d.k; ++ky)
            for (int kx = 0; kx < d.k; ++kx) {
                const int row = (c * d.k + ky) * d.k + kx;
                for (int oy = 0; oy < d.hout; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.hin) continue;
                    for (int ox = 0; ox < d.wout; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (ix < 0 || ix >= d.win) continue;
                        col(row, oy * d.wout + ox) = x(c, iy, ix);
                    }
                }
            }
}

void col2im_accum(const MatRM& col, const ConvDims& d, Tensor& gx) {
    for (int c = 0; c < d.cin; ++c)
        for (int ky = 0; ky < d.k; ++ky)
            for (int kx = 0; kx < d.k; ++kx) {
                const int row = (c * d.k + ky) * d.k + kx;
                for (int oy = 0; oy < d.hout; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.hin) continue;
                    for (int ox = 0; ox < d.wout; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (ix < 0 || ix >= d.win) continue;
                        gx(c, iy, ix) += col(row, oy * d.wout + ox);
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           int kernel, int stride, int pad) {
    if (x->value.ndim() != 3) throw std::invalid_argument("conv2d: input must be (C,H,W)");
    ConvDims d;
    d.cin = x->value.dim(0);
    d.hin = x->value.dim(1);
    d.win = x->value.dim(2);
    d.k = kernel;
    d.stride = stride;
    d.pad = pad;
    d.cout = weight->value.dim(0);
    if (weight->value.ndim() != 2 || weight->value.dim(1) != d.cin * d.k * d.k)
        throw std::invalid_argument("conv2d: weight must be (Cout, Cin*k*k)");
    d.hout = (d.hin + 2 * pad - kernel) / stride + 1;
    d.wout = (d.win + 2 * pad - kernel) / stride + 1;

    auto col = std::make_shared<MatRM>();
    im2col(x->value, d, *col);

    Tensor out({d.cout, d.hout, d.wout});
    {
        CMapRM wmat(weight->value.data(), d.cout, d.cin * d.k * d.k);
        MapRM omat(out.data(), d.cout, d.hout * d.wout);
        omat.noalias() = wmat * (*col);
        for (int c = 0; c < d.cout; ++c)
            omat.row(c).array() += bias->value(c);
    }

    return make_op(std::move(out), {x, weight, bias}, [d, col](Node& n) {
        Node* x = n.parents[0].get();
        Node* w = n.parents[1].get();
        Node* b = n.parents[2].get();
        CMapRM gout(n.grad.data(), d.cout, d.hout * d.wout);
        if (b->requires_grad)
            for (int c = 0; c < d.cout; ++c) b->grad(c) += gout.row(c).sum();
        if (w->requires_grad) {
            MapRM gw(w->grad.data(), d.cout, d.cin * d.k * d.k);
            gw.noalias() += gout * col->transpose();
        }
        if (x->requires_grad) {
            CMapRM wmat(w->value.data(), d.cout, d.cin * d.k * d.k);
            MatRM gcol = wmat.transpose() * gout;
            col2im_accum(gcol, d, x->grad);
        }
    });
}

namespace {

// Half-pixel-center source coordinate for factor-2 upsampling.
inline void up2_coeffs(int o, int in_size, int& i0, int& i1, double& a1) {
    const double src = (o + 0.5) / 2.0 - 0.5;
    double f = std::floor(src);
    i0 = static_cast<int>(f);
    a1 = src - f;
    i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; i1 = 0; a1 = 0.0; }
    if (i1 >= in_size) { i1 = in_size - 1; if (i0 > i1) i0 = i1; a1 = i0 == i1 ? 0.0 : a1; }
}

}  // namespace

Var upsample_bilinear_x2(const Var& x) {
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Ho = H * 2, Wo = W * 2;
    Tensor out({C, Ho, Wo});
    for (int oy = 0; oy < Ho; ++oy) {
        int y0, y1;
        double ay;
        up2_coeffs(oy, H, y0, y1, ay);
        for (int ox = 0; ox < Wo; ++ox) {
            int x0, x1;
            double ax;
            up2_coeffs(ox, W, x0, x1, ax);
            for (int c = 0; c < C; ++c) {
                out(c, oy, ox) = (1 - ay) * ((1 - ax) * x->value(c, y0, x0) + ax * x->value(c, y0, x1)) +
                                 ay * ((1 - ax) * x->value(c, y1, x0) + ax * x->value(c, y1, x1));
            }
        }
    }
    return make_op(std::move(out), {x}, [C, H, W, Ho, Wo](Node& n) {
        Node* p = n.parents[0].get();
        for (int oy = 0; oy < Ho; ++oy) {
            int y0, y1;
            double ay;
            up2_coeffs(oy, H, y0, y1, ay);
            for (int ox = 0; ox < Wo; ++ox) {
                int x0, x1;
                double ax;
                up2_coeffs(ox, W, x0, x1, ax);
                for (int c = 0; c < C; ++c) {
                    const double g = n.grad(c, oy, ox);
                    p->grad(c, y0, x0) += g * (1 - ay) * (1 - ax);
                    p->grad(c, y0, x1) += g * (1 - ay) * ax;
                    p->grad(c, y1, x0) += g * ay * (1 - ax);
                    p->grad(c, y1, x1) += g * ay * ax;
                }
            }
        }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    const int H = xs[0]->value.dim(1), W = xs[0]->value.dim(2);
    int C = 0;
    for (auto& x : xs) {
        if (x->value.dim(1) != H || x->value.dim(2) != W)
            throw std::invalid_argument("concat_channels: spatial mismatch");
        C += x->value.dim(0);
    }
    Tensor out({C, H, W});
    int off = 0;
    for (auto& x : xs) {
        const int ci = x->value.dim(0);
        std::copy(x->value.data(), x->value.data() + x->value.size(),
                  out.data() + static_cast<size_t>(off) * H * W);
        off += ci;
    }
    return make_op(std::move(out), xs, [H, W](Node& n) {
        size_t off = 0;
        for (auto& pv : n.parents) {
            Node* p = pv.get();
            const size_t cnt = p->value.size();
            if (p->requires_grad)
                for (size_t i = 0; i < cnt; ++i) p->grad[i] += n.grad[off + i];
            off += cnt;
        }
    });
}

Var slice_channels(const Var& x, int begin, int count) {
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    if (begin < 0 || count <= 0 || begin + count > C)
        throw std::invalid_argument("slice_channels: range out of bounds");
    Tensor out({count, H, W});
    const size_t plane = static_cast<size_t>(H) * W;
    std::copy(x->value.data() + begin * plane,
              x->value.data() + (begin + count) * plane, out.data());
    return make_op(std::move(out), {x}, [begin, plane](Node& n) {
        Node* p = n.parents[0].get();
        const size_t off = static_cast<size_t>(begin) * plane;
        for (size_t i = 0; i < n.grad.size(); ++i) p->grad[off + i] += n.grad[i];
    });
}

Var softmax_channels(const Var& logits) {
    const int C = logits->value.dim(0), H = logits->value.dim(1), W = logits->value.dim(2);
    Tensor out({C, H, W});
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double mx = logits->value(0, h, w);
            for (int c = 1; c < C; ++c) mx = std::max(mx, logits->value(c, h, w));
            double z = 0.0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(logits->value(c, h, w) - mx);
                out(c, h, w) = e;
                z += e;
            }
            for (int c = 0; c < C; ++c) out(c, h, w) /= z;
        }
    auto probs = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {logits}, [C, H, W, probs](Node& n) {
        Node* p = n.parents[0].get();
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += n.grad(c, h, w) * (*probs)(c, h, w);
                for (int c = 0; c < C; ++c)
                    p->grad(c, h, w) += (*probs)(c, h, w) * (n.grad(c, h, w) - dot);
            }
    });
}

Var cross_entropy_mean(const Var& logits, const Tensor& labels) {
    const int C = logits->value.dim(0), H = logits->value.dim(1), W = logits->value.dim(2);
    if (labels.ndim() != 2 || labels.dim(0) != H || labels.dim(1) != W)
        throw std::invalid_argument("cross_entropy_mean: label grid mismatch");
    // softmax probabilities are reused in the backward pass
    auto probs = std::make_shared<Tensor>(std::vector<int>{C, H, W});
    double loss = 0.0;
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            const int lbl = static_cast<int>(labels(h, w));
            if (lbl < 0 || lbl >= C)
                throw std::invalid_argument("cross_entropy_mean: label out of range");
            double mx = logits->value(0, h, w);
            for (int c = 1; c < C; ++c) mx = std::max(mx, logits->value(c, h, w));
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(logits->value(c, h, w) - mx);
            const double logz = std::log(z) + mx;
            loss += logz - logits->value(lbl, h, w);
            for (int c = 0; c < C; ++c)
                (*probs)(c, h, w) = std::exp(logits->value(c, h, w) - logz);
        }
    const double inv_n = 1.0 / (static_cast<double>(H) * W);
    Tensor out({1});
    out(0) = loss * inv_n;
    auto lbl_copy = std::make_shared<Tensor>(labels);
    return make_op(std::move(out), {logits}, [C, H, W, probs, lbl_copy, inv_n](Node& n) {
        Node* p = n.parents[0].get();
        const double g = n.grad(0) * inv_n;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const int lbl = static_cast<int>((*lbl_copy)(h, w));
                for (int c = 0; c < C; ++c) {
                    const double onehot = (c == lbl) ? 1.0 : 0.0;
                    p->grad(c, h, w) += g * ((*probs)(c, h, w) - onehot);
                }
            }
    });
}

Var mse_mean(const Var& pred, const Tensor& target) {
    if (!pred->value.same_shape(target))
        throw std::invalid_argument("mse_mean: shape mismatch");
    const size_t n = pred->value.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = pred->value[i] - target[i];
        acc += d * d;
    }
    Tensor out({1});
    out(0) = acc / static_cast<double>(n);
    auto tgt = std::make_shared<Tensor>(target);
    return make_op(std::move(out), {pred}, [tgt, n](Node& nd) {
        Node* p = nd.parents[0].get();
        const double g = nd.grad(0) * 2.0 / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
            p->grad[i] += g * (p->value[i] - (*tgt)[i]);
    });
}

Var sum_all(const Var& x) {
    Tensor out({1});
    out(0) = x->value.sum();
    return make_op(std::move(out), {x}, [](Node& n) {
        Node* p = n.parents[0].get();
        const double g = n.grad(0);
        for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    });
}

Var detach(const Var& x) { return constant(x->value); }

Tensor onehot_argmax_channels(const Tensor& probs) {
    const int C = probs.dim(0), H = probs.dim(1), W = probs.dim(2);
    Tensor out({C, H, W});
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (probs(c, h, w) > probs(best, h, w)) best = c;
            out(best, h, w) = 1.0;
        }
    return out;
}

}  // namespace hdnet::ag
