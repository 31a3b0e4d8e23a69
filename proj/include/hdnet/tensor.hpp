#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace hdnet {

// Dense row-major double tensor, rank 1..3. Rank-3 tensors are (C, H, W).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)),
          data_(numel(shape_), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& operator()(int i) { return data_[static_cast<size_t>(i)]; }
    double operator()(int i) const { return data_[static_cast<size_t>(i)]; }

    double& operator()(int h, int w) {
        assert(ndim() == 2);
        return data_[static_cast<size_t>(h) * shape_[1] + w];
    }
    double operator()(int h, int w) const {
        assert(ndim() == 2);
        return data_[static_cast<size_t>(h) * shape_[1] + w];
    }

    double& operator()(int c, int h, int w) {
        assert(ndim() == 3);
        return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    double operator()(int c, int h, int w) const {
        assert(ndim() == 3);
        return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }

    double sum() const {
        return std::accumulate(data_.begin(), data_.end(), 0.0);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static size_t numel(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace hdnet
