#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sfac/error.hpp"

namespace sfac {

// Dense rank-1..4 tensor of doubles, row-major. Activations follow the
// channels-first convention C x H x W with H = frequency bins and
// W = time frames; batched activations are N x C x H x W.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " +
                             std::to_string(checked_numel(shape_)));
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    // Uniform(lo, hi) fill, element order = flat order. Deterministic for a
    // given engine state within one build.
    static Tensor uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng) {
        Tensor t(std::move(shape));
        std::uniform_real_distribution<double> dist(lo, hi);
        for (auto& v : t.data_) v = dist(rng);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int a) { return data_[static_cast<size_t>(a)]; }
    double& at(int a, int b) { return data_[static_cast<size_t>(a) * dim(1) + b]; }
    double& at(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
    }
    double& at(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
    }
    double at(int a) const { return data_[static_cast<size_t>(a)]; }
    double at(int a, int b) const { return data_[static_cast<size_t>(a) * dim(1) + b]; }
    double at(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
    }
    double at(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    // Shape as "AxBxC" for diagnostics.
    std::string shape_str() const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    static std::size_t checked_numel(const std::vector<int>& shape) {
        if (shape.empty() || shape.size() > 4) {
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
        }
        std::size_t n = 1;
        for (int e : shape) {
            if (e < 1) throw ShapeError("tensor extents must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

}  // namespace sfac
