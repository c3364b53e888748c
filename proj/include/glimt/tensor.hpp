#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "glimt/errors.hpp"

namespace glimt {

/// Dense row-major array of doubles. The single value carrier for images,
/// states, parameters and gradients. Deliberately small: no broadcasting,
/// no views, no GPU.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                   " does not match shape volume " + std::to_string(count(shape_)));
        }
    }

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> shape, double value) {
        std::size_t n = count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value));
    }

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    static Tensor vector(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size()) throw invalid_argument("Tensor::extent: axis out of range");
        return shape_[axis];
    }

    // Rank-2 helpers; most of the model lives on matrices and vectors.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? shape_[0] : 0); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? 1 : 0); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void assert_finite(const std::string& context) const {
        if (!all_finite()) throw numeric_error(context + ": non-finite value encountered");
    }

    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        if (count(new_shape) != data_.size()) {
            throw invalid_argument("Tensor::reshaped: volume mismatch");
        }
        return Tensor(std::move(new_shape), data_);
    }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.shape().size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape()[i]);
    }
    return s + "]";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) +
                               " vs " + shape_string(b));
    }
}

/// Mean/log-variance pair of a diagonal Gaussian. log_variance is expected
/// to be clamped to [logvar_min, logvar_max] by whoever produces it.
struct GaussianParams {
    Tensor mean;
    Tensor log_variance;

    GaussianParams() = default;
    GaussianParams(Tensor m, Tensor lv) : mean(std::move(m)), log_variance(std::move(lv)) {
        require_same_shape(mean, log_variance, "GaussianParams");
    }
};

constexpr double kLogVarMin = -8.0;
constexpr double kLogVarMax = 4.0;

}  // namespace glimt
