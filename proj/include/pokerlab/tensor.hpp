#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pokerlab {

// Aligned storage keeps Eigen's vectorized kernels on the same code path for
// every allocation, which is what makes reruns bitwise reproducible.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense row-major array with shape metadata. Barely more than a vector; all
// real math happens through the Eigen views.
template <typename T>
struct Tensor {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

    AlignedVec<T> data;
    std::vector<int64_t> shape;

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(static_cast<size_t>(t.size()), T(0));
        return t;
    }

    int64_t size() const {
        return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
    }

    int64_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int64_t cols() const { return shape.empty() ? 0 : shape.back(); }

    Eigen::Map<Mat> mat() {
        return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<const Mat> mat() const {
        return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<Vec> vec() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
    Eigen::Map<const Vec> vec() const {
        return {data.data(), static_cast<Eigen::Index>(data.size())};
    }

    void set_zero() { std::fill(data.begin(), data.end(), T(0)); }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }
};

template <typename T>
struct ParamBlock {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    ParamBlock(std::string n, std::vector<int64_t> shape)
        : name(std::move(n)), value(Tensor<T>::zeros(shape)), grad(Tensor<T>::zeros(shape)) {}
};

} // namespace pokerlab
