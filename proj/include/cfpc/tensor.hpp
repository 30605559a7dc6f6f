// Row-major dense matrices over double / complex<double>. Deliberately small:
// storage, indexing and shape checks; heavier algebra lives with its users.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cfpc {

using cdouble = std::complex<double>;

template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(T v) { data_.assign(data_.size(), v); }

    bool same_shape(const Mat& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Tensor2D = Mat<double>;
using ComplexMat = Mat<cdouble>;

inline void require_shape(const Tensor2D& m, std::size_t rows, std::size_t cols,
                          const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

inline void require_shape(const ComplexMat& m, std::size_t rows, std::size_t cols,
                          const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace cfpc
