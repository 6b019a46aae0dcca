#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tqa/errors.hpp"

namespace tqa {

struct Uninitialized {};
inline constexpr Uninitialized uninitialized{};

// Dense row-major matrix. Plain value type; all arithmetic lives in the
// kernels and tape layers.
template <class T>
class Mat {
public:
    Mat() = default;
    Mat(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T(0)) {}
    Mat(size_t rows, size_t cols, Uninitialized) : rows_(rows), cols_(cols) {
        data_.resize(rows * cols);
    }
    Mat(size_t rows, size_t cols, std::initializer_list<T> values)
        : rows_(rows), cols_(cols), data_(values) {
        if (data_.size() != rows * cols) {
            throw ShapeError("Mat initializer size " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* row(size_t i) { return data_.data() + i * cols_; }
    const T* row(size_t i) const { return data_.data() + i * cols_; }

    T& at(size_t i, size_t j) { return data_[i * cols_ + j]; }
    const T& at(size_t i, size_t j) const { return data_[i * cols_ + j]; }
    T& operator[](size_t k) { return data_[k]; }
    const T& operator[](size_t k) const { return data_[k]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Mat& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<T> data_;
};

template <class To, class From>
Mat<To> mat_cast(const Mat<From>& m) {
    Mat<To> out(m.rows(), m.cols(), uninitialized);
    for (size_t k = 0; k < m.size(); ++k) out[k] = static_cast<To>(m[k]);
    return out;
}

} // namespace tqa
