#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smcvi {

/// Dense row-major matrix of doubles. Scalars are 1x1 and vectors are 1xd rows;
/// nothing in the library needs rank above two.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor(1, 1, value); }
    static Tensor row(std::initializer_list<double> values);
    static Tensor row(std::span<const double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return rows_ == 1 && cols_ == 1; }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Value of a 1x1 tensor.
    double item() const;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row_span(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }
    std::span<double> row_span(std::size_t r) {
        return std::span<double>(data_).subspan(r * cols_, cols_);
    }

    Tensor transposed() const;
    Tensor row_copy(std::size_t r) const;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double factor);

    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace smcvi
