#include "smcvi/tensor.hpp"

#include <cmath>

#include "smcvi/error.hpp"

namespace smcvi {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "tensor data length does not match shape");
}

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        require(row.size() == c, "ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        t(i, i) = 1.0;
    }
    return t;
}

double Tensor::item() const {
    require(is_scalar(), "item() needs a 1x1 tensor, got " + shape_string());
    return data_[0];
}

Tensor Tensor::transposed() const {
    Tensor t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

Tensor Tensor::row_copy(std::size_t r) const {
    require(r < rows_, "row index out of range");
    return Tensor::row(row_span(r));
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require(same_shape(other), "shape mismatch in +=: " + shape_string() + " vs " +
                                   other.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator*=(double factor) {
    for (double& v : data_) {
        v *= factor;
    }
    return *this;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(),
            "matmul inner dimensions differ: " + a.shape_string() + " * " + b.shape_string());
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

}  // namespace smcvi
