#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "fedlab/error.hpp"

namespace fedlab {

// Dense row-major matrix of doubles. The universal carrier for weights,
// batches and covariances.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    // Construction from external data validates shape and finiteness.
    Matrix(size_t rows, size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(size_t n);

    double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> row(size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(size_t i) const { return {data_.data() + i * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// Multiplication kernels. OpenMP-parallel over output rows; each output entry
// is accumulated by a single thread in a fixed order, so results are
// bit-identical to the serial reference regardless of thread count.
Matrix matmul(const Matrix& a, const Matrix& b);     // A * B
Matrix matmul_at_b(const Matrix& a, const Matrix& b);  // A^T * B
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);  // A * B^T

Matrix transpose(const Matrix& a);

double frob_norm(const Matrix& a);
double max_abs(const Matrix& a);
double trace(const Matrix& a);
bool all_finite(const Matrix& a);

Matrix gather_columns(const Matrix& a, std::span<const size_t> idx);

// Serial reference kernels kept for testing and benchmarking the parallel
// versions above.
namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
}  // namespace serial

}  // namespace fedlab
