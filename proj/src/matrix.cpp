#include "fedlab/matrix.hpp"

#include <cmath>
#include <cstdint>
#include <utility>

namespace fedlab {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw InvalidArgumentError(std::string(op) + ": shape mismatch");
}

// Work threshold below which the OpenMP kernels stay single-threaded.
constexpr size_t kParallelFlops = 1u << 18;

}  // namespace

Matrix::Matrix(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw InvalidArgumentError("Matrix: data length does not equal rows*cols");
    for (double v : data_)
        if (!std::isfinite(v)) throw InvalidArgumentError("Matrix: non-finite entry");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InvalidArgumentError("Matrix: ragged initializer");
        for (double v : r) {
            if (!std::isfinite(v)) throw InvalidArgumentError("Matrix: non-finite entry");
            data_.push_back(v);
        }
    }
}

Matrix Matrix::identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    check_same_shape(*this, o, "operator+=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    check_same_shape(*this, o, "operator-=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidArgumentError("matmul: inner dimensions differ");
    const size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    const bool par = m * k * n >= kParallelFlops;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < static_cast<int64_t>(m); ++i) {
        double* ci = c.data() + i * n;
        const double* ai = a.data() + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b.data() + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw InvalidArgumentError("matmul_at_b: row counts differ");
    const size_t m = a.cols(), k = a.rows(), n = b.cols();
    Matrix c(m, n);
    const bool par = m * k * n >= kParallelFlops;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < static_cast<int64_t>(m); ++i) {
        double* ci = c.data() + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double aip = a(p, static_cast<size_t>(i));
            const double* bp = b.data() + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw InvalidArgumentError("matmul_a_bt: column counts differ");
    const size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    const bool par = m * k * n >= kParallelFlops;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < static_cast<int64_t>(m); ++i) {
        double* ci = c.data() + i * n;
        const double* ai = a.data() + i * k;
        for (size_t j = 0; j < n; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double frob_norm(const Matrix& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
    return m;
}

double trace(const Matrix& a) {
    const size_t n = std::min(a.rows(), a.cols());
    double t = 0.0;
    for (size_t i = 0; i < n; ++i) t += a(i, i);
    return t;
}

bool all_finite(const Matrix& a) {
    for (size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i])) return false;
    return true;
}

Matrix gather_columns(const Matrix& a, std::span<const size_t> idx) {
    Matrix g(a.rows(), idx.size());
    for (size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= a.cols()) throw InvalidArgumentError("gather_columns: index out of range");
        for (size_t i = 0; i < a.rows(); ++i) g(i, j) = a(i, idx[j]);
    }
    return g;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidArgumentError("matmul: inner dimensions differ");
    const size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    for (size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        const double* ai = a.data() + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b.data() + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw InvalidArgumentError("matmul_at_b: row counts differ");
    const size_t m = a.cols(), k = a.rows(), n = b.cols();
    Matrix c(m, n);
    for (size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double aip = a(p, i);
            const double* bp = b.data() + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw InvalidArgumentError("matmul_a_bt: column counts differ");
    const size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    for (size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        const double* ai = a.data() + i * k;
        for (size_t j = 0; j < n; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

}  // namespace serial

}  // namespace fedlab
