#include "fedlab/decorr.hpp"

#include <cmath>
#include <vector>

#include "fedlab/linalg.hpp"

namespace fedlab::decorr {

namespace {

struct ColumnStats {
    std::vector<double> mean;
    std::vector<double> std;  // population
};

ColumnStats column_stats(const Matrix& z) {
    const size_t n = z.rows(), d = z.cols();
    ColumnStats st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) st.mean[j] += z(i, j);
    for (size_t j = 0; j < d; ++j) st.mean[j] /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
            const double c = z(i, j) - st.mean[j];
            st.std[j] += c * c;
        }
    for (size_t j = 0; j < d; ++j) st.std[j] = std::sqrt(st.std[j] / static_cast<double>(n));
    return st;
}

void require_batch(const Matrix& z, const char* op) {
    if (z.rows() < 2)
        throw InvalidArgumentError(std::string(op) + ": need at least 2 samples");
    if (z.cols() < 1)
        throw InvalidArgumentError(std::string(op) + ": need at least 1 dimension");
}

}  // namespace

Matrix zscore(const Matrix& z, double eps) {
    require_batch(z, "zscore");
    if (eps < 0.0) throw InvalidArgumentError("zscore: eps must be >= 0");
    const auto st = column_stats(z);
    Matrix out(z.rows(), z.cols());
    for (size_t j = 0; j < z.cols(); ++j) {
        if (st.std[j] < eps || st.std[j] == 0.0) continue;  // guarded column stays zero
        const double inv = 1.0 / st.std[j];
        for (size_t i = 0; i < z.rows(); ++i) out(i, j) = (z(i, j) - st.mean[j]) * inv;
    }
    return out;
}

Matrix correlation_matrix(const Matrix& z, double eps) {
    require_batch(z, "correlation_matrix");
    const Matrix zhat = zscore(z, eps);
    Matrix k = matmul_at_b(zhat, zhat);
    k *= 1.0 / static_cast<double>(z.rows());
    return k;
}

double feddecorr_loss(const Matrix& z, double eps) {
    const Matrix k = correlation_matrix(z, eps);
    const double f = frob_norm(k);
    const double d = static_cast<double>(z.cols());
    return f * f / (d * d);
}

Matrix feddecorr_grad(const Matrix& z, double eps) {
    require_batch(z, "feddecorr_grad");
    const size_t n = z.rows(), d = z.cols();
    const auto st = column_stats(z);
    const Matrix zhat = zscore(z, eps);
    Matrix k = matmul_at_b(zhat, zhat);
    k *= 1.0 / static_cast<double>(n);

    // dL/dZhat = (4 / (N d^2)) * Zhat * K
    Matrix g = matmul(zhat, k);
    g *= 4.0 / (static_cast<double>(n) * static_cast<double>(d) * static_cast<double>(d));

    // Back through the per-column z-score (population mean and variance are
    // functions of the column): dZ_j = (g - mean(g) - zhat*(g.zhat)/N) / std_j
    Matrix out(n, d);
    for (size_t j = 0; j < d; ++j) {
        if (st.std[j] < eps || st.std[j] == 0.0) continue;  // guarded: zero gradient
        double gbar = 0.0, gdotz = 0.0;
        for (size_t i = 0; i < n; ++i) {
            gbar += g(i, j);
            gdotz += g(i, j) * zhat(i, j);
        }
        gbar /= static_cast<double>(n);
        gdotz /= static_cast<double>(n);
        const double inv = 1.0 / st.std[j];
        for (size_t i = 0; i < n; ++i)
            out(i, j) = (g(i, j) - gbar - zhat(i, j) * gdotz) * inv;
    }
    return out;
}

double singular_value_variance(const Matrix& sigma) {
    const auto eig = sym_eigh(sigma);  // rejects non-square / non-symmetric input
    const double d = static_cast<double>(eig.values.size());
    double mean = 0.0;
    for (double v : eig.values) mean += v;
    mean /= d;
    double acc = 0.0;
    for (double v : eig.values) acc += (v - mean) * (v - mean);
    return acc / d;
}

double variance_identity_residual(const Matrix& k) {
    if (k.empty() || k.rows() != k.cols())
        throw InvalidArgumentError("variance_identity_residual: K must be square and non-empty");
    const size_t d = k.rows();
    for (size_t i = 0; i < d; ++i) {
        if (std::fabs(k(i, i) - 1.0) > 1e-8)
            throw InvalidArgumentError("variance_identity_residual: diagonal entry differs from 1");
        for (size_t j = 0; j < d; ++j) {
            if (std::fabs(k(i, j)) > 1.0 + 1e-9)
                throw InvalidArgumentError("variance_identity_residual: entry outside [-1, 1]");
            if (std::fabs(k(i, j) - k(j, i)) > 1e-10)
                throw InvalidArgumentError("variance_identity_residual: K is not symmetric");
        }
    }
    const auto eig = sym_eigh(k);
    double mean = 0.0;
    for (double v : eig.values) mean += v;
    mean /= static_cast<double>(d);
    double lhs = 0.0;
    for (double v : eig.values) lhs += (v - mean) * (v - mean);
    const double f = frob_norm(k);
    const double rhs = f * f - static_cast<double>(d);
    return std::fabs(lhs - rhs);
}

double decov_loss(const Matrix& z) {
    require_batch(z, "decov_loss");
    const size_t n = z.rows(), d = z.cols();
    const auto st = column_stats(z);
    Matrix centered(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) centered(i, j) = z(i, j) - st.mean[j];
    Matrix cov = matmul_at_b(centered, centered);
    cov *= 1.0 / static_cast<double>(n);
    double off = 0.0;
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j)
            if (i != j) off += cov(i, j) * cov(i, j);
    return 0.5 * off;
}

}  // namespace fedlab::decorr
