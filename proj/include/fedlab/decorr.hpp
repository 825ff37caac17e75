#pragma once

#include "fedlab/matrix.hpp"

namespace fedlab::decorr {

// Representation batches here are N x d (samples as rows); the nn/theory
// modules use samples as columns and transpose at the boundary.

// Default guard under which a dimension counts as zero-variance.
inline constexpr double kEpsGuard = 1e-8;

// Per-dimension z-score with population statistics. Columns whose population
// std is below eps come back as all zeros and are excluded from gradients.
Matrix zscore(const Matrix& z, double eps = kEpsGuard);

// K = (1/N) * Zhat^T * Zhat. Unit diagonal except eps-guarded dimensions,
// which carry diagonal 0.
Matrix correlation_matrix(const Matrix& z, double eps = kEpsGuard);

// (1/d^2) * ||K||_F^2
double feddecorr_loss(const Matrix& z, double eps = kEpsGuard);

// d(feddecorr_loss)/dZ, N x d. Differentiates through the z-score statistics
// (mean and variance treated as functions of Z).
Matrix feddecorr_grad(const Matrix& z, double eps = kEpsGuard);

// (1/d) * sum_i (lambda_i - mean(lambda))^2 over the eigenvalues of a
// symmetric PSD matrix.
double singular_value_variance(const Matrix& sigma);

// |LHS - RHS| of the identity  sum_i (lambda_i - mean)^2 = ||K||_F^2 - d,
// LHS via the eigensolver, RHS via the Frobenius norm directly.
double variance_identity_residual(const Matrix& k);

// Comparator operating on the batch covariance instead of the correlation:
// half the squared Frobenius norm of the off-diagonal covariance entries.
double decov_loss(const Matrix& z);

}  // namespace fedlab::decorr
