#pragma once

#include "fedlab/matrix.hpp"
#include "fedlab/rng.hpp"

namespace fedlab {

// Eigendecomposition of a symmetric matrix. Eigenvalues sorted
// non-increasing; eigenvectors are the columns of `vectors`, each flipped so
// its largest-magnitude entry is positive (deterministic output).
struct EighResult {
    std::vector<double> values;
    Matrix vectors;
};

// Thin SVD: A = U * diag(S) * V^T with S non-increasing and >= 0.
// U is rows x k, V is cols x k, k = min(rows, cols). Each (u_k, v_k) pair is
// flipped together so u_k's largest-magnitude entry is positive.
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

// Cyclic Jacobi sweeps; converges when the off-diagonal Frobenius norm drops
// below 1e-12 * ||A||_F, capped at 100 sweeps.
EighResult sym_eigh(const Matrix& a);

// One-sided Jacobi on columns (applied to A^T when rows < cols).
SvdResult svd(const Matrix& a);

// Haar-ish random orthogonal matrix; ||Q^T Q - I||_max < 1e-12.
Matrix random_orthogonal(size_t n, Rng& rng);

}  // namespace fedlab
