#include "fedlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedlab {

namespace {

constexpr int kMaxSweeps = 100;

double off_diag_norm(const Matrix& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Flip column j of m in place so its largest-magnitude entry is positive.
// Returns -1.0 if the column was negated, else 1.0.
double fix_column_sign(Matrix& m, size_t j) {
    size_t arg = 0;
    double best = -1.0;
    for (size_t i = 0; i < m.rows(); ++i) {
        const double v = std::fabs(m(i, j));
        if (v > best) {
            best = v;
            arg = i;
        }
    }
    if (m(arg, j) < 0.0) {
        for (size_t i = 0; i < m.rows(); ++i) m(i, j) = -m(i, j);
        return -1.0;
    }
    return 1.0;
}

std::vector<size_t> descending_order(const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] > v[b]; });
    return idx;
}

Matrix permute_columns(const Matrix& m, const std::vector<size_t>& order) {
    Matrix out(m.rows(), m.cols());
    for (size_t j = 0; j < order.size(); ++j)
        for (size_t i = 0; i < m.rows(); ++i) out(i, j) = m(i, order[j]);
    return out;
}

double column_dot(const Matrix& m, size_t p, size_t q) {
    double s = 0.0;
    for (size_t i = 0; i < m.rows(); ++i) s += m(i, p) * m(i, q);
    return s;
}

void rotate_columns(Matrix& m, size_t p, size_t q, double c, double s) {
    for (size_t i = 0; i < m.rows(); ++i) {
        const double vp = m(i, p), vq = m(i, q);
        m(i, p) = c * vp - s * vq;
        m(i, q) = s * vp + c * vq;
    }
}

// Fill column j of u with a unit vector orthogonal to the columns marked as
// built. Used for the left singular vectors of zero singular values. Takes
// the canonical basis vector with the largest residual against the built
// span; its squared norm is at least (rows - built)/rows.
void complete_orthonormal(Matrix& u, size_t j, const std::vector<bool>& built) {
    const size_t m = u.rows();
    auto orthogonalize = [&](std::vector<double>& w) {
        for (int pass = 0; pass < 2; ++pass) {
            for (size_t b = 0; b < u.cols(); ++b) {
                if (b == j || !built[b]) continue;
                double d = 0.0;
                for (size_t i = 0; i < m; ++i) d += u(i, b) * w[i];
                for (size_t i = 0; i < m; ++i) w[i] -= d * u(i, b);
            }
        }
    };
    std::vector<double> best;
    double best_n2 = -1.0;
    for (size_t cand = 0; cand < m; ++cand) {
        std::vector<double> w(m, 0.0);
        w[cand] = 1.0;
        orthogonalize(w);
        double n2 = 0.0;
        for (double v : w) n2 += v * v;
        if (n2 > best_n2) {
            best_n2 = n2;
            best = std::move(w);
        }
    }
    if (best_n2 <= 1e-12) throw NumericalError("svd: orthonormal completion failed");
    orthogonalize(best);  // second sweep for precision after the selection
    double n2 = 0.0;
    for (double v : best) n2 += v * v;
    const double inv = 1.0 / std::sqrt(n2);
    for (size_t i = 0; i < m; ++i) u(i, j) = best[i] * inv;
}

}  // namespace

EighResult sym_eigh(const Matrix& a) {
    if (a.empty() || a.rows() != a.cols())
        throw InvalidArgumentError("sym_eigh: matrix must be square and non-empty");
    const size_t n = a.rows();
    const double scale = std::max(1.0, max_abs(a));
    double asym = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            asym = std::max(asym, std::fabs(a(i, j) - a(j, i)));
    if (asym >= 1e-9 * scale)
        throw InvalidArgumentError("sym_eigh: matrix is not symmetric (|A-A^T|_max = " +
                                   std::to_string(asym) + ")");

    // Work on the symmetrized copy so the tolerated asymmetry cannot bias
    // one triangle.
    Matrix b(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) b(i, j) = 0.5 * (a(i, j) + a(j, i));
    Matrix v = Matrix::identity(n);

    const double thresh = 1e-12 * frob_norm(b);
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        if (off_diag_norm(b) <= thresh) break;
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = b(p, q);
                if (apq == 0.0) continue;
                const double theta = (b(q, q) - b(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                // B <- J^T B J with the Givens rotation J in the (p,q) plane.
                for (size_t i = 0; i < n; ++i) {
                    const double bip = b(i, p), biq = b(i, q);
                    b(i, p) = c * bip - s * biq;
                    b(i, q) = s * bip + c * biq;
                }
                for (size_t i = 0; i < n; ++i) {
                    const double bpi = b(p, i), bqi = b(q, i);
                    b(p, i) = c * bpi - s * bqi;
                    b(q, i) = s * bpi + c * bqi;
                }
                rotate_columns(v, p, q, c, s);
            }
        }
    }
    if (sweep == kMaxSweeps && off_diag_norm(b) > thresh)
        throw NumericalError("sym_eigh: no convergence after " + std::to_string(kMaxSweeps) +
                             " sweeps, off-diagonal norm " + std::to_string(off_diag_norm(b)));

    std::vector<double> vals(n);
    for (size_t i = 0; i < n; ++i) vals[i] = b(i, i);
    const auto order = descending_order(vals);
    std::vector<double> sorted(n);
    for (size_t i = 0; i < n; ++i) sorted[i] = vals[order[i]];
    Matrix vecs = permute_columns(v, order);
    for (size_t j = 0; j < n; ++j) fix_column_sign(vecs, j);
    return {std::move(sorted), std::move(vecs)};
}

SvdResult svd(const Matrix& a) {
    if (a.empty()) throw InvalidArgumentError("svd: matrix must be non-empty");
    if (!all_finite(a)) throw InvalidArgumentError("svd: non-finite entries");
    if (a.rows() < a.cols()) {
        SvdResult t = svd(transpose(a));
        return {std::move(t.v), std::move(t.s), std::move(t.u)};
    }
    const size_t m = a.rows(), n = a.cols();
    Matrix b = a;
    Matrix v = Matrix::identity(n);

    constexpr double tol = 1e-14;
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double alpha = column_dot(b, p, p);
                const double beta = column_dot(b, q, q);
                const double gamma = column_dot(b, p, q);
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::fabs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                rotate_columns(b, p, q, c, s);
                rotate_columns(v, p, q, c, s);
            }
        }
        if (!rotated) break;
    }
    if (sweep == kMaxSweeps)
        throw NumericalError("svd: one-sided Jacobi did not converge after " +
                             std::to_string(kMaxSweeps) + " sweeps");

    std::vector<double> s(n);
    for (size_t j = 0; j < n; ++j) s[j] = std::sqrt(column_dot(b, j, j));
    const auto order = descending_order(s);
    std::vector<double> sorted(n);
    for (size_t j = 0; j < n; ++j) sorted[j] = s[order[j]];
    b = permute_columns(b, order);
    v = permute_columns(v, order);

    const double smax = sorted.empty() ? 0.0 : sorted[0];
    const double zero_cut = smax * 1e-18;
    Matrix u(m, n);
    std::vector<bool> built(n, false);
    for (size_t j = 0; j < n; ++j) {
        if (sorted[j] > zero_cut && sorted[j] > 0.0) {
            const double inv = 1.0 / sorted[j];
            for (size_t i = 0; i < m; ++i) u(i, j) = b(i, j) * inv;
            built[j] = true;
        }
    }
    for (size_t j = 0; j < n; ++j) {
        if (!built[j]) {
            complete_orthonormal(u, j, built);
            built[j] = true;
        }
    }
    for (size_t j = 0; j < n; ++j) {
        const double flip = fix_column_sign(u, j);
        if (flip < 0.0)
            for (size_t i = 0; i < n; ++i) v(i, j) = -v(i, j);
    }
    return {std::move(u), std::move(sorted), std::move(v)};
}

Matrix random_orthogonal(size_t n, Rng& rng) {
    if (n == 0) throw InvalidArgumentError("random_orthogonal: n must be >= 1");
    Matrix q(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) q(i, j) = rng.normal();

    // Modified Gram-Schmidt with one reorthogonalization pass per column.
    std::vector<bool> built(n, false);
    for (size_t j = 0; j < n; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (size_t b = 0; b < j; ++b) {
                double d = 0.0;
                for (size_t i = 0; i < n; ++i) d += q(i, b) * q(i, j);
                for (size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, b);
            }
        }
        double n2 = column_dot(q, j, j);
        if (n2 < 1e-12) {  // degenerate draw; replace with a completion
            built.assign(n, false);
            for (size_t b = 0; b < j; ++b) built[b] = true;
            complete_orthonormal(q, j, built);
        } else {
            const double inv = 1.0 / std::sqrt(n2);
            for (size_t i = 0; i < n; ++i) q(i, j) *= inv;
        }
    }
    return q;
}

}  // namespace fedlab
