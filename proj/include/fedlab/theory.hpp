#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedlab/nn.hpp"

namespace fedlab::theory {

// Activation-free stack W_1..W_{L+1}; the first L layers are square with a
// common dimension, the head may have fewer rows (classes) than columns.
struct LinearStack {
    std::vector<Matrix> w;

    size_t rep_depth() const { return w.size() - 1; }  // L
    const Matrix& head() const { return w.back(); }
};

// dims = [d_in, h_1, ..., h_L, C] with d_in = h_1 = ... = h_L = n and C <= n.
// Every layer is scale * (rows of an independent random orthogonal matrix),
// so consecutive-layer balancedness holds exactly at init and the conserved
// per-k quantities start at 0.
LinearStack balanced_init(const std::vector<size_t>& dims, double scale, Rng& rng);

// Rank-C construction W_i = s*U_i J U_{i-1}^T (J projects onto the first C
// coordinates), head = s*[I_C 0]*U_L^T, with independent random orthogonal
// U_i. This balances every consecutive pair *including the head*, which the
// flow conserves, so the head's right singular space stays tied to the
// product's left singular space for all t — the singular-space coupling the
// sigma-dynamics formula assumes. With C = n it reduces to a full-rank
// balanced init.
LinearStack chain_balanced_init(const std::vector<size_t>& dims, double scale, Rng& rng);

// Batch where class c consists of `counts[c]` copies of one prototype vector
// (spread * orthonormal direction). With per-class-constant inputs the
// class-mean form of the driving matrix G is exact, not an approximation.
nn::Batch prototype_batch(int num_classes, size_t dim, const std::vector<size_t>& counts,
                          double spread, Rng& rng);

// Per-class prototype norms; graded norms split the singular-value growth
// rates, which keeps the spectrum non-degenerate along the trajectory.
nn::Batch prototype_batch(int num_classes, size_t dim, const std::vector<size_t>& counts,
                          std::span<const double> spreads, Rng& rng);

// Pi = W_L ... W_1 (head excluded).
Matrix rep_product(const LinearStack& stack);

// max over consecutive pairs among the first L layers of
// ||W_j W_j^T - W_{j+1}^T W_{j+1}||_F; 0 by convention when L < 2.
double balancedness_gap(const LinearStack& stack);

// G = sum_c mu_c (e_c - mean softmax of class c) (mean input of class c)^T,
// shape C x d_in.
Matrix compute_G(const LinearStack& stack, const nn::Batch& batch);

// sigma_head_k^2 - sigma_k(Pi)^(2/L), pairing the descending-sorted spectra.
std::vector<double> conserved_quantities(const LinearStack& stack);

// Entry (k', k) = |u_k(Pi)^T v_{head,k'}|: overlap of the k-th left singular
// vector of Pi with the k'-th right singular vector of the head.
Matrix alignment_matrix(const LinearStack& stack);

// N * L * sigma_k^(2-2/L) * sqrt(sigma_k^(2/L) + M_k) * u_{head,k}^T G v_k,
// signed by the (u_k(Pi), v_{head,k}) overlap so the value is invariant to
// the sign ambiguity of the two separate SVDs. Radicands below -1e-10 raise
// a numerical error; tiny negatives clamp to 0.
double sigma_rate_rhs(const LinearStack& stack, const nn::Batch& batch,
                      std::span<const double> m_k, size_t k);

struct TraceRecord {
    size_t step = 0;
    double time = 0.0;  // step * lr
    double loss = 0.0;
    std::vector<double> sigma;       // of Pi, descending
    std::vector<double> sigma_head;  // of the head, descending
    std::vector<double> m_k;         // conserved quantities at this step
    std::vector<double> rhs;         // per k, using the init-time M_k
    double gap = 0.0;
    Matrix alignment;
    std::vector<bool> degenerate;  // sigma_k within 1e-9 of a neighbor
};

struct ResidualSample {
    size_t record = 0;
    size_t k = 0;
    double fd = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
};

struct TheoryTrace {
    std::vector<TraceRecord> records;
    double lr = 0.0;
    size_t record_every = 1;
    size_t steps = 0;

    // Central differences over the record cadence vs the recorded RHS.
    // Excludes degenerate (k, t) and pairs where both |fd| and |rhs| sit
    // below the floor.
    std::vector<ResidualSample> residuals(double floor = 1e-8) const;
    double median_residual(double floor = 1e-8) const;

    double max_gap() const;
    // max over k, t of |M_k(t) - M_k(0)|.
    double max_m_drift() const;
};

// Full-batch GD with sum-reduction cross-entropy from a balanced init.
TheoryTrace run_gradient_flow(const std::vector<size_t>& dims, double scale,
                              const nn::Batch& batch, double lr, size_t steps,
                              size_t record_every, Rng& rng);

// One row per (record, k): step,time,k,sigma_k,fd,rhs,residual,gap,M_k.
// fd/residual are empty at boundary records and for excluded samples.
void write_trace_csv(const TheoryTrace& trace, const std::string& path);

}  // namespace fedlab::theory
