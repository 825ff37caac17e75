#include "fedlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "fedlab/io_util.hpp"
#include "fedlab/linalg.hpp"

namespace fedlab::theory {

namespace {

constexpr double kDegenerateGap = 1e-9;

nn::Model as_model(const LinearStack& stack) {
    nn::Model m;
    m.weights = stack.w;
    m.activation = nn::Activation::none;
    return m;
}

struct ClassMeans {
    std::vector<double> mu;  // proportions
    Matrix gamma_bar;        // C x C, column c = mean softmax of class c
    Matrix x_bar;            // d_in x C
};

ClassMeans class_means(const LinearStack& stack, const nn::Batch& batch) {
    if (batch.size() == 0) throw InvalidArgumentError("compute_G: empty batch");
    const size_t c = static_cast<size_t>(batch.num_classes);
    const nn::ForwardResult f = nn::forward(as_model(stack), batch.x);
    ClassMeans cm{std::vector<double>(c, 0.0), Matrix(f.probs.rows(), c),
                  Matrix(batch.x.rows(), c)};
    std::vector<size_t> counts(c, 0);
    for (size_t j = 0; j < batch.size(); ++j) {
        const size_t y = static_cast<size_t>(batch.labels[j]);
        if (y >= c) throw InvalidArgumentError("compute_G: label out of range");
        ++counts[y];
        for (size_t i = 0; i < f.probs.rows(); ++i) cm.gamma_bar(i, y) += f.probs(i, j);
        for (size_t i = 0; i < batch.x.rows(); ++i) cm.x_bar(i, y) += batch.x(i, j);
    }
    for (size_t y = 0; y < c; ++y) {
        cm.mu[y] = static_cast<double>(counts[y]) / static_cast<double>(batch.size());
        if (counts[y] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[y]);
        for (size_t i = 0; i < cm.gamma_bar.rows(); ++i) cm.gamma_bar(i, y) *= inv;
        for (size_t i = 0; i < cm.x_bar.rows(); ++i) cm.x_bar(i, y) *= inv;
    }
    return cm;
}

double column_overlap(const Matrix& a, size_t ja, const Matrix& b, size_t jb) {
    double s = 0.0;
    for (size_t i = 0; i < a.rows(); ++i) s += a(i, ja) * b(i, jb);
    return s;
}

std::vector<double> rhs_all(const SvdResult& pi, const SvdResult& head, const Matrix& g,
                            size_t n_samples, size_t depth_l, std::span<const double> m_k) {
    const size_t kmax = std::min({pi.s.size(), head.s.size(), m_k.size()});
    std::vector<double> out(kmax, 0.0);
    const double l = static_cast<double>(depth_l);
    for (size_t k = 0; k < kmax; ++k) {
        const double sigma = pi.s[k];
        double radicand = std::pow(sigma, 2.0 / l) + m_k[k];
        if (radicand < 0.0) {
            if (radicand < -1e-10)
                throw NumericalError("sigma_rate_rhs: negative radicand " + io::fmt(radicand));
            radicand = 0.0;
        }
        // u_{head,k}^T G v_k
        double ugv = 0.0;
        for (size_t i = 0; i < g.rows(); ++i) {
            double gv = 0.0;
            for (size_t j = 0; j < g.cols(); ++j) gv += g(i, j) * pi.v(j, k);
            ugv += head.u(i, k) * gv;
        }
        const double align = column_overlap(pi.u, k, head.v, k);
        const double sign = align < 0.0 ? -1.0 : 1.0;
        out[k] = static_cast<double>(n_samples) * l * std::pow(sigma, 2.0 - 2.0 / l) *
                 std::sqrt(radicand) * sign * ugv;
    }
    return out;
}

}  // namespace

LinearStack balanced_init(const std::vector<size_t>& dims, double scale, Rng& rng) {
    if (dims.size() < 3)
        throw InvalidArgumentError("balanced_init: need at least d_in, one hidden, classes");
    if (scale < 0.0) throw InvalidArgumentError("balanced_init: scale must be >= 0");
    const size_t n = dims[0];
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        if (dims[i] != n)
            throw InvalidArgumentError(
                "balanced_init: the scaled-orthogonal construction needs equal dims for the "
                "first L layers");
    const size_t classes = dims.back();
    if (classes > n || classes == 0)
        throw InvalidArgumentError("balanced_init: class count must be in [1, hidden dim]");

    LinearStack stack;
    const size_t layers = dims.size() - 1;
    for (size_t i = 0; i < layers; ++i) {
        const Matrix q = random_orthogonal(n, rng);
        const size_t rows = (i + 1 == layers) ? classes : n;
        Matrix w(rows, n);
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < n; ++c) w(r, c) = scale * q(r, c);
        stack.w.push_back(std::move(w));
    }
    return stack;
}

LinearStack chain_balanced_init(const std::vector<size_t>& dims, double scale, Rng& rng) {
    if (dims.size() < 3)
        throw InvalidArgumentError("chain_balanced_init: need at least d_in, one hidden, classes");
    if (scale < 0.0) throw InvalidArgumentError("chain_balanced_init: scale must be >= 0");
    const size_t n = dims[0];
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        if (dims[i] != n)
            throw InvalidArgumentError("chain_balanced_init: first L layers need equal dims");
    const size_t classes = dims.back();
    if (classes > n || classes == 0)
        throw InvalidArgumentError("chain_balanced_init: class count must be in [1, hidden dim]");

    const size_t depth_l = dims.size() - 2;
    std::vector<Matrix> u(depth_l + 1);
    for (auto& m : u) m = random_orthogonal(n, rng);

    LinearStack stack;
    for (size_t i = 1; i <= depth_l; ++i) {
        // W_i = s * U_i J U_{i-1}^T, J = diag(I_C, 0).
        Matrix w(n, n);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < n; ++c) {
                double acc = 0.0;
                for (size_t k = 0; k < classes; ++k) acc += u[i](r, k) * u[i - 1](c, k);
                w(r, c) = scale * acc;
            }
        stack.w.push_back(std::move(w));
    }
    Matrix head(classes, n);
    for (size_t r = 0; r < classes; ++r)
        for (size_t c = 0; c < n; ++c) head(r, c) = scale * u[depth_l](c, r);
    stack.w.push_back(std::move(head));
    return stack;
}

nn::Batch prototype_batch(int num_classes, size_t dim, const std::vector<size_t>& counts,
                          double spread, Rng& rng) {
    const std::vector<double> spreads(static_cast<size_t>(num_classes), spread);
    return prototype_batch(num_classes, dim, counts, spreads, rng);
}

nn::Batch prototype_batch(int num_classes, size_t dim, const std::vector<size_t>& counts,
                          std::span<const double> spreads, Rng& rng) {
    if (num_classes < 2 || counts.size() != static_cast<size_t>(num_classes) ||
        spreads.size() != static_cast<size_t>(num_classes))
        throw InvalidArgumentError("prototype_batch: need one count and spread per class");
    if (dim < static_cast<size_t>(num_classes))
        throw InvalidArgumentError("prototype_batch: dim must be >= class count");
    size_t total = 0;
    for (size_t c : counts) total += c;
    if (total == 0) throw InvalidArgumentError("prototype_batch: empty batch");

    const Matrix q = random_orthogonal(dim, rng);
    nn::Batch b;
    b.x = Matrix(dim, total);
    b.num_classes = num_classes;
    size_t col = 0;
    for (int c = 0; c < num_classes; ++c)
        for (size_t i = 0; i < counts[static_cast<size_t>(c)]; ++i, ++col) {
            for (size_t r = 0; r < dim; ++r)
                b.x(r, col) = spreads[static_cast<size_t>(c)] * q(r, static_cast<size_t>(c));
            b.labels.push_back(c);
        }
    return b;
}

Matrix rep_product(const LinearStack& stack) {
    if (stack.w.size() < 2) throw InvalidArgumentError("rep_product: stack needs L >= 1");
    Matrix pi = stack.w[0];
    for (size_t i = 1; i + 1 < stack.w.size(); ++i) pi = matmul(stack.w[i], pi);
    return pi;
}

double balancedness_gap(const LinearStack& stack) {
    const size_t l = stack.rep_depth();
    if (l < 2) return 0.0;
    double gap = 0.0;
    for (size_t j = 0; j + 1 < l; ++j) {
        const Matrix lhs = matmul_a_bt(stack.w[j], stack.w[j]);
        const Matrix rhs = matmul_at_b(stack.w[j + 1], stack.w[j + 1]);
        gap = std::max(gap, frob_norm(lhs - rhs));
    }
    return gap;
}

Matrix compute_G(const LinearStack& stack, const nn::Batch& batch) {
    const ClassMeans cm = class_means(stack, batch);
    const size_t c = cm.mu.size();
    const size_t d_in = cm.x_bar.rows();
    Matrix g(c, d_in);
    for (size_t cls = 0; cls < c; ++cls) {
        if (cm.mu[cls] == 0.0) continue;
        for (size_t i = 0; i < c; ++i) {
            const double e = (i == cls) ? 1.0 : 0.0;
            const double coeff = cm.mu[cls] * (e - cm.gamma_bar(i, cls));
            for (size_t j = 0; j < d_in; ++j) g(i, j) += coeff * cm.x_bar(j, cls);
        }
    }
    return g;
}

std::vector<double> conserved_quantities(const LinearStack& stack) {
    const SvdResult pi = svd(rep_product(stack));
    const SvdResult head = svd(stack.head());
    const double l = static_cast<double>(stack.rep_depth());
    const size_t kmax = std::min(pi.s.size(), head.s.size());
    std::vector<double> m(kmax);
    for (size_t k = 0; k < kmax; ++k)
        m[k] = head.s[k] * head.s[k] - std::pow(pi.s[k], 2.0 / l);
    return m;
}

Matrix alignment_matrix(const LinearStack& stack) {
    const SvdResult pi = svd(rep_product(stack));
    const SvdResult head = svd(stack.head());
    Matrix a(head.s.size(), pi.s.size());
    for (size_t kp = 0; kp < head.s.size(); ++kp)
        for (size_t k = 0; k < pi.s.size(); ++k)
            a(kp, k) = std::fabs(column_overlap(pi.u, k, head.v, kp));
    return a;
}

double sigma_rate_rhs(const LinearStack& stack, const nn::Batch& batch,
                      std::span<const double> m_k, size_t k) {
    const SvdResult pi = svd(rep_product(stack));
    const SvdResult head = svd(stack.head());
    if (k >= std::min({pi.s.size(), head.s.size(), m_k.size()}))
        throw InvalidArgumentError("sigma_rate_rhs: k out of range");
    const Matrix g = compute_G(stack, batch);
    return rhs_all(pi, head, g, batch.size(), stack.rep_depth(), m_k)[k];
}

std::vector<ResidualSample> TheoryTrace::residuals(double floor) const {
    std::vector<ResidualSample> out;
    if (records.size() < 3) return out;
    const double h = static_cast<double>(record_every) * lr;
    for (size_t r = 1; r + 1 < records.size(); ++r) {
        const auto& prev = records[r - 1];
        const auto& cur = records[r];
        const auto& next = records[r + 1];
        for (size_t k = 0; k < cur.rhs.size(); ++k) {
            if (prev.degenerate[k] || cur.degenerate[k] || next.degenerate[k]) continue;
            const double fd = (next.sigma[k] - prev.sigma[k]) / (2.0 * h);
            const double rhs = cur.rhs[k];
            if (std::fabs(fd) < floor && std::fabs(rhs) < floor) continue;
            const double res =
                std::fabs(fd - rhs) / std::max({std::fabs(fd), std::fabs(rhs), floor});
            out.push_back({r, k, fd, rhs, res});
        }
    }
    return out;
}

double TheoryTrace::median_residual(double floor) const {
    auto rs = residuals(floor);
    if (rs.empty()) throw NumericalError("median_residual: no usable residual samples");
    std::vector<double> v;
    v.reserve(rs.size());
    for (const auto& s : rs) v.push_back(s.residual);
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double TheoryTrace::max_gap() const {
    double g = 0.0;
    for (const auto& r : records) g = std::max(g, r.gap);
    return g;
}

double TheoryTrace::max_m_drift() const {
    if (records.empty()) return 0.0;
    const auto& m0 = records.front().m_k;
    double drift = 0.0;
    for (const auto& r : records)
        for (size_t k = 0; k < std::min(m0.size(), r.m_k.size()); ++k)
            drift = std::max(drift, std::fabs(r.m_k[k] - m0[k]));
    return drift;
}

TheoryTrace run_gradient_flow(const std::vector<size_t>& dims, double scale,
                              const nn::Batch& batch, double lr, size_t steps,
                              size_t record_every, Rng& rng) {
    if (record_every == 0) throw InvalidArgumentError("run_gradient_flow: record_every >= 1");
    // Chain-balanced so the singular-space coupling between the head and the
    // product holds along the whole trajectory, not just asymptotically.
    LinearStack stack = chain_balanced_init(dims, scale, rng);
    nn::Model model = as_model(stack);

    TheoryTrace trace;
    trace.lr = lr;
    trace.record_every = record_every;
    trace.steps = steps;

    std::vector<double> m0;
    auto record = [&](size_t step) {
        LinearStack cur{model.weights};
        TraceRecord rec;
        rec.step = step;
        rec.time = static_cast<double>(step) * lr;
        const nn::ForwardResult f = nn::forward(model, batch.x);
        rec.loss = nn::cross_entropy(f.probs, batch.labels, nn::Reduction::sum);
        const SvdResult pi = svd(rep_product(cur));
        const SvdResult head = svd(cur.head());
        rec.sigma = pi.s;
        rec.sigma_head = head.s;
        const double l = static_cast<double>(cur.rep_depth());
        const size_t kmax = std::min(pi.s.size(), head.s.size());
        rec.m_k.resize(kmax);
        for (size_t k = 0; k < kmax; ++k)
            rec.m_k[k] = head.s[k] * head.s[k] - std::pow(pi.s[k], 2.0 / l);
        if (m0.empty()) m0 = rec.m_k;
        rec.rhs = rhs_all(pi, head, compute_G(cur, batch), batch.size(), cur.rep_depth(), m0);
        rec.gap = balancedness_gap(cur);
        Matrix align(head.s.size(), pi.s.size());
        for (size_t kp = 0; kp < head.s.size(); ++kp)
            for (size_t k = 0; k < pi.s.size(); ++k)
                align(kp, k) = std::fabs(column_overlap(pi.u, k, head.v, kp));
        rec.alignment = std::move(align);
        rec.degenerate.assign(pi.s.size(), false);
        for (size_t k = 0; k < pi.s.size(); ++k) {
            if (k > 0 && pi.s[k - 1] - pi.s[k] < kDegenerateGap) rec.degenerate[k] = true;
            if (k + 1 < pi.s.size() && pi.s[k] - pi.s[k + 1] < kDegenerateGap)
                rec.degenerate[k] = true;
        }
        trace.records.push_back(std::move(rec));
    };

    record(0);
    for (size_t step = 1; step <= steps; ++step) {
        const nn::Gradients g = nn::backward(model, batch, 0.0, nullptr, nn::Reduction::sum);
        for (size_t i = 0; i < model.depth(); ++i) {
            Matrix& w = model.weights[i];
            const Matrix& gw = g.weights[i];
            for (size_t p = 0; p < w.size(); ++p) w.data()[p] -= lr * gw.data()[p];
        }
        if (!all_finite(model.weights.back()))
            throw NumericalError("run_gradient_flow: divergence at step " + std::to_string(step));
        if (step % record_every == 0) {
            record(step);
            if (!std::isfinite(trace.records.back().loss))
                throw NumericalError("run_gradient_flow: divergence at step " +
                                     std::to_string(step));
        }
    }
    return trace;
}

void write_trace_csv(const TheoryTrace& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "step,time,k,sigma_k,fd,rhs,residual,gap,M_k\n";

    const auto rs = trace.residuals();
    std::unordered_map<size_t, const ResidualSample*> by_cell;
    const size_t stride = trace.records.empty() ? 1 : trace.records[0].sigma.size() + 1;
    for (const auto& s : rs) by_cell[s.record * stride + s.k] = &s;

    for (size_t r = 0; r < trace.records.size(); ++r) {
        const auto& rec = trace.records[r];
        for (size_t k = 0; k < rec.sigma.size(); ++k) {
            os << rec.step << "," << io::fmt(rec.time) << "," << k << "," << io::fmt(rec.sigma[k])
               << ",";
            const auto it = by_cell.find(r * stride + k);
            if (it != by_cell.end()) os << io::fmt(it->second->fd);
            os << ",";
            if (k < rec.rhs.size()) os << io::fmt(rec.rhs[k]);
            os << ",";
            if (it != by_cell.end()) os << io::fmt(it->second->residual);
            os << "," << io::fmt(rec.gap) << ",";
            if (k < rec.m_k.size()) os << io::fmt(rec.m_k[k]);
            os << "\n";
        }
    }
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace fedlab::theory
