#include "fedlab/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fedlab/decorr.hpp"

namespace fedlab::nn {

namespace {

DecorrGradFn g_decorr_grad = nullptr;

Matrix decorr_grad(const Matrix& reps_rows, double eps) {
    if (g_decorr_grad) return g_decorr_grad(reps_rows, eps);
    return decorr::feddecorr_grad(reps_rows, eps);
}

// Linear layer outputs for every layer: pre[i] = W_i * post[i-1] (+ b_i),
// post[i] = act(pre[i]) for i < L, post[L] = pre[L] (head has no activation).
struct Trace {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};

Matrix apply_layer(const Model& m, size_t i, const Matrix& input) {
    Matrix out = matmul(m.weights[i], input);
    if (m.has_bias()) {
        const Matrix& b = m.biases[i];
        for (size_t r = 0; r < out.rows(); ++r)
            for (size_t c = 0; c < out.cols(); ++c) out(r, c) += b(r, 0);
    }
    return out;
}

Trace forward_trace(const Model& m, const Matrix& x) {
    if (m.depth() == 0) throw InvalidArgumentError("forward: model has no layers");
    if (m.weights[0].cols() != x.rows())
        throw InvalidArgumentError("forward: input dimension mismatch");
    Trace t;
    t.pre.reserve(m.depth());
    t.post.reserve(m.depth());
    const Matrix* cur = &x;
    for (size_t i = 0; i < m.depth(); ++i) {
        t.pre.push_back(apply_layer(m, i, *cur));
        Matrix post = t.pre.back();
        if (m.activation == Activation::relu && i + 1 < m.depth()) {
            for (size_t p = 0; p < post.size(); ++p)
                if (post.data()[p] < 0.0) post.data()[p] = 0.0;
        }
        t.post.push_back(std::move(post));
        cur = &t.post.back();
    }
    return t;
}

Matrix one_hot(const std::vector<int>& labels, int num_classes) {
    Matrix y(static_cast<size_t>(num_classes), labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw InvalidArgumentError("labels out of range");
        y(static_cast<size_t>(labels[i]), i) = 1.0;
    }
    return y;
}

double prox_objective(const Model& m, const ProxTerm& prox) {
    double acc = 0.0;
    for (size_t i = 0; i < m.depth(); ++i) {
        const Matrix d = m.weights[i] - prox.anchor.weights[i];
        acc += frob_norm(d) * frob_norm(d);
        if (m.has_bias()) {
            const Matrix db = m.biases[i] - prox.anchor.biases[i];
            acc += frob_norm(db) * frob_norm(db);
        }
    }
    return 0.5 * prox.mu * acc;
}

}  // namespace

void set_decorr_grad_impl(DecorrGradFn fn) { g_decorr_grad = fn; }

Model make_mlp(const std::vector<size_t>& dims, Activation act, bool bias, Rng& rng) {
    if (dims.size() < 2) throw InvalidArgumentError("make_mlp: need at least two dims");
    Model m;
    m.activation = act;
    for (size_t i = 1; i < dims.size(); ++i) {
        const size_t out = dims[i], in = dims[i - 1];
        if (out == 0 || in == 0) throw InvalidArgumentError("make_mlp: zero dimension");
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Matrix w(out, in);
        for (size_t p = 0; p < w.size(); ++p)
            w.data()[p] = (2.0 * rng.uniform() - 1.0) * bound;
        m.weights.push_back(std::move(w));
        if (bias) {
            Matrix b(out, 1);
            for (size_t p = 0; p < b.size(); ++p)
                b.data()[p] = (2.0 * rng.uniform() - 1.0) * bound;
            m.biases.push_back(std::move(b));
        }
    }
    return m;
}

Matrix softmax_columns(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (size_t j = 0; j < logits.cols(); ++j) {
        double mx = logits(0, j);
        for (size_t i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (size_t i = 0; i < logits.rows(); ++i) {
            const double e = std::exp(logits(i, j) - mx);
            p(i, j) = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (size_t i = 0; i < logits.rows(); ++i) p(i, j) *= inv;
    }
    return p;
}

ForwardResult forward(const Model& model, const Matrix& x) {
    Trace t = forward_trace(model, x);
    ForwardResult r;
    // A head-only model's representations are the raw inputs.
    r.reps = model.depth() >= 2 ? t.post[model.rep_depth() - 1] : x;
    r.logits = t.post.back();
    r.probs = softmax_columns(r.logits);
    return r;
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels, Reduction red) {
    if (probs.cols() != labels.size())
        throw InvalidArgumentError("cross_entropy: label count mismatch");
    double loss = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<size_t>(y) >= probs.rows())
            throw InvalidArgumentError("cross_entropy: label out of range");
        const double p = probs(static_cast<size_t>(y), i);
        if (p <= 0.0)
            throw NumericalError("cross_entropy: zero probability at a labeled position");
        loss -= std::log(p);
    }
    if (red == Reduction::mean) loss /= static_cast<double>(labels.size());
    return loss;
}

Gradients backward(const Model& model, const Batch& batch, double beta,
                   const ProxTerm* prox, Reduction red) {
    if (beta < 0.0) throw InvalidArgumentError("backward: beta must be >= 0");
    const size_t n = batch.size();
    if (n == 0) throw InvalidArgumentError("backward: empty batch");
    const size_t depth = model.depth();
    Trace t = forward_trace(model, batch.x);
    const Matrix probs = softmax_columns(t.post.back());
    cross_entropy(probs, batch.labels, red);  // surfaces domain errors

    // d(CE)/d(logits) = (probs - Y), scaled by 1/N under mean reduction.
    Matrix delta = probs - one_hot(batch.labels, batch.num_classes);
    if (red == Reduction::mean) delta *= 1.0 / static_cast<double>(n);

    Gradients g;
    g.weights.resize(depth);
    if (model.has_bias()) g.biases.resize(depth);

    for (size_t i = depth; i-- > 0;) {
        const Matrix& input = (i == 0) ? batch.x : t.post[i - 1];
        g.weights[i] = matmul_a_bt(delta, input);
        if (model.has_bias()) {
            Matrix db(delta.rows(), 1);
            for (size_t r = 0; r < delta.rows(); ++r) {
                double s = 0.0;
                for (size_t c = 0; c < delta.cols(); ++c) s += delta(r, c);
                db(r, 0) = s;
            }
            g.biases[i] = std::move(db);
        }
        if (i == 0) break;
        delta = matmul_at_b(model.weights[i], delta);
        // The decorrelation term attaches at the representation layer output.
        if (i == depth - 1 && beta > 0.0 && n >= 2) {
            const Matrix reps_rows = transpose(t.post[i - 1]);
            const Matrix dz = decorr_grad(reps_rows, decorr::kEpsGuard);
            const Matrix dzt = transpose(dz);
            for (size_t p = 0; p < delta.size(); ++p)
                delta.data()[p] += beta * dzt.data()[p];
        }
        if (model.activation == Activation::relu) {
            const Matrix& pre = t.pre[i - 1];
            for (size_t p = 0; p < delta.size(); ++p)
                if (pre.data()[p] <= 0.0) delta.data()[p] = 0.0;
        }
    }

    if (prox) {
        if (prox->anchor.depth() != depth)
            throw InvalidArgumentError("backward: prox anchor shape mismatch");
        for (size_t i = 0; i < depth; ++i) {
            if (!prox->anchor.weights[i].same_shape(model.weights[i]))
                throw InvalidArgumentError("backward: prox anchor shape mismatch");
            Matrix dw = model.weights[i] - prox->anchor.weights[i];
            dw *= prox->mu;
            g.weights[i] += dw;
            if (model.has_bias()) {
                Matrix db = model.biases[i] - prox->anchor.biases[i];
                db *= prox->mu;
                g.biases[i] += db;
            }
        }
    }
    return g;
}

double total_objective(const Model& model, const Batch& batch, double beta,
                       const ProxTerm* prox, Reduction red) {
    const ForwardResult f = forward(model, batch.x);
    double loss = cross_entropy(f.probs, batch.labels, red);
    // The regularizer acts on learned representations; head-only models have
    // none, matching the attach point in backward().
    if (beta > 0.0 && batch.size() >= 2 && model.depth() >= 2)
        loss += beta * decorr::feddecorr_loss(transpose(f.reps), decorr::kEpsGuard);
    if (prox) loss += prox_objective(model, *prox);
    return loss;
}

OptState make_opt_state(const Model& model, double lr, double momentum, double weight_decay) {
    OptState st;
    st.lr = lr;
    st.momentum = momentum;
    st.weight_decay = weight_decay;
    for (const Matrix& w : model.weights) st.vel_w.emplace_back(w.rows(), w.cols());
    if (model.has_bias())
        for (const Matrix& b : model.biases) st.vel_b.emplace_back(b.rows(), b.cols());
    return st;
}

void sgd_step(Model& model, const Gradients& grads, OptState& state) {
    if (grads.weights.size() != model.depth() || state.vel_w.size() != model.depth())
        throw InvalidArgumentError("sgd_step: shape mismatch");
    auto step_one = [&](Matrix& w, const Matrix& g, Matrix& v) {
        if (!w.same_shape(g) || !w.same_shape(v))
            throw InvalidArgumentError("sgd_step: shape mismatch");
        for (size_t p = 0; p < w.size(); ++p) {
            const double gp = g.data()[p];
            if (!std::isfinite(gp)) throw NumericalError("sgd_step: non-finite gradient");
            const double vp = state.momentum * v.data()[p] + gp + state.weight_decay * w.data()[p];
            v.data()[p] = vp;
            w.data()[p] -= state.lr * vp;
        }
    };
    for (size_t i = 0; i < model.depth(); ++i) step_one(model.weights[i], grads.weights[i], state.vel_w[i]);
    if (model.has_bias())
        for (size_t i = 0; i < model.depth(); ++i) step_one(model.biases[i], grads.biases[i], state.vel_b[i]);
}

double grad_check(const Model& model, const Batch& batch, double beta,
                  const ProxTerm* prox, Reduction red, double eps) {
    if (!(eps > 0.0)) throw InvalidArgumentError("grad_check: eps must be > 0");
    const Gradients g = backward(model, batch, beta, prox, red);
    Model probe = model;
    double worst = 0.0;
    auto check_param = [&](Matrix& w, const Matrix& ga) {
        for (size_t p = 0; p < w.size(); ++p) {
            const double saved = w.data()[p];
            w.data()[p] = saved + eps;
            const double lp = total_objective(probe, batch, beta, prox, red);
            w.data()[p] = saved - eps;
            const double lm = total_objective(probe, batch, beta, prox, red);
            w.data()[p] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = ga.data()[p];
            const double rel = std::fabs(an - fd) / std::max(1e-8, std::fabs(an) + std::fabs(fd));
            worst = std::max(worst, rel);
        }
    };
    for (size_t i = 0; i < probe.depth(); ++i) check_param(probe.weights[i], g.weights[i]);
    if (probe.has_bias())
        for (size_t i = 0; i < probe.depth(); ++i) check_param(probe.biases[i], g.biases[i]);
    return worst;
}

namespace {

constexpr char kMagic[8] = {'F', 'L', 'M', 'O', 'D', 'L', '0', '1'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("model file truncated");
    return v;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_raw<uint32_t>(os, static_cast<uint32_t>(model.depth()));
    write_raw<uint8_t>(os, model.activation == Activation::relu ? 1 : 0);
    write_raw<uint8_t>(os, model.has_bias() ? 1 : 0);
    for (const Matrix& w : model.weights) {
        write_raw<uint32_t>(os, static_cast<uint32_t>(w.rows()));
        write_raw<uint32_t>(os, static_cast<uint32_t>(w.cols()));
    }
    for (const Matrix& w : model.weights)
        os.write(reinterpret_cast<const char*>(w.data()),
                 static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (model.has_bias())
        for (const Matrix& b : model.biases)
            os.write(reinterpret_cast<const char*>(b.data()),
                     static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!os) throw IoError("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("not a model checkpoint: " + path);
    const auto depth = read_raw<uint32_t>(is);
    const auto act = read_raw<uint8_t>(is);
    const auto bias = read_raw<uint8_t>(is);
    if (depth == 0 || depth > 1024) throw FormatError("implausible layer count");
    Model m;
    m.activation = act ? Activation::relu : Activation::none;
    std::vector<std::pair<uint32_t, uint32_t>> shapes(depth);
    for (auto& sh : shapes) {
        sh.first = read_raw<uint32_t>(is);
        sh.second = read_raw<uint32_t>(is);
    }
    for (const auto& sh : shapes) {
        Matrix w(sh.first, sh.second);
        is.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(w.size() * sizeof(double)));
        if (!is) throw IoError("model file truncated: " + path);
        m.weights.push_back(std::move(w));
    }
    if (bias) {
        for (const auto& sh : shapes) {
            Matrix b(sh.first, 1);
            is.read(reinterpret_cast<char*>(b.data()),
                    static_cast<std::streamsize>(b.size() * sizeof(double)));
            if (!is) throw IoError("model file truncated: " + path);
            m.biases.push_back(std::move(b));
        }
    }
    return m;
}

}  // namespace fedlab::nn
