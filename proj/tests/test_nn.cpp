#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "fedlab/nn.hpp"

using namespace fedlab;
using namespace fedlab::nn;

namespace {

Batch random_batch(size_t d_in, size_t n, int classes, Rng& rng) {
    Batch b;
    b.x = Matrix(d_in, n);
    for (size_t i = 0; i < b.x.size(); ++i) b.x.data()[i] = rng.normal();
    b.labels.resize(n);
    for (size_t i = 0; i < n; ++i) b.labels[i] = static_cast<int>(rng.below(classes));
    b.num_classes = classes;
    return b;
}

double grad_norm(const Gradients& g) {
    double acc = 0.0;
    for (const Matrix& w : g.weights) acc += frob_norm(w) * frob_norm(w);
    for (const Matrix& b : g.biases) acc += frob_norm(b) * frob_norm(b);
    return std::sqrt(acc);
}

[[noreturn]] Matrix aborting_decorr_stub(const Matrix&, double) {
    std::fputs("decorr stub reached with beta == 0\n", stderr);
    std::abort();
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("softmax of identity model on (1,0)") {
    Model m;
    m.weights.push_back(Matrix::identity(2));
    const ForwardResult f = forward(m, Matrix{{1.0}, {0.0}});
    const double e = std::exp(1.0);
    CHECK(f.probs(0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
    CHECK(f.probs(1, 0) == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));
}

TEST_CASE("zero weights give uniform softmax") {
    Model m;
    m.weights.emplace_back(4, 3);
    m.weights.emplace_back(5, 4);
    Rng rng(2);
    const Batch b = random_batch(3, 6, 5, rng);
    const ForwardResult f = forward(m, b.x);
    for (size_t j = 0; j < 6; ++j)
        for (size_t i = 0; i < 5; ++i) CHECK(f.probs(i, j) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax columns sum to one and ignore logit shifts") {
    Rng rng(3);
    Matrix logits(7, 9);
    for (size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal() * 10.0;
    const Matrix p = softmax_columns(logits);
    Matrix shifted = logits;
    for (size_t j = 0; j < shifted.cols(); ++j)
        for (size_t i = 0; i < shifted.rows(); ++i) shifted(i, j) += 123.456;
    const Matrix p2 = softmax_columns(shifted);
    for (size_t j = 0; j < p.cols(); ++j) {
        double sum = 0.0;
        for (size_t i = 0; i < p.rows(); ++i) {
            sum += p(i, j);
            REQUIRE(std::fabs(p(i, j) - p2(i, j)) < 1e-12);
        }
        REQUIRE(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("linear model representations equal the explicit product") {
    Rng rng(5);
    const std::vector<size_t> dims{4, 4, 4, 4, 3};  // three representation layers + head
    Model m = make_mlp(dims, Activation::none, false, rng);
    const Batch b = random_batch(4, 10, 3, rng);
    const ForwardResult f = forward(m, b.x);
    const Matrix pi = matmul(m.weights[2], matmul(m.weights[1], m.weights[0]));
    CHECK(max_abs(f.reps - matmul(pi, b.x)) < 1e-12);
}

TEST_CASE("cross entropy endpoints") {
    Matrix uniform(4, 6);
    for (size_t i = 0; i < uniform.size(); ++i) uniform.data()[i] = 0.25;
    std::vector<int> labels{0, 1, 2, 3, 0, 2};
    CHECK(cross_entropy(uniform, labels, Reduction::mean) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(cross_entropy(uniform, labels, Reduction::sum) ==
          doctest::Approx(6.0 * std::log(4.0)).epsilon(1e-12));

    Matrix sharp(2, 1);
    sharp(0, 0) = 1.0 - 1e-12;
    sharp(1, 0) = 1e-12;
    std::vector<int> y{0};
    CHECK(cross_entropy(sharp, y, Reduction::sum) < 1e-11);

    Matrix zerop(2, 1);
    zerop(1, 0) = 1.0;
    CHECK_THROWS_AS(cross_entropy(zerop, y, Reduction::sum), NumericalError);
}

TEST_CASE("prox anchored at current weights contributes nothing") {
    Rng rng(7);
    Model m = make_mlp({3, 5, 4}, Activation::relu, true, rng);
    const Batch b = random_batch(3, 8, 4, rng);
    ProxTerm prox{1e-3, m};
    const Gradients with = backward(m, b, 0.0, &prox, Reduction::mean);
    const Gradients without = backward(m, b, 0.0, nullptr, Reduction::mean);
    for (size_t i = 0; i < with.weights.size(); ++i)
        CHECK(max_abs(with.weights[i] - without.weights[i]) == 0.0);
}

TEST_CASE("perfectly predicted single sample has near-zero gradient") {
    Model m;
    m.weights.push_back(Matrix{{60.0, 0.0}, {0.0, 0.0}});
    Batch b;
    b.x = Matrix{{1.0}, {0.0}};
    b.labels = {0};
    b.num_classes = 2;
    const Gradients g = backward(m, b, 0.0, nullptr, Reduction::sum);
    CHECK(grad_norm(g) < 1e-9);
}

TEST_CASE("gradients match finite differences across configurations") {
    Rng rng(11);
    int done = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const bool relu = trial % 2 == 0;
        const bool bias = trial % 3 != 0;
        const bool prox_on = trial % 4 == 0;
        const double beta = (trial % 2 == 0) ? 0.1 : 0.0;
        const auto red = (trial % 5 == 0) ? Reduction::sum : Reduction::mean;
        const size_t d_in = 2 + rng.below(4);
        const size_t hidden = 2 + rng.below(5);
        const int classes = 2 + static_cast<int>(rng.below(3));
        Model m = make_mlp({d_in, hidden, static_cast<size_t>(classes)},
                           relu ? Activation::relu : Activation::none, bias, rng);
        const Batch b = random_batch(d_in, 3 + rng.below(8), classes, rng);
        ProxTerm prox;
        if (prox_on) {
            Rng arng(trial);
            prox.mu = 1e-2;
            prox.anchor = make_mlp({d_in, hidden, static_cast<size_t>(classes)},
                                   relu ? Activation::relu : Activation::none, bias, arng);
        }
        const double err = grad_check(m, b, beta, prox_on ? &prox : nullptr, red, 1e-5);
        REQUIRE(err < 1e-5);
        ++done;
    }
    CHECK(done == 24);
}

TEST_CASE("gradient check covers guarded constant representation dimensions") {
    Rng rng(13);
    Model m = make_mlp({4, 6, 3}, Activation::relu, true, rng);
    // Dead unit: the pre-activation stays well below zero for every sample,
    // so its representation dimension is a guarded constant and stays that
    // way under the finite-difference probes.
    m.biases[0](2, 0) = -5.0;
    const Batch b = random_batch(4, 8, 3, rng);
    const nn::ForwardResult f = forward(m, b.x);
    for (size_t j = 0; j < f.reps.cols(); ++j) REQUIRE(f.reps(2, j) == 0.0);
    CHECK(grad_check(m, b, 0.1, nullptr, Reduction::mean, 1e-5) < 1e-5);
}

TEST_CASE("grad_check rejects a zero step") {
    Rng rng(17);
    Model m = make_mlp({2, 3, 2}, Activation::none, false, rng);
    const Batch b = random_batch(2, 4, 2, rng);
    CHECK_THROWS_AS(grad_check(m, b, 0.0, nullptr, Reduction::mean, 0.0), InvalidArgumentError);
}

TEST_CASE("sgd update rules") {
    auto scalar_model = [](double w) {
        Model m;
        m.weights.push_back(Matrix{{w}});
        return m;
    };
    auto scalar_grad = [](double g) {
        Gradients gr;
        gr.weights.push_back(Matrix{{g}});
        return gr;
    };

    Model m = scalar_model(1.0);
    OptState st = make_opt_state(m, 0.1, 0.0, 0.0);
    sgd_step(m, scalar_grad(2.0), st);
    CHECK(m.weights[0](0, 0) == 0.8);

    m = scalar_model(1.0);
    st = make_opt_state(m, 1.0, 0.0, 0.1);
    sgd_step(m, scalar_grad(0.0), st);
    CHECK(m.weights[0](0, 0) == doctest::Approx(0.9).epsilon(1e-15));

    // Hand-iterated momentum: v1=1, w1=-1; v2=1.9, w2=-2.9.
    m = scalar_model(0.0);
    st = make_opt_state(m, 1.0, 0.9, 0.0);
    sgd_step(m, scalar_grad(1.0), st);
    CHECK(m.weights[0](0, 0) == doctest::Approx(-1.0));
    CHECK(st.vel_w[0](0, 0) == doctest::Approx(1.0));
    sgd_step(m, scalar_grad(1.0), st);
    CHECK(m.weights[0](0, 0) == doctest::Approx(-2.9));
    CHECK(st.vel_w[0](0, 0) == doctest::Approx(1.9));

    Gradients bad;
    bad.weights.push_back(Matrix{{1.0}});
    bad.weights[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(sgd_step(m, bad, st), NumericalError);
}

TEST_CASE("a small step does not increase the objective") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t d_in = 2 + rng.below(4);
        const int classes = 2 + static_cast<int>(rng.below(3));
        Model m = make_mlp({d_in, 5, static_cast<size_t>(classes)},
                           trial % 2 ? Activation::relu : Activation::none, true, rng);
        const Batch b = random_batch(d_in, 12, classes, rng);
        const double beta = trial % 3 ? 0.1 : 0.0;
        const double before = total_objective(m, b, beta, nullptr, Reduction::mean);
        const Gradients g = backward(m, b, beta, nullptr, Reduction::mean);
        OptState st = make_opt_state(m, 1e-4, 0.0, 0.0);
        sgd_step(m, g, st);
        const double after = total_objective(m, b, beta, nullptr, Reduction::mean);
        REQUIRE(after <= before + 1e-12);
    }
}

TEST_CASE("beta = 0 never touches the decorrelation module") {
    Rng rng(23);
    Model m = make_mlp({3, 4, 2}, Activation::relu, true, rng);
    const Batch b = random_batch(3, 6, 2, rng);
    const Gradients plain = backward(m, b, 0.0, nullptr, Reduction::mean);
    set_decorr_grad_impl(&aborting_decorr_stub);
    const Gradients stubbed = backward(m, b, 0.0, nullptr, Reduction::mean);
    set_decorr_grad_impl(nullptr);
    for (size_t i = 0; i < plain.weights.size(); ++i) {
        REQUIRE(plain.weights[i].same_shape(stubbed.weights[i]));
        for (size_t p = 0; p < plain.weights[i].size(); ++p)
            REQUIRE(plain.weights[i].data()[p] == stubbed.weights[i].data()[p]);
    }
}

TEST_CASE("checkpoint round trip") {
    Rng rng(29);
    const Model m = make_mlp({3, 5, 4}, Activation::relu, true, rng);
    const std::string path = "test_model_roundtrip.bin";
    save_model(m, path);
    const Model r = load_model(path);
    REQUIRE(r.depth() == m.depth());
    CHECK(r.activation == m.activation);
    CHECK(r.has_bias() == m.has_bias());
    for (size_t i = 0; i < m.depth(); ++i) {
        REQUIRE(r.weights[i].same_shape(m.weights[i]));
        for (size_t p = 0; p < m.weights[i].size(); ++p)
            REQUIRE(r.weights[i].data()[p] == m.weights[i].data()[p]);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_model("does_not_exist.bin"), IoError);
}

}  // TEST_SUITE
