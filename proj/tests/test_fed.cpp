#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "fedlab/fed.hpp"

using namespace fedlab;
using namespace fedlab::fed;

namespace {

data::Dataset tiny_dataset(int classes, size_t d_in, size_t per_class, uint64_t seed) {
    Rng rng(seed);
    return data::synth_dataset(classes, d_in, per_class, 3.0, rng);
}

nn::Model scalar_models(double v) {
    nn::Model m;
    m.weights.push_back(Matrix{{v}});
    return m;
}

bool models_identical(const nn::Model& a, const nn::Model& b) {
    if (a.depth() != b.depth() || a.has_bias() != b.has_bias()) return false;
    for (size_t i = 0; i < a.depth(); ++i) {
        if (!a.weights[i].same_shape(b.weights[i])) return false;
        for (size_t p = 0; p < a.weights[i].size(); ++p)
            if (a.weights[i].data()[p] != b.weights[i].data()[p]) return false;
        if (a.has_bias())
            for (size_t p = 0; p < a.biases[i].size(); ++p)
                if (a.biases[i].data()[p] != b.biases[i].data()[p]) return false;
    }
    return true;
}

uint64_t model_hash(const nn::Model& m) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](const Matrix& w) {
        for (size_t p = 0; p < w.size(); ++p) {
            uint64_t bits;
            std::memcpy(&bits, &w.data()[p], 8);
            h = (h ^ bits) * 1099511628211ull;
        }
    };
    for (const Matrix& w : m.weights) mix(w);
    for (const Matrix& b : m.biases) mix(b);
    return h;
}

FedConfig small_cfg() {
    FedConfig cfg;
    cfg.rounds = 3;
    cfg.local_epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 0.05;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-5;
    cfg.beta = 0.0;
    cfg.seed = 99;
    cfg.spectrum_every = 0;
    return cfg;
}

}  // namespace

TEST_SUITE("fed") {

TEST_CASE("sample_clients basics") {
    Rng rng(1);
    const auto all = sample_clients(10, 1.0, rng);
    REQUIRE(all.size() == 10);
    for (size_t i = 0; i < 10; ++i) CHECK(all[i] == i);

    const auto fifth = sample_clients(50, 0.2, rng);
    CHECK(fifth.size() == 10);
    CHECK(std::set<size_t>(fifth.begin(), fifth.end()).size() == 10);
    for (size_t c : fifth) CHECK(c < 50);

    Rng r1(7), r2(7);
    CHECK(sample_clients(20, 0.35, r1) == sample_clients(20, 0.35, r2));

    CHECK_THROWS_AS(sample_clients(5, 0.0, rng), InvalidArgumentError);
}

TEST_CASE("aggregate identity cases are exact") {
    Rng rng(3);
    nn::Model m = nn::make_mlp({3, 4, 2}, nn::Activation::relu, true, rng);
    // identical models, awkward weights
    const auto same = aggregate_fedavg({m, m, m}, {1.0, 3.0, 7.3});
    CHECK(models_identical(same, m));

    nn::Model m2 = nn::make_mlp({3, 4, 2}, nn::Activation::relu, true, rng);
    const auto first = aggregate_fedavg({m, m2}, {1.0, 0.0});
    CHECK(models_identical(first, m));

    const auto mean = aggregate_fedavg({scalar_models(0.0), scalar_models(2.0)}, {1.0, 1.0});
    CHECK(mean.weights[0](0, 0) == 1.0);

    CHECK_THROWS_AS(aggregate_fedavg({m, m}, {0.0, 0.0}), InvalidArgumentError);
    CHECK_THROWS_AS(aggregate_fedavg({m, scalar_models(1.0)}, {1.0, 1.0}),
                    InvalidArgumentError);
}

TEST_CASE("aggregate is the weighted convex combination") {
    Rng rng(5);
    std::vector<nn::Model> models;
    for (int i = 0; i < 3; ++i)
        models.push_back(nn::make_mlp({2, 3, 2}, nn::Activation::none, false, rng));
    const std::vector<double> w{2.0, 5.0, 3.0};
    const auto agg = aggregate_fedavg(models, w);
    for (size_t l = 0; l < agg.depth(); ++l)
        for (size_t p = 0; p < agg.weights[l].size(); ++p) {
            const double expect = (2.0 * models[0].weights[l].data()[p] +
                                   5.0 * models[1].weights[l].data()[p] +
                                   3.0 * models[2].weights[l].data()[p]) /
                                  10.0;
            REQUIRE(agg.weights[l].data()[p] == doctest::Approx(expect).epsilon(1e-14));
        }
}

TEST_CASE("server momentum reductions") {
    const auto prev = scalar_models(1.0);
    const auto agg = scalar_models(0.0);
    const auto zero = scalar_models(0.0);

    // rho = 0 reduces to the aggregate exactly.
    const auto [g0, v0] = server_momentum_step(prev, agg, 0.0, zero);
    CHECK(g0.weights[0](0, 0) == 0.0);

    // Round 0 with any rho lands on the aggregate too.
    const auto [g1, v1] = server_momentum_step(prev, agg, 0.5, zero);
    CHECK(g1.weights[0](0, 0) == 0.0);
    CHECK(v1.weights[0](0, 0) == 1.0);

    // Hand-iterated second round: delta2 = 0, v2 = 0.5, g2 = -0.5.
    const auto [g2, v2] = server_momentum_step(g1, scalar_models(0.0), 0.5, v1);
    CHECK(v2.weights[0](0, 0) == doctest::Approx(0.5));
    CHECK(g2.weights[0](0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("local_train leaves the global model untouched") {
    const data::Dataset ds = tiny_dataset(3, 6, 30, 21);
    const Rng prng(22);
    const data::Partition part = data::dirichlet_partition(ds.labels, 3, 3, 0.5, prng, 2);
    FedConfig cfg = small_cfg();
    cfg.beta = 0.1;
    Rng init(23, kStreamInit);
    const nn::Model global = nn::make_mlp({6, 8, 3}, nn::Activation::relu, true, init);
    const uint64_t before = model_hash(global);
    const auto [trained, loss] = local_train(global, ds, part.assignment[0], cfg, Rng(1, 2));
    CHECK(model_hash(global) == before);
    CHECK_FALSE(models_identical(trained, global));
    CHECK(std::isfinite(loss));
}

TEST_CASE("local_train with zero epochs is the identity") {
    const data::Dataset ds = tiny_dataset(2, 4, 10, 31);
    FedConfig cfg = small_cfg();
    cfg.local_epochs = 0;
    Rng init(5, kStreamInit);
    const nn::Model global = nn::make_mlp({4, 5, 2}, nn::Activation::relu, true, init);
    std::vector<size_t> shard{0, 1, 2, 10, 11};
    const auto [out, loss] = local_train(global, ds, shard, cfg, Rng(1, 2));
    CHECK(models_identical(out, global));
    CHECK(loss == 0.0);
}

TEST_CASE("local_train descends on a separable shard") {
    const data::Dataset ds = tiny_dataset(2, 6, 40, 41);
    FedConfig cfg = small_cfg();
    cfg.local_epochs = 10;
    cfg.lr = 0.01;
    cfg.beta = 0.0;
    std::vector<size_t> shard(ds.size());
    for (size_t i = 0; i < shard.size(); ++i) shard[i] = i;
    Rng init(7, kStreamInit);
    const nn::Model global = nn::make_mlp({6, 8, 2}, nn::Activation::relu, true, init);

    nn::Batch full;
    full.x = ds.features;
    full.labels = ds.labels;
    full.num_classes = 2;
    const double before = nn::total_objective(global, full, 0.0, nullptr, nn::Reduction::mean);
    const auto [trained, mean_loss] = local_train(global, ds, shard, cfg, Rng(1, 2));
    const double after = nn::total_objective(trained, full, 0.0, nullptr, nn::Reduction::mean);
    CHECK(after < before);
    CHECK(mean_loss < before);
}

TEST_CASE("beta > 0 on a singleton shard is a configuration error") {
    const data::Dataset ds = tiny_dataset(2, 4, 5, 51);
    FedConfig cfg = small_cfg();
    cfg.beta = 0.1;
    Rng init(9, kStreamInit);
    const nn::Model global = nn::make_mlp({4, 4, 2}, nn::Activation::relu, true, init);
    std::vector<size_t> shard{3};
    CHECK_THROWS_AS(local_train(global, ds, shard, cfg, Rng(1, 2)), InvalidArgumentError);
}

TEST_CASE("fedprox proximal pull is zero at the anchor on the first step") {
    // With mu > 0 and one sample batch = whole shard, the first gradient at
    // w = w_global matches plain SGD; divergence appears only later. Checked
    // here via one single-batch epoch producing identical first steps.
    const data::Dataset ds = tiny_dataset(2, 4, 3, 61);
    FedConfig plain = small_cfg();
    plain.local_epochs = 1;
    plain.batch_size = 16;  // single batch per epoch
    FedConfig proxed = plain;
    proxed.method = Method::fedprox;
    proxed.mu_prox = 1e-3;
    Rng init(11, kStreamInit);
    const nn::Model global = nn::make_mlp({4, 5, 2}, nn::Activation::relu, true, init);
    std::vector<size_t> shard{0, 1, 2, 3, 4, 5};
    const auto [a, la] = local_train(global, ds, shard, plain, Rng(2, 3));
    const auto [b, lb] = local_train(global, ds, shard, proxed, Rng(2, 3));
    CHECK(models_identical(a, b));
    CHECK(la == lb);
}

TEST_CASE("run_federation determinism and rounds=0") {
    const data::Dataset train = tiny_dataset(3, 6, 30, 71);
    const data::Dataset test = tiny_dataset(3, 6, 10, 72);
    const Rng prng(73);
    const data::Partition part = data::dirichlet_partition(train.labels, 3, 4, 0.5, prng, 2);
    ModelSpec spec{{8}, nn::Activation::relu, true};

    FedConfig cfg = small_cfg();
    cfg.rounds = 0;
    const auto empty = run_federation(cfg, train, part, test, spec);
    CHECK(empty.reports.empty());
    Rng init(cfg.seed, kStreamInit);
    const nn::Model fresh = nn::make_mlp({6, 8, 3}, nn::Activation::relu, true, init);
    CHECK(models_identical(empty.global, fresh));

    cfg.rounds = 3;
    cfg.beta = 0.1;
    const auto r1 = run_federation(cfg, train, part, test, spec);
    const auto r2 = run_federation(cfg, train, part, test, spec);
    REQUIRE(r1.reports.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(r1.reports[i].accuracy == r2.reports[i].accuracy);
        CHECK(r1.reports[i].mean_local_loss == r2.reports[i].mean_local_loss);
        CHECK(r1.reports[i].client_samples == r2.reports[i].client_samples);
    }
    CHECK(models_identical(r1.global, r2.global));
    REQUIRE(r1.final_local_models.size() == part.assignment.size());
}

TEST_CASE("single-client federation equals centralized SGD bitwise") {
    const data::Dataset train = tiny_dataset(3, 5, 20, 81);
    const data::Dataset test = tiny_dataset(3, 5, 8, 82);
    const Rng prng(83);
    const data::Partition part =
        data::dirichlet_partition(train.labels, 3, 1, data::kAlphaUniform, prng);
    ModelSpec spec{{7}, nn::Activation::relu, true};
    FedConfig cfg = small_cfg();
    cfg.rounds = 4;
    cfg.local_epochs = 3;
    cfg.batch_size = 8;
    cfg.beta = 0.1;
    const auto fed_run = run_federation(cfg, train, part, test, spec);

    // Centralized replica: same init stream, same per-round shuffle streams,
    // fresh momentum at round boundaries.
    Rng init(cfg.seed, kStreamInit);
    nn::Model model = nn::make_mlp({5, 7, 3}, nn::Activation::relu, true, init);
    for (size_t round = 0; round < cfg.rounds; ++round) {
        Rng shuffle_rng(cfg.seed, stream_key({kStreamClient, round, 0}));
        nn::OptState opt = nn::make_opt_state(model, cfg.lr, cfg.momentum, cfg.weight_decay);
        std::vector<size_t> order = part.assignment[0];
        for (size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const size_t nb = std::min(cfg.batch_size, order.size() - start);
                nn::Batch batch;
                batch.x = gather_columns(train.features, {order.data() + start, nb});
                for (size_t i = 0; i < nb; ++i)
                    batch.labels.push_back(train.labels[order[start + i]]);
                batch.num_classes = train.num_classes;
                const double beta = nb >= 2 ? cfg.beta : 0.0;
                const auto g = nn::backward(model, batch, beta, nullptr, nn::Reduction::mean);
                nn::sgd_step(model, g, opt);
            }
        }
    }
    CHECK(models_identical(fed_run.global, model));
}

TEST_CASE("fedavgm run moves differently from fedavg but stays finite") {
    const data::Dataset train = tiny_dataset(3, 5, 20, 91);
    const data::Dataset test = tiny_dataset(3, 5, 8, 92);
    const Rng prng(93);
    const data::Partition part = data::dirichlet_partition(train.labels, 3, 3, 0.3, prng, 2);
    ModelSpec spec{{6}, nn::Activation::relu, true};
    FedConfig cfg = small_cfg();
    cfg.rounds = 3;
    const auto avg = run_federation(cfg, train, part, test, spec);
    cfg.method = Method::fedavgm;
    cfg.rho_server = 0.5;
    const auto avgm = run_federation(cfg, train, part, test, spec);
    CHECK_FALSE(models_identical(avg.global, avgm.global));
    for (const auto& rep : avgm.reports) CHECK(std::isfinite(rep.accuracy));
}

TEST_CASE("config validation") {
    FedConfig cfg = small_cfg();
    cfg.method = Method::fedprox;
    cfg.mu_prox = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = small_cfg();
    cfg.method = Method::fedavgm;
    cfg.rho_server = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = small_cfg();
    cfg.sample_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
    cfg = small_cfg();
    cfg.beta = -0.1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
}

}  // TEST_SUITE
