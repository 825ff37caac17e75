#include "fedlab/fed.hpp"

#include <algorithm>
#include <cmath>

#include "fedlab/analysis.hpp"

namespace fedlab::fed {

namespace {

void check_model_finite(const nn::Model& m, const char* what, size_t round) {
    for (const Matrix& w : m.weights)
        if (!all_finite(w))
            throw NumericalError(std::string(what) + ": non-finite weights at round " +
                                 std::to_string(round));
    for (const Matrix& b : m.biases)
        if (!all_finite(b))
            throw NumericalError(std::string(what) + ": non-finite weights at round " +
                                 std::to_string(round));
}

}  // namespace

void FedConfig::validate() const {
    if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
        throw InvalidArgumentError("fed: sample_fraction must be in (0, 1]");
    if (beta < 0.0) throw InvalidArgumentError("fed: beta must be >= 0");
    if (method == Method::fedprox && !(mu_prox > 0.0))
        throw InvalidArgumentError("fed: method fedprox requires mu_prox > 0");
    if (method == Method::fedavgm && !(rho_server >= 0.0 && rho_server < 1.0))
        throw InvalidArgumentError("fed: method fedavgm requires rho_server in [0, 1)");
    if (batch_size < 1) throw InvalidArgumentError("fed: batch_size must be >= 1");
    if (!(lr > 0.0)) throw InvalidArgumentError("fed: lr must be > 0");
}

std::vector<size_t> sample_clients(size_t num_clients, double fraction, Rng& rng) {
    if (!(fraction > 0.0))
        throw InvalidArgumentError("sample_clients: fraction must be positive");
    fraction = std::min(fraction, 1.0);
    const size_t want = std::min<size_t>(
        num_clients, static_cast<size_t>(std::ceil(fraction * static_cast<double>(num_clients))));
    // Partial Fisher-Yates over the index pool.
    std::vector<size_t> pool(num_clients);
    for (size_t i = 0; i < num_clients; ++i) pool[i] = i;
    for (size_t i = 0; i < want; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(num_clients - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<size_t> out(pool.begin(), pool.begin() + static_cast<long>(want));
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<nn::Model, double> local_train(const nn::Model& global, const data::Dataset& ds,
                                         std::span<const size_t> shard, const FedConfig& cfg,
                                         Rng rng) {
    if (shard.empty()) throw InvalidArgumentError("local_train: empty shard");
    if (cfg.beta > 0.0 && shard.size() < 2)
        throw InvalidArgumentError(
            "local_train: decorrelation needs at least 2 samples in the shard");

    nn::Model model = global;
    nn::OptState opt = nn::make_opt_state(model, cfg.lr, cfg.momentum, cfg.weight_decay);
    nn::ProxTerm prox;
    const bool use_prox = cfg.method == Method::fedprox;
    if (use_prox) {
        prox.mu = cfg.mu_prox;
        prox.anchor = global;
    }

    std::vector<size_t> order(shard.begin(), shard.end());
    double loss_acc = 0.0;
    size_t loss_n = 0;
    for (size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t nb = std::min(cfg.batch_size, order.size() - start);
            nn::Batch batch;
            batch.x = gather_columns(ds.features, {order.data() + start, nb});
            batch.labels.resize(nb);
            for (size_t i = 0; i < nb; ++i) batch.labels[i] = ds.labels[order[start + i]];
            batch.num_classes = ds.num_classes;

            const double beta = nb >= 2 ? cfg.beta : 0.0;  // ragged singleton skips the term
            loss_acc += nn::total_objective(model, batch, beta, use_prox ? &prox : nullptr,
                                            nn::Reduction::mean) *
                        static_cast<double>(nb);
            loss_n += nb;
            const nn::Gradients g =
                nn::backward(model, batch, beta, use_prox ? &prox : nullptr, nn::Reduction::mean);
            nn::sgd_step(model, g, opt);
        }
    }
    const double mean_loss = loss_n ? loss_acc / static_cast<double>(loss_n) : 0.0;
    return {std::move(model), mean_loss};
}

nn::Model aggregate_fedavg(const std::vector<nn::Model>& models,
                           const std::vector<double>& weights) {
    if (models.empty() || models.size() != weights.size())
        throw InvalidArgumentError("aggregate_fedavg: need one weight per model");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InvalidArgumentError("aggregate_fedavg: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw InvalidArgumentError("aggregate_fedavg: all weights zero");

    const nn::Model& anchor = models[0];
    for (const nn::Model& m : models) {
        if (m.depth() != anchor.depth() || m.has_bias() != anchor.has_bias())
            throw InvalidArgumentError("aggregate_fedavg: model shapes differ");
        for (size_t i = 0; i < m.depth(); ++i)
            if (!m.weights[i].same_shape(anchor.weights[i]))
                throw InvalidArgumentError("aggregate_fedavg: model shapes differ");
    }

    // anchor + sum_i w_i*(m_i - anchor)/total: identical models and one-hot
    // weight vectors reproduce the input bitwise.
    nn::Model out = anchor;
    auto accumulate = [&](Matrix& dst, size_t layer, bool bias) {
        for (size_t p = 0; p < dst.size(); ++p) {
            double acc = 0.0;
            const double a = bias ? anchor.biases[layer].data()[p] : anchor.weights[layer].data()[p];
            for (size_t m = 1; m < models.size(); ++m) {
                const double v =
                    bias ? models[m].biases[layer].data()[p] : models[m].weights[layer].data()[p];
                acc += weights[m] * (v - a);
            }
            dst.data()[p] = a + acc / total;
        }
    };
    for (size_t i = 0; i < out.depth(); ++i) {
        accumulate(out.weights[i], i, false);
        if (out.has_bias()) accumulate(out.biases[i], i, true);
    }
    return out;
}

std::pair<nn::Model, nn::Model> server_momentum_step(const nn::Model& prev_global,
                                                     const nn::Model& aggregated, double rho,
                                                     const nn::Model& buffer) {
    if (prev_global.depth() != aggregated.depth() || prev_global.depth() != buffer.depth())
        throw InvalidArgumentError("server_momentum_step: shape mismatch");
    nn::Model next = prev_global;
    nn::Model vel = buffer;
    auto step_one = [&](Matrix& w, const Matrix& prev, const Matrix& agg, Matrix& v) {
        if (!prev.same_shape(agg) || !prev.same_shape(v))
            throw InvalidArgumentError("server_momentum_step: shape mismatch");
        for (size_t p = 0; p < w.size(); ++p) {
            // prev - (rho*v + delta) regrouped as agg - rho*v, which makes the
            // rho = 0 and zero-buffer cases land on the aggregate bitwise.
            w.data()[p] = agg.data()[p] - rho * v.data()[p];
            v.data()[p] = rho * v.data()[p] + (prev.data()[p] - agg.data()[p]);
        }
    };
    for (size_t i = 0; i < next.depth(); ++i)
        step_one(next.weights[i], prev_global.weights[i], aggregated.weights[i], vel.weights[i]);
    if (next.has_bias())
        for (size_t i = 0; i < next.depth(); ++i)
            step_one(next.biases[i], prev_global.biases[i], aggregated.biases[i], vel.biases[i]);
    return {std::move(next), std::move(vel)};
}

double evaluate_accuracy(const nn::Model& model, const data::Dataset& ds) {
    if (ds.size() == 0) throw InvalidArgumentError("evaluate_accuracy: empty dataset");
    const nn::ForwardResult f = nn::forward(model, ds.features);
    size_t correct = 0;
    for (size_t j = 0; j < ds.size(); ++j) {
        size_t arg = 0;
        for (size_t i = 1; i < f.logits.rows(); ++i)
            if (f.logits(i, j) > f.logits(arg, j)) arg = i;
        if (static_cast<int>(arg) == ds.labels[j]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

nn::Model zeros_like(const nn::Model& m) {
    nn::Model z = m;
    for (Matrix& w : z.weights) w *= 0.0;
    for (Matrix& b : z.biases) b *= 0.0;
    return z;
}

FedRunResult run_federation(const FedConfig& cfg, const data::Dataset& train,
                            const data::Partition& partition, const data::Dataset& test,
                            const ModelSpec& spec) {
    cfg.validate();
    for (const auto& shard : partition.assignment)
        for (size_t idx : shard)
            if (idx >= train.size())
                throw InvalidArgumentError("run_federation: partition index out of range");

    std::vector<size_t> dims;
    dims.push_back(train.dim());
    for (size_t h : spec.hidden) dims.push_back(h);
    dims.push_back(static_cast<size_t>(train.num_classes));

    Rng init_rng(cfg.seed, kStreamInit);
    nn::Model global = nn::make_mlp(dims, spec.activation, spec.bias, init_rng);
    nn::Model server_buf = zeros_like(global);

    FedRunResult result;
    const size_t num_clients = partition.assignment.size();

    for (size_t round = 0; round < cfg.rounds; ++round) {
        Rng sample_rng(cfg.seed, stream_key({kStreamSampling, round}));
        const std::vector<size_t> picked =
            sample_clients(num_clients, cfg.sample_fraction, sample_rng);

        std::vector<nn::Model> locals(picked.size());
        std::vector<double> losses(picked.size(), 0.0);
        std::vector<double> weights(picked.size(), 0.0);
        std::vector<std::exception_ptr> errors(picked.size());

#pragma omp parallel for schedule(dynamic)
        for (int64_t i = 0; i < static_cast<int64_t>(picked.size()); ++i) {
            try {
                const size_t client = picked[static_cast<size_t>(i)];
                Rng client_rng(cfg.seed, stream_key({kStreamClient, round, client}));
                auto [model, loss] =
                    local_train(global, train, partition.assignment[client], cfg, client_rng);
                locals[static_cast<size_t>(i)] = std::move(model);
                losses[static_cast<size_t>(i)] = loss;
                weights[static_cast<size_t>(i)] =
                    static_cast<double>(partition.assignment[client].size());
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
            }
        }
        // Exceptions cannot unwind through the parallel region; surface the
        // first one in client order so failures are schedule-independent.
        for (const auto& err : errors)
            if (err) std::rethrow_exception(err);

        for (size_t i = 0; i < locals.size(); ++i)
            check_model_finite(locals[i], "run_federation: local model", round);

        nn::Model aggregated = aggregate_fedavg(locals, weights);
        if (cfg.method == Method::fedavgm) {
            auto [next, buf] = server_momentum_step(global, aggregated, cfg.rho_server, server_buf);
            global = std::move(next);
            server_buf = std::move(buf);
        } else {
            global = std::move(aggregated);
        }
        check_model_finite(global, "run_federation: global model", round);

        RoundReport rep;
        rep.round = round;
        rep.accuracy = evaluate_accuracy(global, test);
        double wsum = 0.0, lsum = 0.0;
        for (size_t i = 0; i < picked.size(); ++i) {
            rep.client_samples.push_back(static_cast<size_t>(weights[i]));
            lsum += losses[i] * weights[i];
            wsum += weights[i];
        }
        rep.mean_local_loss = wsum > 0.0 ? lsum / wsum : 0.0;
        if (cfg.spectrum_every > 0 &&
            ((round + 1) % cfg.spectrum_every == 0 || round + 1 == cfg.rounds)) {
            const Matrix cov = analysis::representation_covariance(global, test);
            const analysis::SpectrumReport sr = analysis::spectrum(cov, cfg.tau, "global", test.name);
            rep.spectrum = SpectrumSummary{sr.effective_rank, sr.n_significant};
        }
        result.reports.push_back(std::move(rep));

        if (round + 1 == cfg.rounds) {
            result.final_client_ids = picked;
            result.final_local_models = std::move(locals);
        }
    }
    result.global = std::move(global);
    return result;
}

}  // namespace fedlab::fed
