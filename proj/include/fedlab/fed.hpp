#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fedlab/dataset.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::fed {

enum class Method { fedavg, fedprox, fedavgm };

// Substream purposes under FedConfig::seed. Model init draws from
// (seed, kStreamInit); round r sampling from (seed, stream_key({kStreamSampling, r}));
// client c's shuffling in round r from (seed, stream_key({kStreamClient, r, c})).
inline constexpr uint64_t kStreamInit = 1;
inline constexpr uint64_t kStreamSampling = 2;
inline constexpr uint64_t kStreamClient = 3;

struct FedConfig {
    size_t rounds = 30;
    size_t local_epochs = 10;
    size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double beta = 0.1;  // 0 disables the decorrelation term on any method
    Method method = Method::fedavg;
    double mu_prox = 1e-3;
    double rho_server = 0.5;
    double sample_fraction = 1.0;
    uint64_t seed = 1;
    size_t spectrum_every = 10;  // 0 disables per-round spectrum summaries
    double tau = 0.01;           // significance threshold for those summaries

    void validate() const;
};

struct ModelSpec {
    std::vector<size_t> hidden;  // hidden layer widths (may be empty)
    nn::Activation activation = nn::Activation::relu;
    bool bias = true;
};

struct SpectrumSummary {
    double effective_rank = 0.0;
    size_t n_significant = 0;
};

struct RoundReport {
    size_t round = 0;
    double accuracy = 0.0;
    std::vector<size_t> client_samples;  // per sampled client, in client order
    double mean_local_loss = 0.0;
    std::optional<SpectrumSummary> spectrum;
};

// ceil(fraction*K) distinct clients, uniform without replacement, ascending.
std::vector<size_t> sample_clients(size_t num_clients, double fraction, Rng& rng);

// Local SGD from a copy of the global weights; the momentum buffer starts at
// zero each round. Returns the trained copy and the sample-weighted mean of
// the per-minibatch objectives. Minibatches of size 1 skip the decorrelation
// term; a whole shard below 2 samples with beta > 0 is a configuration error.
std::pair<nn::Model, double> local_train(const nn::Model& global, const data::Dataset& ds,
                                         std::span<const size_t> shard, const FedConfig& cfg,
                                         Rng rng);

// Weighted parameter average. Computed as anchor + weighted mean of deltas
// against the first model, which makes the identity cases exact.
nn::Model aggregate_fedavg(const std::vector<nn::Model>& models,
                           const std::vector<double>& weights);

// delta = prev - aggregated; v <- rho*v + delta; new = prev - v.
std::pair<nn::Model, nn::Model> server_momentum_step(const nn::Model& prev_global,
                                                     const nn::Model& aggregated, double rho,
                                                     const nn::Model& buffer);

double evaluate_accuracy(const nn::Model& model, const data::Dataset& ds);

nn::Model zeros_like(const nn::Model& m);

struct FedRunResult {
    std::vector<RoundReport> reports;
    nn::Model global;
    // Final round's trained local models (for local-model spectra).
    std::vector<size_t> final_client_ids;
    std::vector<nn::Model> final_local_models;
};

// Deterministic given cfg.seed: substreams are keyed by purpose, round and
// client id, so results do not depend on the parallel schedule. Sampled
// clients train in parallel within a round.
FedRunResult run_federation(const FedConfig& cfg, const data::Dataset& train,
                            const data::Partition& partition, const data::Dataset& test,
                            const ModelSpec& spec);

}  // namespace fedlab::fed
