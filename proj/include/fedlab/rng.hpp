#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "fedlab/error.hpp"

namespace fedlab {

// Derives a stream id from a list of integer key parts (round, client id, ...).
// Pure integer mixing, stable across platforms.
uint64_t stream_key(std::initializer_list<uint64_t> parts);

// xoshiro256++ keyed by (seed, stream). The raw 64-bit output sequence is a
// pure function of the key and uses only integer ops, so identical keys give
// identical sequences on every platform. Distinct stream ids give
// statistically independent substreams of the same seed.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0);

    uint64_t next_u64();

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    // Uniform integer in [0, n), unbiased via rejection. n must be >= 1.
    uint64_t below(uint64_t n);

    // Standard normal, Box-Muller (second value of each pair is cached).
    double normal();

    // Gamma(alpha, 1), Marsaglia-Tsang squeeze. alpha must be > 0.
    double gamma(double alpha);

    // Independent substream of the same seed.
    Rng fork(uint64_t id) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

private:
    uint64_t s_[4];
    uint64_t seed_;
    uint64_t stream_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedlab
