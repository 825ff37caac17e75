#pragma once

#include <limits>
#include <string>
#include <vector>

#include "fedlab/matrix.hpp"
#include "fedlab/rng.hpp"

namespace fedlab::data {

struct Dataset {
    Matrix features;  // d_in x N, samples as columns
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;

    size_t size() const { return labels.size(); }
    size_t dim() const { return features.rows(); }
};

// Gaussian mixture with class means at spread * m_c for fixed
// orthonormal-ish directions m_c; identity covariance, balanced labels.
Dataset synth_dataset(int num_classes, size_t d_in, size_t n_per_class, double spread, Rng& rng);

// IDX image/label pair (big-endian headers, magics 0x00000803 / 0x00000801).
// Pixels scaled to [0,1]; images flattened to columns.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// alpha == infinity selects exactly uniform proportions p_{c,k} = 1/K.
inline constexpr double kAlphaUniform = std::numeric_limits<double>::infinity();

struct Partition {
    std::vector<std::vector<size_t>> assignment;  // per-client sample indices
    Matrix proportions;                           // C x K, row c = p_c
    double alpha = kAlphaUniform;
    size_t num_clients = 0;
    uint64_t seed = 0;
};

// Per class c: draw p_c ~ Dir_K(alpha) (normalized Gamma draws) and assign
// each sample of class c to a client by a categorical draw over p_c. Under
// the uniform sentinel, class samples are dealt round-robin after a shuffle.
// Redraws the whole partition on the next substream when any client ends up
// below min_size (up to 100 retries).
Partition dirichlet_partition(const std::vector<int>& labels, int num_classes,
                              size_t num_clients, double alpha, const Rng& rng,
                              size_t min_size = 1);

std::string partition_to_json(const Partition& p);

}  // namespace fedlab::data
