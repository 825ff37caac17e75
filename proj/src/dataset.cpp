#include "fedlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "fedlab/linalg.hpp"

namespace fedlab::data {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_be32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("truncated file: " + path);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::string hex32(uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

}  // namespace

Dataset synth_dataset(int num_classes, size_t d_in, size_t n_per_class, double spread, Rng& rng) {
    if (num_classes < 2) throw InvalidArgumentError("synth_dataset: need at least 2 classes");
    if (d_in < 1 || n_per_class < 1) throw InvalidArgumentError("synth_dataset: invalid sizes");

    const size_t c = static_cast<size_t>(num_classes);
    // Class directions: orthonormal when the ambient dimension allows it,
    // otherwise normalized Gaussian draws.
    Matrix means(d_in, c);
    if (d_in >= c) {
        const Matrix q = random_orthogonal(d_in, rng);
        for (size_t j = 0; j < c; ++j)
            for (size_t i = 0; i < d_in; ++i) means(i, j) = q(i, j);
    } else {
        for (size_t j = 0; j < c; ++j) {
            double n2 = 0.0;
            for (size_t i = 0; i < d_in; ++i) {
                means(i, j) = rng.normal();
                n2 += means(i, j) * means(i, j);
            }
            const double inv = 1.0 / std::sqrt(n2);
            for (size_t i = 0; i < d_in; ++i) means(i, j) *= inv;
        }
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.name = "synthetic";
    ds.features = Matrix(d_in, c * n_per_class);
    ds.labels.resize(c * n_per_class);
    size_t col = 0;
    for (size_t cls = 0; cls < c; ++cls) {
        for (size_t s = 0; s < n_per_class; ++s, ++col) {
            for (size_t i = 0; i < d_in; ++i)
                ds.features(i, col) = spread * means(i, cls) + rng.normal();
            ds.labels[col] = static_cast<int>(cls);
        }
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open: " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot open: " + labels_path);

    const uint32_t im = read_be32(imgs, images_path);
    if (im != kImagesMagic)
        throw FormatError("bad images magic " + hex32(im) + " in " + images_path);
    const uint32_t lm = read_be32(labs, labels_path);
    if (lm != kLabelsMagic)
        throw FormatError("bad labels magic " + hex32(lm) + " in " + labels_path);

    const uint32_t n_imgs = read_be32(imgs, images_path);
    const uint32_t rows = read_be32(imgs, images_path);
    const uint32_t cols = read_be32(imgs, images_path);
    const uint32_t n_labs = read_be32(labs, labels_path);
    if (n_imgs != n_labs)
        throw ConsistencyError("image/label counts differ: " + std::to_string(n_imgs) + " vs " +
                               std::to_string(n_labs));
    const size_t dim = size_t(rows) * size_t(cols);
    if (n_imgs == 0 || dim == 0) throw FormatError("empty IDX pair");

    std::vector<unsigned char> buf(dim);
    Dataset ds;
    ds.name = "idx";
    ds.features = Matrix(dim, n_imgs);
    ds.labels.resize(n_imgs);
    int max_label = 0;
    for (uint32_t s = 0; s < n_imgs; ++s) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        if (!imgs) throw IoError("truncated file: " + images_path);
        for (size_t i = 0; i < dim; ++i)
            ds.features(i, s) = static_cast<double>(buf[i]) / 255.0;
        unsigned char y;
        labs.read(reinterpret_cast<char*>(&y), 1);
        if (!labs) throw IoError("truncated file: " + labels_path);
        ds.labels[s] = static_cast<int>(y);
        max_label = std::max(max_label, static_cast<int>(y));
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Partition dirichlet_partition(const std::vector<int>& labels, int num_classes,
                              size_t num_clients, double alpha, const Rng& rng,
                              size_t min_size) {
    if (num_clients < 1) throw InvalidArgumentError("dirichlet_partition: need K >= 1");
    if (min_size < 1) throw InvalidArgumentError("dirichlet_partition: min_size must be >= 1");
    if (!(alpha > 0.0))
        throw InvalidArgumentError("dirichlet_partition: alpha must be > 0 (or infinity)");
    const size_t n = labels.size();
    if (min_size * num_clients > n)
        throw InvalidArgumentError("dirichlet_partition: min_size * K exceeds sample count");

    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw InvalidArgumentError("dirichlet_partition: label out of range");
        by_class[static_cast<size_t>(labels[i])].push_back(i);
    }
    for (size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].empty())
            throw InvalidArgumentError("dirichlet_partition: class " + std::to_string(c) +
                                       " has no samples");

    const bool uniform = std::isinf(alpha);
    for (uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng draw = rng.fork(attempt);
        Partition p;
        p.alpha = alpha;
        p.num_clients = num_clients;
        p.seed = rng.seed();
        p.assignment.assign(num_clients, {});
        p.proportions = Matrix(static_cast<size_t>(num_classes), num_clients);

        for (size_t c = 0; c < by_class.size(); ++c) {
            std::vector<double> pc(num_clients);
            if (uniform) {
                for (double& v : pc) v = 1.0 / static_cast<double>(num_clients);
            } else {
                double sum = 0.0;
                for (double& v : pc) {
                    v = draw.gamma(alpha);
                    sum += v;
                }
                if (sum <= 0.0)  // all draws underflowed to zero
                    for (double& v : pc) v = 1.0 / static_cast<double>(num_clients);
                else
                    for (double& v : pc) v /= sum;
            }
            for (size_t k = 0; k < num_clients; ++k) p.proportions(c, k) = pc[k];

            if (uniform) {
                // Deal evenly after a shuffle; rotate the starting client per
                // class so remainders spread across clients.
                std::vector<size_t> order = by_class[c];
                draw.shuffle(order);
                for (size_t s = 0; s < order.size(); ++s)
                    p.assignment[(s + c) % num_clients].push_back(order[s]);
            } else {
                for (size_t idx : by_class[c]) {
                    const double u = draw.uniform();
                    double acc = 0.0;
                    size_t k = num_clients - 1;
                    for (size_t j = 0; j < num_clients; ++j) {
                        acc += pc[j];
                        if (u < acc) {
                            k = j;
                            break;
                        }
                    }
                    p.assignment[k].push_back(idx);
                }
            }
        }

        bool ok = true;
        for (const auto& shard : p.assignment)
            if (shard.size() < min_size) ok = false;
        if (!ok) continue;
        for (auto& shard : p.assignment) std::sort(shard.begin(), shard.end());
        return p;
    }
    throw InvalidArgumentError(
        "dirichlet_partition: could not satisfy min_size after 100 redraws");
}

std::string partition_to_json(const Partition& p) {
    std::ostringstream os;
    os << "{\"alpha\":";
    if (std::isinf(p.alpha))
        os << "\"inf\"";
    else
        os << p.alpha;
    os << ",\"K\":" << p.num_clients << ",\"seed\":" << p.seed << ",\"assignment\":[";
    for (size_t k = 0; k < p.assignment.size(); ++k) {
        if (k) os << ",";
        os << "[";
        for (size_t i = 0; i < p.assignment[k].size(); ++i) {
            if (i) os << ",";
            os << p.assignment[k][i];
        }
        os << "]";
    }
    os << "]}";
    return os.str();
}

}  // namespace fedlab::data
