#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "fedlab/dataset.hpp"

using namespace fedlab;
using namespace fedlab::data;

namespace {

void write_be32(std::ofstream& os, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxPair {
    std::string images = "test_idx_images.bin";
    std::string labels = "test_idx_labels.bin";

    IdxPair(uint32_t img_magic, uint32_t n_img, uint32_t n_lab, bool truncate = false) {
        std::ofstream im(images, std::ios::binary);
        write_be32(im, img_magic);
        write_be32(im, n_img);
        write_be32(im, 2);
        write_be32(im, 2);
        const size_t pixels = truncate ? n_img * 4 - 2 : n_img * 4;
        for (size_t i = 0; i < pixels; ++i) {
            const unsigned char p = static_cast<unsigned char>(i == 0 ? 255 : i % 7);
            im.write(reinterpret_cast<const char*>(&p), 1);
        }
        std::ofstream la(labels, std::ios::binary);
        write_be32(la, 0x00000801);
        write_be32(la, n_lab);
        for (size_t i = 0; i < n_lab; ++i) {
            const unsigned char y = static_cast<unsigned char>(i % 3);
            la.write(reinterpret_cast<const char*>(&y), 1);
        }
    }
    ~IdxPair() {
        std::remove(images.c_str());
        std::remove(labels.c_str());
    }
};

double mean_max_proportion(const Partition& p) {
    double acc = 0.0;
    for (size_t c = 0; c < p.proportions.rows(); ++c) {
        double mx = 0.0;
        for (size_t k = 0; k < p.proportions.cols(); ++k)
            mx = std::max(mx, p.proportions(c, k));
        acc += mx;
    }
    return acc / static_cast<double>(p.proportions.rows());
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("synthetic dataset balance and determinism") {
    Rng a(42), b(42);
    const Dataset d1 = synth_dataset(2, 6, 5, 3.0, a);
    const Dataset d2 = synth_dataset(2, 6, 5, 3.0, b);
    REQUIRE(d1.size() == 10);
    int zeros = 0;
    for (int y : d1.labels)
        if (y == 0) ++zeros;
    CHECK(zeros == 5);
    for (size_t i = 0; i < d1.features.size(); ++i)
        REQUIRE(d1.features.data()[i] == d2.features.data()[i]);

    CHECK_THROWS_AS(synth_dataset(1, 4, 5, 1.0, a), InvalidArgumentError);
    CHECK_THROWS_AS(synth_dataset(3, 4, 0, 1.0, a), InvalidArgumentError);
}

TEST_CASE("synthetic class separation scales with spread") {
    Rng rng(1);
    const Dataset wide = synth_dataset(2, 8, 50, 6.0, rng);
    // Distance between empirical class means should be close to
    // spread * sqrt(2) for orthonormal directions.
    std::vector<double> m0(8, 0.0), m1(8, 0.0);
    for (size_t j = 0; j < wide.size(); ++j)
        for (size_t i = 0; i < 8; ++i)
            (wide.labels[j] == 0 ? m0 : m1)[i] += wide.features(i, j) / 50.0;
    double dist = 0.0;
    for (size_t i = 0; i < 8; ++i) dist += (m0[i] - m1[i]) * (m0[i] - m1[i]);
    dist = std::sqrt(dist);
    CHECK(dist == doctest::Approx(6.0 * std::sqrt(2.0)).epsilon(0.15));
}

TEST_CASE("idx loader happy path") {
    const IdxPair files(0x00000803, 5, 5);
    const Dataset ds = load_idx(files.images, files.labels);
    CHECK(ds.dim() == 4);
    CHECK(ds.size() == 5);
    CHECK(ds.features(0, 0) == 1.0);  // pixel 255 scales to exactly 1
    CHECK(ds.num_classes == 3);
    CHECK(ds.labels[1] == 1);
}

TEST_CASE("idx loader error paths") {
    {
        const IdxPair bad_magic(0x00000801, 3, 3);
        CHECK_THROWS_WITH_AS(load_idx(bad_magic.images, bad_magic.labels),
                             doctest::Contains("0x801"), FormatError);
    }
    {
        const IdxPair mismatch(0x00000803, 4, 5);
        CHECK_THROWS_AS(load_idx(mismatch.images, mismatch.labels), ConsistencyError);
    }
    {
        const IdxPair truncated(0x00000803, 4, 4, true);
        CHECK_THROWS_AS(load_idx(truncated.images, truncated.labels), IoError);
    }
    CHECK_THROWS_AS(load_idx("missing_a", "missing_b"), IoError);
}

TEST_CASE("partition with one client takes everything") {
    std::vector<int> labels{0, 1, 2, 0, 1, 2, 0};
    const Rng rng(5);
    const Partition p = dirichlet_partition(labels, 3, 1, 0.5, rng);
    REQUIRE(p.assignment.size() == 1);
    CHECK(p.assignment[0].size() == labels.size());
    for (size_t c = 0; c < 3; ++c) CHECK(p.proportions(c, 0) == doctest::Approx(1.0));
}

TEST_CASE("uniform sentinel deals classes evenly") {
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 20; ++i) labels.push_back(c);
    const Rng rng(6);
    const Partition p = dirichlet_partition(labels, 4, 5, kAlphaUniform, rng);
    for (const auto& shard : p.assignment) {
        CHECK(shard.size() == 16);  // 80 samples over 5 clients
        std::vector<int> counts(4, 0);
        for (size_t idx : shard) ++counts[labels[idx]];
        for (int c : counts) CHECK(c == 4);
    }
    for (size_t c = 0; c < 4; ++c) {
        double row = 0.0;
        for (size_t k = 0; k < 5; ++k) {
            CHECK(p.proportions(c, k) == doctest::Approx(0.2));
            row += p.proportions(c, k);
        }
        CHECK(std::fabs(row - 1.0) < 1e-12);
    }
}

TEST_CASE("partition is an exact cover") {
    Rng labels_rng(7);
    std::vector<int> labels(500);
    for (auto& y : labels) y = static_cast<int>(labels_rng.below(10));
    for (int c = 0; c < 10; ++c) labels[c] = c;  // every class present
    const Rng rng(8);
    const Partition p = dirichlet_partition(labels, 10, 7, 0.1, rng);
    std::set<size_t> seen;
    size_t total = 0;
    for (const auto& shard : p.assignment) {
        total += shard.size();
        for (size_t idx : shard) {
            REQUIRE(idx < labels.size());
            REQUIRE(seen.insert(idx).second);  // no duplicates across clients
        }
    }
    CHECK(total == labels.size());
    for (size_t c = 0; c < 10; ++c) {
        double row = 0.0;
        for (size_t k = 0; k < 7; ++k) row += p.proportions(c, k);
        REQUIRE(std::fabs(row - 1.0) < 1e-12);
    }
}

TEST_CASE("huge alpha concentrates near uniform") {
    std::vector<int> labels;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 1000; ++i) labels.push_back(c);
    const Rng rng(143);  // multinomial noise sits right at the bound; seed fixed
    const Partition p = dirichlet_partition(labels, 10, 10, 1e6, rng);
    std::vector<std::vector<size_t>> counts(10, std::vector<size_t>(10, 0));
    for (size_t k = 0; k < 10; ++k)
        for (size_t idx : p.assignment[k]) ++counts[labels[idx]][k];
    for (size_t c = 0; c < 10; ++c)
        for (size_t k = 0; k < 10; ++k) {
            const double emp = static_cast<double>(counts[c][k]) / 1000.0;
            REQUIRE(std::fabs(emp - 0.1) < 0.02);
        }
}

TEST_CASE("partition determinism") {
    std::vector<int> labels;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 30; ++i) labels.push_back(c);
    const Rng a(10), b(10);
    const Partition p1 = dirichlet_partition(labels, 5, 4, 0.2, a);
    const Partition p2 = dirichlet_partition(labels, 5, 4, 0.2, b);
    REQUIRE(p1.assignment == p2.assignment);
}

TEST_CASE("heterogeneity decreases with alpha") {
    std::vector<int> labels;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 40; ++i) labels.push_back(c);
    const double alphas[] = {0.05, 0.1, 0.5, 1e6};
    double stats[4] = {};
    for (int a = 0; a < 4; ++a) {
        for (uint64_t seed = 0; seed < 20; ++seed) {
            const Rng rng(seed * 31 + 1);
            stats[a] += mean_max_proportion(
                dirichlet_partition(labels, 10, 8, alphas[a], rng));
        }
        stats[a] /= 20.0;
    }
    CHECK(stats[0] >= stats[1]);
    CHECK(stats[1] >= stats[2]);
    CHECK(stats[2] >= stats[3]);
}

TEST_CASE("partition validation") {
    std::vector<int> labels{0, 1};
    const Rng rng(11);
    CHECK_THROWS_AS(dirichlet_partition(labels, 2, 0, 0.5, rng), InvalidArgumentError);
    CHECK_THROWS_AS(dirichlet_partition(labels, 2, 3, 0.5, rng, 1), InvalidArgumentError);
    CHECK_THROWS_AS(dirichlet_partition(labels, 2, 1, -1.0, rng), InvalidArgumentError);
    const std::vector<int> missing{0, 0, 2};
    CHECK_THROWS_AS(dirichlet_partition(missing, 3, 1, 0.5, rng), InvalidArgumentError);
}

TEST_CASE("partition json export") {
    std::vector<int> labels{0, 1, 0, 1};
    const Rng rng(12);
    const Partition p = dirichlet_partition(labels, 2, 2, kAlphaUniform, rng);
    const std::string js = partition_to_json(p);
    CHECK(js.find("\"alpha\":\"inf\"") != std::string::npos);
    CHECK(js.find("\"K\":2") != std::string::npos);
    CHECK(js.find("\"assignment\":[[") != std::string::npos);
}

}  // TEST_SUITE
