#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedlab/fed.hpp"

namespace fedlab::config {

struct DatasetSection {
    std::string kind = "synthetic";  // synthetic | idx
    int classes = 10;
    size_t dim = 32;
    size_t per_class = 200;
    size_t test_per_class = 50;
    double spread = 3.0;
    uint64_t seed = 7;  // dataset construction stream
    std::string train_images, train_labels, test_images, test_labels;
};

struct PartitionSection {
    size_t clients = 10;
    double alpha = 0.5;  // infinity = homogeneous sentinel ("inf" in configs)
    size_t min_size = 1;
    uint64_t seed = 11;
};

struct ModelSection {
    std::vector<size_t> hidden = {64};
    std::string activation = "relu";  // none | relu
    bool bias = true;
};

struct TheorySection {
    size_t dim = 8;
    size_t depth = 2;  // L: number of representation layers
    int classes = 4;
    size_t batch = 64;
    double spread = 2.0;
    double scale = 0.5;
    double lr = 1e-4;
    size_t steps = 5000;
    size_t record_every = 10;
    uint64_t seed = 5;
};

struct ExperimentConfig {
    DatasetSection dataset;
    PartitionSection partition;
    ModelSection model;
    fed::FedConfig fed;
    TheorySection theory;
    std::string output_dir;

    fed::ModelSpec model_spec() const;
};

// Flat INI grammar: [section] headers, key = value lines, '#' comments.
// Unknown sections/keys are rejected; messages carry line numbers or
// section.key field paths.
ExperimentConfig parse_config(const std::string& text);

// "section.key=value" overrides on top of a parsed config.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Resolved-config round trip used by run manifests.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& json_text);

data::Dataset build_train_dataset(const ExperimentConfig& cfg);
data::Dataset build_test_dataset(const ExperimentConfig& cfg);

}  // namespace fedlab::config
