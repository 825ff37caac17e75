#include "fedlab/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>  // vendored nlohmann/json

namespace fedlab::config {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct KeyValue {
    std::string value;
    size_t line;
};

using Sections = std::map<std::string, std::map<std::string, KeyValue>>;

Sections parse_ini(const std::string& text) {
    Sections out;
    std::istringstream is(text);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            out[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        out[section][key] = {trim(line.substr(eq + 1)), lineno};
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& path, const std::string& detail) {
    throw ConfigError(path + ": " + detail);
}

double parse_double(const std::string& path, const std::string& v) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) bad_value(path, "trailing characters in number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(path, "not a number: '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& path, const std::string& v) {
    uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        bad_value(path, "not a non-negative integer: '" + v + "'");
    return out;
}

int parse_int(const std::string& path, const std::string& v) {
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        bad_value(path, "not an integer: '" + v + "'");
    return out;
}

bool parse_bool(const std::string& path, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(path, "not a boolean: '" + v + "'");
}

std::vector<size_t> parse_size_list(const std::string& path, const std::string& v) {
    std::vector<size_t> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (cur.empty()) bad_value(path, "empty list element");
        out.push_back(static_cast<size_t>(parse_u64(path, cur)));
    }
    return out;
}

void set_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value) {
    const std::string path = section + "." + key;
    if (section == "dataset") {
        auto& d = cfg.dataset;
        if (key == "kind") d.kind = value;
        else if (key == "classes") d.classes = parse_int(path, value);
        else if (key == "dim") d.dim = parse_u64(path, value);
        else if (key == "per_class") d.per_class = parse_u64(path, value);
        else if (key == "test_per_class") d.test_per_class = parse_u64(path, value);
        else if (key == "spread") d.spread = parse_double(path, value);
        else if (key == "seed") d.seed = parse_u64(path, value);
        else if (key == "train_images") d.train_images = value;
        else if (key == "train_labels") d.train_labels = value;
        else if (key == "test_images") d.test_images = value;
        else if (key == "test_labels") d.test_labels = value;
        else bad_value(path, "unknown key");
    } else if (section == "partition") {
        auto& p = cfg.partition;
        if (key == "clients") p.clients = parse_u64(path, value);
        else if (key == "alpha") p.alpha = parse_double(path, value);
        else if (key == "min_size") p.min_size = parse_u64(path, value);
        else if (key == "seed") p.seed = parse_u64(path, value);
        else bad_value(path, "unknown key");
    } else if (section == "model") {
        auto& m = cfg.model;
        if (key == "hidden") m.hidden = parse_size_list(path, value);
        else if (key == "activation") m.activation = value;
        else if (key == "bias") m.bias = parse_bool(path, value);
        else bad_value(path, "unknown key");
    } else if (section == "fed") {
        auto& f = cfg.fed;
        if (key == "rounds") f.rounds = parse_u64(path, value);
        else if (key == "local_epochs") f.local_epochs = parse_u64(path, value);
        else if (key == "batch_size") f.batch_size = parse_u64(path, value);
        else if (key == "lr") f.lr = parse_double(path, value);
        else if (key == "momentum") f.momentum = parse_double(path, value);
        else if (key == "weight_decay") f.weight_decay = parse_double(path, value);
        else if (key == "beta") f.beta = parse_double(path, value);
        else if (key == "method") {
            if (value == "fedavg") f.method = fed::Method::fedavg;
            else if (value == "fedprox") f.method = fed::Method::fedprox;
            else if (value == "fedavgm") f.method = fed::Method::fedavgm;
            else bad_value(path, "unknown method '" + value + "'");
        } else if (key == "mu_prox") f.mu_prox = parse_double(path, value);
        else if (key == "rho_server") f.rho_server = parse_double(path, value);
        else if (key == "sample_fraction") f.sample_fraction = parse_double(path, value);
        else if (key == "seed") f.seed = parse_u64(path, value);
        else bad_value(path, "unknown key");
    } else if (section == "analysis") {
        if (key == "tau") cfg.fed.tau = parse_double(path, value);
        else if (key == "spectrum_every") cfg.fed.spectrum_every = parse_u64(path, value);
        else bad_value(path, "unknown key");
    } else if (section == "theory") {
        auto& t = cfg.theory;
        if (key == "dim") t.dim = parse_u64(path, value);
        else if (key == "depth") t.depth = parse_u64(path, value);
        else if (key == "classes") t.classes = parse_int(path, value);
        else if (key == "batch") t.batch = parse_u64(path, value);
        else if (key == "spread") t.spread = parse_double(path, value);
        else if (key == "scale") t.scale = parse_double(path, value);
        else if (key == "lr") t.lr = parse_double(path, value);
        else if (key == "steps") t.steps = parse_u64(path, value);
        else if (key == "record_every") t.record_every = parse_u64(path, value);
        else if (key == "seed") t.seed = parse_u64(path, value);
        else bad_value(path, "unknown key");
    } else if (section == "output") {
        if (key == "dir") cfg.output_dir = value;
        else bad_value(path, "unknown key");
    } else {
        throw ConfigError("unknown section [" + section + "]");
    }
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind != "synthetic" && cfg.dataset.kind != "idx")
        throw ConfigError("dataset.kind: must be 'synthetic' or 'idx'");
    if (cfg.dataset.kind == "synthetic") {
        if (cfg.dataset.classes < 2) throw ConfigError("dataset.classes: need at least 2");
        if (cfg.dataset.per_class < 1) throw ConfigError("dataset.per_class: need at least 1");
        if (cfg.dataset.test_per_class < 1)
            throw ConfigError("dataset.test_per_class: need at least 1");
        if (cfg.dataset.dim < 1) throw ConfigError("dataset.dim: need at least 1");
    } else {
        if (cfg.dataset.train_images.empty() || cfg.dataset.train_labels.empty() ||
            cfg.dataset.test_images.empty() || cfg.dataset.test_labels.empty())
            throw ConfigError("dataset: kind=idx requires train and test image/label paths");
    }
    if (cfg.partition.clients < 1) throw ConfigError("partition.clients: need at least 1");
    if (!(cfg.partition.alpha > 0.0))
        throw ConfigError("partition.alpha: must be positive or 'inf'");
    if (cfg.partition.min_size < 1) throw ConfigError("partition.min_size: must be >= 1");
    if (cfg.model.activation != "none" && cfg.model.activation != "relu")
        throw ConfigError("model.activation: must be 'none' or 'relu'");
    for (size_t h : cfg.model.hidden)
        if (h == 0) throw ConfigError("model.hidden: zero width");
    try {
        cfg.fed.validate();
    } catch (const InvalidArgumentError& e) {
        throw ConfigError(std::string("fed: ") + e.what());
    }
    if (cfg.theory.dim < 1 || cfg.theory.depth < 1)
        throw ConfigError("theory.dim/theory.depth: must be >= 1");
    if (cfg.theory.classes < 2 || static_cast<size_t>(cfg.theory.classes) > cfg.theory.dim)
        throw ConfigError("theory.classes: must be in [2, theory.dim]");
    if (cfg.theory.record_every < 1) throw ConfigError("theory.record_every: must be >= 1");
}

}  // namespace

fed::ModelSpec ExperimentConfig::model_spec() const {
    fed::ModelSpec spec;
    spec.hidden = model.hidden;
    spec.activation = model.activation == "relu" ? nn::Activation::relu : nn::Activation::none;
    spec.bias = model.bias;
    return spec;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    const Sections sections = parse_ini(text);
    for (const auto& [section, kvs] : sections)
        for (const auto& [key, kv] : kvs) {
            try {
                set_key(cfg, section, key, kv.value);
            } catch (const ConfigError& e) {
                throw ConfigError("line " + std::to_string(kv.line) + ": " + e.what());
            }
        }
    validate(cfg);
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    const size_t dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override must look like section.key=value: '" + assignment + "'");
    set_key(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
            trim(assignment.substr(eq + 1)));
    validate(cfg);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    auto& d = j["dataset"];
    d["kind"] = cfg.dataset.kind;
    d["classes"] = cfg.dataset.classes;
    d["dim"] = cfg.dataset.dim;
    d["per_class"] = cfg.dataset.per_class;
    d["test_per_class"] = cfg.dataset.test_per_class;
    d["spread"] = cfg.dataset.spread;
    d["seed"] = cfg.dataset.seed;
    d["train_images"] = cfg.dataset.train_images;
    d["train_labels"] = cfg.dataset.train_labels;
    d["test_images"] = cfg.dataset.test_images;
    d["test_labels"] = cfg.dataset.test_labels;
    auto& p = j["partition"];
    p["clients"] = cfg.partition.clients;
    p["alpha"] = std::isinf(cfg.partition.alpha) ? json("inf") : json(cfg.partition.alpha);
    p["min_size"] = cfg.partition.min_size;
    p["seed"] = cfg.partition.seed;
    auto& m = j["model"];
    m["hidden"] = cfg.model.hidden;
    m["activation"] = cfg.model.activation;
    m["bias"] = cfg.model.bias;
    auto& f = j["fed"];
    f["rounds"] = cfg.fed.rounds;
    f["local_epochs"] = cfg.fed.local_epochs;
    f["batch_size"] = cfg.fed.batch_size;
    f["lr"] = cfg.fed.lr;
    f["momentum"] = cfg.fed.momentum;
    f["weight_decay"] = cfg.fed.weight_decay;
    f["beta"] = cfg.fed.beta;
    f["method"] = cfg.fed.method == fed::Method::fedavg    ? "fedavg"
                  : cfg.fed.method == fed::Method::fedprox ? "fedprox"
                                                           : "fedavgm";
    f["mu_prox"] = cfg.fed.mu_prox;
    f["rho_server"] = cfg.fed.rho_server;
    f["sample_fraction"] = cfg.fed.sample_fraction;
    f["seed"] = cfg.fed.seed;
    auto& a = j["analysis"];
    a["tau"] = cfg.fed.tau;
    a["spectrum_every"] = cfg.fed.spectrum_every;
    auto& t = j["theory"];
    t["dim"] = cfg.theory.dim;
    t["depth"] = cfg.theory.depth;
    t["classes"] = cfg.theory.classes;
    t["batch"] = cfg.theory.batch;
    t["spread"] = cfg.theory.spread;
    t["scale"] = cfg.theory.scale;
    t["lr"] = cfg.theory.lr;
    t["steps"] = cfg.theory.steps;
    t["record_every"] = cfg.theory.record_every;
    t["seed"] = cfg.theory.seed;
    j["output"]["dir"] = cfg.output_dir;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest config: ") + e.what());
    }
    ExperimentConfig cfg;
    auto str = [](const json& v) { return v.get<std::string>(); };
    try {
        const auto& d = j.at("dataset");
        cfg.dataset.kind = str(d.at("kind"));
        cfg.dataset.classes = d.at("classes").get<int>();
        cfg.dataset.dim = d.at("dim").get<size_t>();
        cfg.dataset.per_class = d.at("per_class").get<size_t>();
        cfg.dataset.test_per_class = d.at("test_per_class").get<size_t>();
        cfg.dataset.spread = d.at("spread").get<double>();
        cfg.dataset.seed = d.at("seed").get<uint64_t>();
        cfg.dataset.train_images = str(d.at("train_images"));
        cfg.dataset.train_labels = str(d.at("train_labels"));
        cfg.dataset.test_images = str(d.at("test_images"));
        cfg.dataset.test_labels = str(d.at("test_labels"));
        const auto& p = j.at("partition");
        cfg.partition.clients = p.at("clients").get<size_t>();
        cfg.partition.alpha = p.at("alpha").is_string()
                                  ? std::numeric_limits<double>::infinity()
                                  : p.at("alpha").get<double>();
        cfg.partition.min_size = p.at("min_size").get<size_t>();
        cfg.partition.seed = p.at("seed").get<uint64_t>();
        const auto& m = j.at("model");
        cfg.model.hidden = m.at("hidden").get<std::vector<size_t>>();
        cfg.model.activation = str(m.at("activation"));
        cfg.model.bias = m.at("bias").get<bool>();
        const auto& f = j.at("fed");
        cfg.fed.rounds = f.at("rounds").get<size_t>();
        cfg.fed.local_epochs = f.at("local_epochs").get<size_t>();
        cfg.fed.batch_size = f.at("batch_size").get<size_t>();
        cfg.fed.lr = f.at("lr").get<double>();
        cfg.fed.momentum = f.at("momentum").get<double>();
        cfg.fed.weight_decay = f.at("weight_decay").get<double>();
        cfg.fed.beta = f.at("beta").get<double>();
        const std::string method = str(f.at("method"));
        cfg.fed.method = method == "fedavg"    ? fed::Method::fedavg
                         : method == "fedprox" ? fed::Method::fedprox
                                               : fed::Method::fedavgm;
        cfg.fed.mu_prox = f.at("mu_prox").get<double>();
        cfg.fed.rho_server = f.at("rho_server").get<double>();
        cfg.fed.sample_fraction = f.at("sample_fraction").get<double>();
        cfg.fed.seed = f.at("seed").get<uint64_t>();
        const auto& a = j.at("analysis");
        cfg.fed.tau = a.at("tau").get<double>();
        cfg.fed.spectrum_every = a.at("spectrum_every").get<size_t>();
        const auto& t = j.at("theory");
        cfg.theory.dim = t.at("dim").get<size_t>();
        cfg.theory.depth = t.at("depth").get<size_t>();
        cfg.theory.classes = t.at("classes").get<int>();
        cfg.theory.batch = t.at("batch").get<size_t>();
        cfg.theory.spread = t.at("spread").get<double>();
        cfg.theory.scale = t.at("scale").get<double>();
        cfg.theory.lr = t.at("lr").get<double>();
        cfg.theory.steps = t.at("steps").get<size_t>();
        cfg.theory.record_every = t.at("record_every").get<size_t>();
        cfg.theory.seed = t.at("seed").get<uint64_t>();
        cfg.output_dir = str(j.at("output").at("dir"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

namespace {

// Train and test halves come from one generator call so they share the class
// means; samples are grouped by class, making the split a column filter.
std::pair<data::Dataset, data::Dataset> build_synth_pair(const ExperimentConfig& cfg) {
    const size_t per_train = cfg.dataset.per_class;
    const size_t per_test = cfg.dataset.test_per_class;
    Rng rng(cfg.dataset.seed, 0);
    const data::Dataset pool =
        data::synth_dataset(cfg.dataset.classes, cfg.dataset.dim, per_train + per_test,
                            cfg.dataset.spread, rng);
    auto take = [&](size_t offset, size_t count, const char* name) {
        std::vector<size_t> idx;
        for (int c = 0; c < cfg.dataset.classes; ++c) {
            const size_t base = static_cast<size_t>(c) * (per_train + per_test) + offset;
            for (size_t i = 0; i < count; ++i) idx.push_back(base + i);
        }
        data::Dataset ds;
        ds.features = gather_columns(pool.features, idx);
        for (size_t i : idx) ds.labels.push_back(pool.labels[i]);
        ds.num_classes = pool.num_classes;
        ds.name = name;
        return ds;
    };
    return {take(0, per_train, "synthetic"), take(per_train, per_test, "synthetic-test")};
}

}  // namespace

data::Dataset build_train_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "idx")
        return data::load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
    return build_synth_pair(cfg).first;
}

data::Dataset build_test_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "idx")
        return data::load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    return build_synth_pair(cfg).second;
}

}  // namespace fedlab::config
