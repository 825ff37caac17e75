#include "fedlab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>  // vendored nlohmann/json

#include "fedlab/analysis.hpp"
#include "fedlab/io_util.hpp"
#include "fedlab/theory.hpp"

namespace fedlab::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string alpha_label(double alpha) {
    if (std::isinf(alpha)) return "inf";
    std::ostringstream os;
    os << alpha;
    return os.str();
}

data::Partition make_partition(const config::ExperimentConfig& cfg, const data::Dataset& train) {
    Rng rng(cfg.partition.seed, stream_key({0x70617274}));
    return data::dirichlet_partition(train.labels, train.num_classes, cfg.partition.clients,
                                     cfg.partition.alpha, rng, cfg.partition.min_size);
}

std::string round_reports_csv(const std::vector<fed::RoundReport>& reports) {
    std::ostringstream os;
    os << "round,accuracy,mean_local_loss,erank,n_sig_singulars\n";
    for (const auto& r : reports) {
        os << r.round << "," << io::fmt(r.accuracy) << "," << io::fmt(r.mean_local_loss) << ",";
        if (r.spectrum) os << io::fmt(r.spectrum->effective_rank);
        os << ",";
        if (r.spectrum) os << r.spectrum->n_significant;
        os << "\n";
    }
    return os.str();
}

std::string round_reports_ndjson(const std::vector<fed::RoundReport>& reports) {
    std::ostringstream os;
    for (const auto& r : reports) {
        json j;
        j["round"] = r.round;
        j["accuracy"] = r.accuracy;
        j["mean_local_loss"] = r.mean_local_loss;
        j["client_samples"] = r.client_samples;
        if (r.spectrum) {
            j["erank"] = r.spectrum->effective_rank;
            j["n_sig_singulars"] = r.spectrum->n_significant;
        }
        os << j.dump() << "\n";
    }
    return os.str();
}

[[noreturn]] void usage_error(const std::string& msg) {
    throw ConfigError(msg +
                      "\nusage: fedlab <partition|train|spectrum|theory|sweep> "
                      "[--config FILE | --from-manifest FILE] [--out DIR] [--set sec.key=val]... "
                      "[--checkpoint FILE] [--alphas a,b,...] [--betas a,b,...]");
}

}  // namespace

std::string resolve_output_dir(const std::string& cli_out, const config::ExperimentConfig& cfg,
                               const std::string& command) {
    if (!cli_out.empty()) return cli_out;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    const char* root = std::getenv("FEDLAB_OUTPUT_ROOT");
    const std::string base = root && *root ? root : "fedlab_out";
    return base + "/" + command;
}

void write_manifest(const config::ExperimentConfig& cfg, const std::string& command,
                    const std::string& out_dir) {
    json j;
    j["artifact"] = "fedlab";
    j["version"] = "1.0.0";
    j["command"] = command;
    char stamp[64];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    j["created"] = stamp;  // timestamps are confined to the manifest
    j["config"] = json::parse(config::config_to_json(cfg));
    write_file(out_dir + "/manifest.json", j.dump(2) + "\n");
}

void run_partition(const config::ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const data::Dataset train = config::build_train_dataset(cfg);
    const data::Partition part = make_partition(cfg, train);
    write_file(out_dir + "/partition.json", data::partition_to_json(part) + "\n");
    write_manifest(cfg, "partition", out_dir);
}

void run_train(const config::ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    ensure_dir(out_dir + "/checkpoints");
    const data::Dataset train = config::build_train_dataset(cfg);
    const data::Dataset test = config::build_test_dataset(cfg);
    const data::Partition part = make_partition(cfg, train);
    write_file(out_dir + "/partition.json", data::partition_to_json(part) + "\n");

    const fed::FedRunResult result =
        fed::run_federation(cfg.fed, train, part, test, cfg.model_spec());
    write_file(out_dir + "/rounds.csv", round_reports_csv(result.reports));
    write_file(out_dir + "/rounds.ndjson", round_reports_ndjson(result.reports));

    char name[64];
    std::snprintf(name, sizeof(name), "/checkpoints/round_%04zu.bin",
                  cfg.fed.rounds == 0 ? size_t{0} : cfg.fed.rounds - 1);
    nn::save_model(result.global, out_dir + name);
    write_manifest(cfg, "train", out_dir);
}

void run_spectrum(const config::ExperimentConfig& cfg, const std::string& checkpoint,
                  const std::string& out_dir) {
    ensure_dir(out_dir);
    const nn::Model model = nn::load_model(checkpoint);
    const data::Dataset test = config::build_test_dataset(cfg);
    const Matrix cov = analysis::representation_covariance(model, test);
    const analysis::SpectrumReport rep =
        analysis::spectrum(cov, cfg.fed.tau, fs::path(checkpoint).stem().string(), test.name);
    analysis::emit_reports({rep}, out_dir + "/spectra.csv", out_dir + "/spectra.json");
    write_manifest(cfg, "spectrum", out_dir);
}

void run_theory(const config::ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const auto& t = cfg.theory;
    Rng data_rng(t.seed, stream_key({0x64617461}));
    const size_t classes = static_cast<size_t>(t.classes);
    std::vector<size_t> counts(classes, t.batch / classes);
    for (size_t c = 0; c < t.batch % classes; ++c) ++counts[c];
    const nn::Batch batch =
        theory::prototype_batch(t.classes, t.dim, counts, t.spread, data_rng);

    std::vector<size_t> dims(t.depth + 1, t.dim);
    dims.push_back(static_cast<size_t>(t.classes));
    Rng init_rng(t.seed, stream_key({0x696e6974}));
    const theory::TheoryTrace trace =
        theory::run_gradient_flow(dims, t.scale, batch, t.lr, t.steps, t.record_every, init_rng);
    theory::write_trace_csv(trace, out_dir + "/trace.csv");
    write_manifest(cfg, "theory", out_dir);
}

void run_sweep(const config::ExperimentConfig& cfg, const std::vector<double>& alphas,
               const std::vector<double>& betas, const std::string& out_dir) {
    ensure_dir(out_dir);
    std::ostringstream csv;
    csv << "alpha,beta,final_accuracy,final_erank,final_n_sig\n";
    for (double alpha : alphas) {
        for (double beta : betas) {
            config::ExperimentConfig sub = cfg;
            sub.partition.alpha = alpha;
            sub.fed.beta = beta;
            if (sub.fed.spectrum_every == 0)  // the table needs the final-round spectrum
                sub.fed.spectrum_every = std::max<size_t>(1, sub.fed.rounds);
            const std::string run_dir =
                out_dir + "/a" + alpha_label(alpha) + "_b" + alpha_label(beta);
            sub.output_dir = run_dir;
            run_train(sub, run_dir);

            // Final-round row of the run's report feeds the comparison table.
            const std::string rounds = read_file(run_dir + "/rounds.csv");
            std::vector<std::string> fields;
            const size_t first_nl = rounds.find('\n');
            if (first_nl + 1 < rounds.size()) {  // data rows exist beyond the header
                const size_t last_nl = rounds.find_last_of('\n', rounds.size() - 2);
                std::string last = rounds.substr(last_nl + 1);
                while (!last.empty() && (last.back() == '\n' || last.back() == '\r'))
                    last.pop_back();
                std::istringstream ls(last);
                std::string field;
                while (std::getline(ls, field, ',')) fields.push_back(field);
            }
            csv << alpha_label(alpha) << "," << alpha_label(beta) << ","
                << (fields.size() > 1 ? fields[1] : "") << ","
                << (fields.size() > 3 ? fields[3] : "") << ","
                << (fields.size() > 4 ? fields[4] : "") << "\n";
        }
    }
    write_file(out_dir + "/comparison.csv", csv.str());
    write_manifest(cfg, "sweep", out_dir);
}

int dispatch(const std::vector<std::string>& args) {
    try {
        if (args.empty()) usage_error("missing subcommand");
        const std::string command = args[0];
        std::string config_path, manifest_path, out_dir, checkpoint;
        std::vector<std::string> overrides;
        std::vector<double> alphas, betas;

        auto parse_double_list = [](const std::string& s) {
            std::vector<double> out;
            std::istringstream is(s);
            std::string tok;
            while (std::getline(is, tok, ',')) {
                if (tok == "inf")
                    out.push_back(std::numeric_limits<double>::infinity());
                else
                    out.push_back(std::stod(tok));
            }
            return out;
        };

        for (size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            auto next = [&]() -> const std::string& {
                if (i + 1 >= args.size()) usage_error("missing value after " + a);
                return args[++i];
            };
            if (a == "--config") config_path = next();
            else if (a == "--from-manifest") manifest_path = next();
            else if (a == "--out") out_dir = next();
            else if (a == "--set") overrides.push_back(next());
            else if (a == "--checkpoint") checkpoint = next();
            else if (a == "--alphas") alphas = parse_double_list(next());
            else if (a == "--betas") betas = parse_double_list(next());
            else usage_error("unknown option " + a);
        }

        config::ExperimentConfig cfg;
        if (!manifest_path.empty()) {
            const json m = json::parse(read_file(manifest_path));
            cfg = config::config_from_json(m.at("config").dump());
        } else if (!config_path.empty()) {
            cfg = config::parse_config(read_file(config_path));
        } else {
            cfg = config::parse_config("");  // defaults
        }
        for (const std::string& o : overrides) config::apply_override(cfg, o);

        const std::string out = resolve_output_dir(out_dir, cfg, command);
        if (command == "partition") run_partition(cfg, out);
        else if (command == "train") run_train(cfg, out);
        else if (command == "spectrum") {
            if (checkpoint.empty()) usage_error("spectrum requires --checkpoint");
            run_spectrum(cfg, checkpoint, out);
        } else if (command == "theory") run_theory(cfg, out);
        else if (command == "sweep") {
            if (alphas.empty()) alphas = {cfg.partition.alpha};
            if (betas.empty()) betas = {cfg.fed.beta};
            run_sweep(cfg, alphas, betas, out);
        } else {
            usage_error("unknown subcommand '" + command + "'");
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace fedlab::cli
