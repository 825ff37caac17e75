#pragma once

#include <string>
#include <vector>

#include "fedlab/config.hpp"

namespace fedlab::cli {

// Exit codes: 0 success, 1 config error, 2 runtime/numerical error, 3 I/O.
int dispatch(const std::vector<std::string>& args);

// Subcommand bodies, callable directly from tests. Each writes its artifacts
// plus a manifest.json holding the resolved config; re-running from the
// manifest reproduces every data file byte for byte (timestamps live only in
// the manifest).
void run_partition(const config::ExperimentConfig& cfg, const std::string& out_dir);
void run_train(const config::ExperimentConfig& cfg, const std::string& out_dir);
void run_spectrum(const config::ExperimentConfig& cfg, const std::string& checkpoint,
                  const std::string& out_dir);
void run_theory(const config::ExperimentConfig& cfg, const std::string& out_dir);
void run_sweep(const config::ExperimentConfig& cfg, const std::vector<double>& alphas,
               const std::vector<double>& betas, const std::string& out_dir);

std::string resolve_output_dir(const std::string& cli_out, const config::ExperimentConfig& cfg,
                               const std::string& command);

void write_manifest(const config::ExperimentConfig& cfg, const std::string& command,
                    const std::string& out_dir);

}  // namespace fedlab::cli
