#pragma once

#include <string>
#include <vector>

#include "fedlab/dataset.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::analysis {

struct SpectrumReport {
    std::string model_tag;
    std::string dataset_tag;
    std::vector<double> values;        // descending, clamped at 0
    std::vector<double> log10_values;  // log10(max(value, 1e-300))
    size_t n_significant = 0;          // values > tau * max(values)
    double effective_rank = 0.0;       // 0 when the whole spectrum is zero
};

// Sigma = (1/N) * sum_i (z_i - mean)(z_i - mean)^T over the dataset's
// representations (penultimate layer output after activation).
Matrix representation_covariance(const nn::Model& model, const data::Dataset& ds);

// Eigen-spectrum of a covariance matrix with a scale-free significance count:
// tau applies to values normalized by the largest one.
SpectrumReport spectrum(const Matrix& cov, double tau, const std::string& model_tag = "",
                        const std::string& dataset_tag = "");

// exp of the spectral entropy; scale-invariant. Errors on all-zero input.
double effective_rank(const std::vector<double>& values);

// CSV one row per (report, k): tag,k,sigma,log10_sigma. JSON summary with
// n_significant and effective_rank per report.
void emit_reports(const std::vector<SpectrumReport>& reports, const std::string& csv_path,
                  const std::string& json_path);

}  // namespace fedlab::analysis
