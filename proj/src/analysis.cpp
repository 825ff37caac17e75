#include "fedlab/analysis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedlab/io_util.hpp"
#include "fedlab/linalg.hpp"

namespace fedlab::analysis {

Matrix representation_covariance(const nn::Model& model, const data::Dataset& ds) {
    if (ds.size() == 0) throw InvalidArgumentError("representation_covariance: empty dataset");
    const nn::ForwardResult f = nn::forward(model, ds.features);
    const Matrix& z = f.reps;  // d x N
    const size_t d = z.rows(), n = z.cols();
    std::vector<double> mean(d, 0.0);
    for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j < n; ++j) mean[i] += z(i, j);
        mean[i] /= static_cast<double>(n);
    }
    Matrix centered(d, n);
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < n; ++j) centered(i, j) = z(i, j) - mean[i];
    Matrix cov = matmul_a_bt(centered, centered);
    cov *= 1.0 / static_cast<double>(n);
    return cov;
}

SpectrumReport spectrum(const Matrix& cov, double tau, const std::string& model_tag,
                        const std::string& dataset_tag) {
    const EighResult eig = sym_eigh(cov);
    SpectrumReport rep;
    rep.model_tag = model_tag;
    rep.dataset_tag = dataset_tag;
    rep.values.reserve(eig.values.size());
    for (double v : eig.values) rep.values.push_back(std::max(v, 0.0));
    for (double v : rep.values) rep.log10_values.push_back(std::log10(std::max(v, 1e-300)));
    const double top = rep.values.empty() ? 0.0 : rep.values[0];
    if (top > 0.0) {
        for (double v : rep.values)
            if (v / top > tau) ++rep.n_significant;
        rep.effective_rank = effective_rank(rep.values);
    }
    return rep;
}

double effective_rank(const std::vector<double>& values) {
    double total = 0.0;
    for (double v : values) {
        if (v < 0.0) throw InvalidArgumentError("effective_rank: negative value");
        total += v;
    }
    if (!(total > 0.0)) throw InvalidArgumentError("effective_rank: all-zero spectrum");
    double h = 0.0;
    for (double v : values) {
        if (v <= 0.0) continue;
        const double p = v / total;
        h -= p * std::log(p);
    }
    return std::exp(h);
}

void emit_reports(const std::vector<SpectrumReport>& reports, const std::string& csv_path,
                  const std::string& json_path) {
    {
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot open for writing: " + csv_path);
        csv << "tag,k,sigma,log10_sigma\n";
        for (const auto& rep : reports)
            for (size_t k = 0; k < rep.values.size(); ++k)
                csv << rep.model_tag << "," << k << "," << io::fmt(rep.values[k]) << ","
                    << io::fmt(rep.log10_values[k]) << "\n";
        if (!csv) throw IoError("write failed: " + csv_path);
    }
    {
        std::ofstream js(json_path);
        if (!js) throw IoError("cannot open for writing: " + json_path);
        js << "[";
        for (size_t i = 0; i < reports.size(); ++i) {
            if (i) js << ",";
            js << "{\"tag\":\"" << reports[i].model_tag << "\",\"dataset\":\""
               << reports[i].dataset_tag << "\",\"n_significant\":" << reports[i].n_significant
               << ",\"effective_rank\":" << io::fmt(reports[i].effective_rank) << "}";
        }
        js << "]\n";
        if (!js) throw IoError("write failed: " + json_path);
    }
}

}  // namespace fedlab::analysis
