#ifndef CBMA_DATASET_HPP
#define CBMA_DATASET_HPP

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbma/errors.hpp"

namespace cbma {

// A collection of covariate-response pairs; the unit of exchangeability.
struct Dataset {
    Eigen::MatrixXd x; // n rows, d columns
    Eigen::VectorXd y; // n responses

    Eigen::Index n() const { return y.size(); }
    Eigen::Index d() const { return x.cols(); }

    void validate() const {
        if (y.size() < 1 || x.rows() != y.size())
            throw data_error("dataset: need n >= 1 with matching covariate rows");
        if (!x.allFinite() || !y.allFinite())
            throw data_error("dataset: non-finite entries");
    }

    Dataset rows(const std::vector<Eigen::Index>& idx) const {
        Dataset out;
        out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
        out.y.resize(static_cast<Eigen::Index>(idx.size()));
        for (Eigen::Index i = 0; i < out.y.size(); ++i) {
            out.x.row(i) = x.row(idx[static_cast<size_t>(i)]);
            out.y[i] = y[idx[static_cast<size_t>(i)]];
        }
        return out;
    }
};

// Centers and scales every covariate column and the response to mean 0, sd 1.
// Constant columns cannot be standardized and are rejected.
inline Dataset standardize(const Dataset& in) {
    in.validate();
    if (in.n() < 2) throw data_error("standardize: need at least 2 rows");
    Dataset out = in;
    const double n = static_cast<double>(in.n());
    auto scale_col = [&](Eigen::VectorXd& col, const std::string& what) {
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / (n - 1.0));
        if (sd <= 0.0) throw data_error("standardize: constant " + what);
        col = (col.array() - mean) / sd;
    };
    for (Eigen::Index j = 0; j < out.d(); ++j) {
        Eigen::VectorXd col = out.x.col(j);
        scale_col(col, "covariate column " + std::to_string(j));
        out.x.col(j) = col;
    }
    scale_col(out.y, "response");
    return out;
}

// CSV with a header row and numeric columns. Rows with non-finite or
// unparseable fields are dropped.
inline Dataset load_csv(const std::string& path, const std::string& response_column,
                        const std::vector<std::string>& covariate_columns = {}) {
    std::ifstream in(path);
    if (!in) throw data_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("csv: empty file " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string field;
        while (std::getline(ss, field, ',')) out.push_back(field);
        return out;
    };
    const auto header = split(line);
    auto find_col = [&](const std::string& name) {
        for (size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<Eigen::Index>(j);
        throw data_error("csv: column '" + name + "' not found in " + path);
    };

    const Eigen::Index ycol = find_col(response_column);
    std::vector<Eigen::Index> xcols;
    if (covariate_columns.empty()) {
        for (size_t j = 0; j < header.size(); ++j)
            if (static_cast<Eigen::Index>(j) != ycol) xcols.push_back(static_cast<Eigen::Index>(j));
    } else {
        for (const auto& name : covariate_columns) xcols.push_back(find_col(name));
    }

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size()) continue;
        std::vector<double> row;
        row.reserve(fields.size());
        bool ok = true;
        for (const auto& f : fields) {
            try {
                const double v = std::stod(f);
                if (!std::isfinite(v)) { ok = false; break; }
                row.push_back(v);
            } catch (...) { ok = false; break; }
        }
        if (ok) rows.push_back(std::move(row));
    }
    if (rows.size() < 4) throw data_error("csv: fewer than 4 usable rows in " + path);

    Dataset ds;
    ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(xcols.size()));
    ds.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        ds.y[static_cast<Eigen::Index>(i)] = rows[i][static_cast<size_t>(ycol)];
        for (size_t j = 0; j < xcols.size(); ++j)
            ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][static_cast<size_t>(xcols[j])];
    }
    return ds;
}

} // namespace cbma

#endif
