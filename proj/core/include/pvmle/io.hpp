#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pvmle/dgp.hpp"

namespace pvmle {

// Estimation-facing dataset: participation covariates x, misreporting
// covariates z, reported outcome and (optionally) the partially validated
// outcome. Immutable after construction; shared freely across fits.
struct Dataset {
    Eigen::MatrixXd x;  // n x k
    Eigen::MatrixXd z;  // n x l
    Eigen::VectorXi y_reported;
    std::optional<Eigen::VectorXi> y_validated;
    std::optional<Eigen::VectorXi> cluster_ids;
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;
    // Indices of continuous columns (used by semiparametric trimming).
    std::vector<int> x_continuous;
    std::vector<int> z_continuous;

    std::int64_t n() const { return x.rows(); }
    int k() const { return static_cast<int>(x.cols()); }
    int l() const { return static_cast<int>(z.cols()); }

    const Eigen::VectorXi& validated() const;  // throws DataError if absent

    // Structural checks: full column rank of x and z, exclusion restriction
    // (some column of z absent from x or vice versa, by name), and
    // y_validated <= y_reported rowwise. Throws DataError naming the first
    // offending row.
    void validate() const;
};

struct ColumnSpec {
    std::string outcome_reported;
    std::optional<std::string> outcome_validated;
    std::vector<std::string> x_columns;
    std::vector<std::string> z_columns;
    std::optional<std::string> cluster_column;
    std::vector<std::string> continuous_columns;
};

// RFC-4180-style CSV with a header row. Binary columns must be literal 0/1;
// missing fields are rejected. Parse and structural violations carry the
// first offending (1-based) data row.
Dataset load_csv(const std::string& path, const ColumnSpec& spec);

void export_csv(const Dataset& data, const std::string& path);
void export_csv(const SimulatedDataset& data, const std::string& path);

// View of a simulated draw as an estimation dataset (shares the covariate
// naming convention of export_csv: x1..xk, z_const, z columns).
Dataset to_dataset(const SimulatedDataset& sim);

}  // namespace pvmle
