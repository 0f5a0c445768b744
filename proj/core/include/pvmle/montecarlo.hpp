#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvmle/dgp.hpp"
#include "pvmle/estimators.hpp"

namespace pvmle {

struct MCConfig {
    DesignConfig design;
    int replications = 250;
    std::int64_t n = 5000;
    std::vector<Estimator> estimators;
    std::uint64_t master_seed = 1;
    int parallel_workers = 0;  // 0 = hardware concurrency
    std::int64_t calib_n = 500000;
};

struct ReplicationRecord {
    int replication = 0;
    std::uint64_t seed = 0;
    double achieved_fn = 0.0;
    double achieved_fp = 0.0;
    // Per estimator: beta block, convergence flag, log-likelihood.
    std::map<Estimator, Eigen::VectorXd> beta;
    std::map<Estimator, bool> converged;
    std::map<Estimator, double> loglik;
    std::map<Estimator, std::string> error;  // estimator failures
};

struct MCSummary {
    DesignConfig design;  // with resolved thresholds
    int replications = 0;
    std::int64_t n = 0;
    std::map<Estimator, Eigen::VectorXd> means;      // over converged reps
    std::map<Estimator, Eigen::VectorXd> variances;  // cross-replication
    std::map<Estimator, int> failures;
    // PO / PPO efficiency comparison over replications where both converged.
    Eigen::VectorXd po_ppo_variance_ratios;
    double po_ppo_det_ratio = std::numeric_limits<double>::quiet_NaN();
    int po_ppo_pairs = 0;
    double achieved_fn = 0.0;  // mean achieved rates across replications
    double achieved_fp = 0.0;
    std::vector<ReplicationRecord> records;
};

// Runs the replication study: thresholds calibrated once (unless already set
// in the design), replication r seeded with master_seed + r, every requested
// estimator fit on the identical simulated dataset. Deterministic given the
// config, independent of worker count.
MCSummary run_mc(const MCConfig& cfg);

struct GridCell {
    double fn = 0.05;
    double fp = 0.05;
};

// Monte Carlo over a grid of target misclassification rates.
std::vector<std::pair<GridCell, MCSummary>> run_grid(
    const MCConfig& base, const std::vector<GridCell>& grid);

// Layout of the simulation table: one row per (cell, coefficient), one
// column per estimator mean. Missing cells are left blank.
std::string table1_text(
    const std::vector<std::pair<GridCell, MCSummary>>& cells,
    const std::vector<Estimator>& estimators);
std::string table1_csv(
    const std::vector<std::pair<GridCell, MCSummary>>& cells,
    const std::vector<Estimator>& estimators);

// Efficiency comparison rows: per-coefficient PO/PPO variance ratios and the
// covariance determinant ratio per cell.
std::string table2_text(
    const std::vector<std::pair<GridCell, MCSummary>>& cells);

}  // namespace pvmle
