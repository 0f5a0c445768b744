#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pvmle/dgp.hpp"

namespace pvmle {

enum class NaiveEstimator { NaiveReported, NaiveValidated };

// Pseudo-true characterization of the naive estimators' probability limits:
// the zero of the expected score when the outcome is replaced by its
// conditional expectation under the true data law, together with the
// components of the asymptotic-bias identity
//   plim(beta_hat) - beta0 = -A^-1 * rhs.
struct BiasReport {
    NaiveEstimator estimator;
    Eigen::VectorXd pseudo_true;
    Eigen::VectorXd true_beta;
    Eigen::VectorXd bias;  // pseudo_true - true_beta
    double score_norm_at_pseudo_true = 0.0;
    Eigen::MatrixXd A_matrix;     // evaluated at the certifying segment point
    Eigen::VectorXd rhs_vector;   // expected-score numerator at beta0
    bool converged = false;
    // Filled by verify_bias_identity: minimized residual of the identity and
    // the segment coordinate of the certifying evaluation point.
    double identity_residual = std::numeric_limits<double>::quiet_NaN();
    double identity_t = std::numeric_limits<double>::quiet_NaN();
};

// Draws an oracle covariate sample of size oracle_n, computes the analytic
// per-record misclassification probabilities implied by the design's
// threshold rule and joint error law, and root-finds the zero of the
// expected score. Thresholds must be set (non-NaN) in the design.
BiasReport pseudo_true_params(const DesignConfig& design,
                              NaiveEstimator estimator,
                              std::int64_t oracle_n);

// Monte Carlo expectation of the theorem's A-matrix integrand at beta_eval
// (true misclassification probabilities, marginal terms at beta_eval).
Eigen::MatrixXd eval_A_matrix(const DesignConfig& design,
                              const Eigen::VectorXd& beta_eval,
                              NaiveEstimator estimator,
                              std::int64_t oracle_n);

// Searches the segment between beta0 and the pseudo-true vector for the
// mean-value point minimizing || bias + A(beta_bar)^-1 rhs ||; returns the
// minimized residual norm. The overload taking a report also stores the
// residual, segment coordinate and certifying A matrix in it.
double verify_bias_identity(const DesignConfig& design,
                            NaiveEstimator estimator, std::int64_t oracle_n);
double verify_bias_identity(const DesignConfig& design, BiasReport& report,
                            std::int64_t oracle_n);

}  // namespace pvmle
