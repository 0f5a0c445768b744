#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pvmle/dist.hpp"
#include "pvmle/io.hpp"

namespace pvmle {

enum class Estimator {
    ProbitReported,
    ProbitValidated,
    ProbitRestricted,
    Has,
    PoMle,
    PpoMle,
};

enum class NaiveOutcome { Reported, Validated, RestrictedSample };

std::string estimator_name(Estimator e);
Estimator estimator_from_name(const std::string& name);

// Stacked parameter for the partial-observability likelihoods. The
// dependence parameter is optimized on the unconstrained scale
// rho = tanh(rho_raw) so the admissible region is never left. tanh
// saturates to exactly +-1 past |rho_raw| ~ 19, hence the clamp.
struct ThetaFull {
    Eigen::VectorXd beta_r;  // l
    Eigen::VectorXd beta;    // k
    double rho_raw = 0.0;

    double rho() const {
        constexpr double bound = 1.0 - 1e-12;
        return std::clamp(std::tanh(rho_raw), -bound, bound);
    }
    Eigen::VectorXd pack() const;
    static ThetaFull unpack(const Eigen::VectorXd& v, int l, int k);
};

struct FitResult {
    Estimator estimator;
    // Reporting-scale parameters. Layout by estimator:
    //   Probit*:  beta (k)
    //   Has:      alpha0, alpha1, beta (k)
    //   Po/Ppo:   beta_r (l), beta (k), rho
    Eigen::VectorXd params;
    std::vector<std::string> param_names;
    double loglik = 0.0;  // maximized sum log-likelihood
    std::optional<Eigen::MatrixXd> vcov;
    Eigen::VectorXd std_errors;  // NaN entries where vcov is unavailable
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;  // max-norm of the mean score at the optimum
    bool boundary = false;       // HAS misclassification rate at the boundary
    bool flat = false;           // near-singular information matrix
    std::vector<double> loglik_history;
    int l = 0;  // z dimension for Po/Ppo, 0 otherwise
    int k = 0;  // x dimension

    Eigen::VectorXd beta_block() const;
    ThetaFull theta() const;  // Po/Ppo only
};

struct FitOptions {
    double grad_tol = 1e-6;
    double f_reltol = 1e-10;
    int max_iterations = 500;
    int extra_starts = 3;          // perturbed restarts on non-convergence
    bool hessian_vcov = false;     // numerical-Hessian covariance instead of
                                   // the outer-product-of-gradients default
};

struct MisclassProbs {
    Eigen::VectorXd a0r;  // false-positive probabilities
    Eigen::VectorXd a1r;  // false-negative probabilities
    std::vector<std::int64_t> flagged;  // rows where F(x'b) degenerated
};

struct MarginalEffects {
    Eigen::MatrixXd per_record;   // n x k, f(x'b) * b_j
    Eigen::VectorXd average;      // k
    Eigen::VectorXd predicted;    // n, F(x'b)
};

// Standard binary-choice MLE on the selected outcome. RestrictedSample fits
// the truthfulness indicator on the subsample with y_reported = 1.
FitResult fit_probit_naive(const Dataset& data, NaiveOutcome outcome,
                           LinkFamily family, const FitOptions& opts = {});

// Constant-misclassification MLE: maximizes the likelihood of
// a0 + (1 - a0 - a1) F(x'b) over (a0, a1, b) with a0, a1 in [0, 1/2).
FitResult fit_has(const Dataset& data, LinkFamily family,
                  const FitOptions& opts = {});

// Three-branch partial-partial-observability log-likelihood
//   sum y ln P + (yR - y) ln Q + (1 - yR) ln(1 - P - Q)
// with P = G(z'bR, x'b; rho) and Q = H(z'bR, x'b; rho). Probabilities are
// floored at 1e-12 before logs.
double ppo_loglik(const ThetaFull& theta, const Dataset& data,
                  LinkFamily family);

// Two-branch partial-observability log-likelihood on the validated outcome.
double po_loglik(const ThetaFull& theta, const Dataset& data,
                 LinkFamily family);

FitResult fit_ppo_mle(const Dataset& data, LinkFamily family,
                      std::optional<ThetaFull> start = {},
                      const FitOptions& opts = {});
FitResult fit_po_mle(const Dataset& data, LinkFamily family,
                     std::optional<ThetaFull> start = {},
                     const FitOptions& opts = {});

// Covariate-dependent misclassification probabilities implied by theta:
// a0R = G / F(x'b), a1R = (F(x'b) - G) / (1 - F(x'b)).
MisclassProbs misclass_probs(const ThetaFull& theta, const Dataset& data,
                             LinkFamily family);

MarginalEffects marginal_effects(const FitResult& fit, const Dataset& data,
                                 LinkFamily family);

// Individual score rows at the fitted parameters (reporting order), used by
// OPG and cluster-robust covariances.
Eigen::MatrixXd score_matrix(const FitResult& fit, const Dataset& data,
                             LinkFamily family);

// Cluster-robust sandwich A^-1 (sum_g S_g S_g') A^-1 with A the summed OPG
// information and S_g within-cluster score sums. With singleton clusters it
// reduces to the default OPG covariance.
Eigen::MatrixXd cluster_robust_vcov(const FitResult& fit, const Dataset& data,
                                    LinkFamily family);

// Mean gradient of the PPO / PO objectives on the packed raw scale
// (beta_r, beta, rho_raw); exposed for gradient-fidelity checks.
double ppo_loglik_grad(const ThetaFull& theta, const Dataset& data,
                       LinkFamily family, Eigen::VectorXd& grad);
double po_loglik_grad(const ThetaFull& theta, const Dataset& data,
                      LinkFamily family, Eigen::VectorXd& grad);

}  // namespace pvmle
