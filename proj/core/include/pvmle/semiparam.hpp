#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "pvmle/estimators.hpp"
#include "pvmle/io.hpp"

namespace pvmle {

enum class SmlVariant { PPO, PO };

struct KernelConfig {
    double bandwidth_c = 1.0;
    double bandwidth_p = 6.5;   // h = c * n^(-1/p)
    double trim_quantile = 0.02;
    double delta_n = 0.01;
    // kernel: bivariate Gaussian product (the only implemented choice)

    double bandwidth(std::int64_t n) const;
    void validate() const;
};

// Index parameters of the two-index semiparametric model. Full-length
// coefficient vectors; constants in z cancel out of the kernel weights and
// are therefore not identified.
struct SmlTheta {
    Eigen::VectorXd beta_r;  // l
    Eigen::VectorXd beta;    // k
};

struct KernelProbs {
    Eigen::VectorXd pbar, qbar, rbar;
    std::vector<std::uint8_t> valid;  // 0 where the denominator vanished
    std::int64_t auto_trimmed = 0;
};

struct SmlFit {
    SmlVariant variant;
    Eigen::VectorXd beta_scale;   // k, last element fixed at 1
    Eigen::VectorXd theta_unit;   // beta_scale / ||beta_scale||_2
    Eigen::VectorXd beta_r;       // l, coefficients of constant z columns = 0
    double loglik = 0.0;          // mean guarded log-likelihood at optimum
    std::int64_t effective_n = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<int> free_z_columns;  // z columns carrying free coefficients
};

struct SmlVariance {
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd omega;
    Eigen::MatrixXd vcov;  // sigma^-1 omega sigma^-1 / n
};

// Leave-one-out Nadaraya-Watson probabilities of the three alternatives at
// the two-dimensional index (z'betaR, x'beta), bivariate Gaussian kernel,
// bandwidth h = c n^(-1/p). rbar = 1 - pbar - qbar by construction.
KernelProbs kernel_probs(const SmlTheta& theta, const Dataset& data,
                         const KernelConfig& cfg);

// Indicator of membership in the per-column quantile box of the continuous
// regressors of (z, x).
std::vector<std::uint8_t> trimming_indicator(const Dataset& data,
                                             const KernelConfig& cfg);

// Mean trimmed, guard-modified semiparametric log-likelihood.
double sml_loglik(const SmlTheta& theta, const Dataset& data,
                  const KernelConfig& cfg, SmlVariant variant);

// Simplex stage plus finite-difference quasi-Newton polish over the free
// parameters (beta with its last element fixed at 1; non-constant z
// coefficients). Default starts come from the parametric PPO / PO fits.
SmlFit fit_sml(const Dataset& data, const KernelConfig& cfg,
               SmlVariant variant, std::optional<SmlTheta> start = {});

// Plug-in asymptotic-variance components of the free parameters.
SmlVariance sml_variance(const SmlFit& fit, const Dataset& data,
                         const KernelConfig& cfg, SmlVariant variant);

}  // namespace pvmle
