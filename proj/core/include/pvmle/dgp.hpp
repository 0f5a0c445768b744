#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

#include "pvmle/dist.hpp"

namespace pvmle {

enum class CovariateLaw {
    StdNormalIID,       // x: k iid standard normals
    StdNormalIIDDummy,  // x: k-1 iid standard normals + Bernoulli(1/2) dummy
};

// Full description of the data generating process: true participation
// y* = 1(x'beta0 - e* > 0) and misreporting d = 1(z'betaR - e < tau), with
// (e, e*) drawn jointly from the family's bivariate law with dependence rho.
// z = (intercept, x1, x2, x3, extra iid normals). The threshold tau is
// class-conditional (tau_fn when y* = 1, tau_fp when y* = 0) so that the
// average false negative and false positive rates can be targeted
// independently.
struct DesignConfig {
    Eigen::VectorXd beta0;                  // k coefficients, no intercept
    Eigen::VectorXd betaR;                  // l coefficients, first = intercept
    double rho = -0.8;
    LinkFamily family = LinkFamily::Normal;
    std::int64_t n = 5000;
    CovariateLaw covariate_law = CovariateLaw::StdNormalIID;
    double target_fn_rate = 0.05;
    double target_fp_rate = 0.05;
    // Calibrated thresholds; NaN means "not yet calibrated". +-inf are valid
    // sentinels (no misreporting / total misreporting).
    double tau_fn = std::numeric_limits<double>::quiet_NaN();
    double tau_fp = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 1;

    int k() const { return static_cast<int>(beta0.size()); }
    int l() const { return static_cast<int>(betaR.size()); }
    void validate() const;  // throws DataError on dimension problems
};

struct SimulatedDataset {
    Eigen::MatrixXd x;            // n x k
    Eigen::MatrixXd z;            // n x l, first column constant 1
    Eigen::VectorXi y_star;       // true participation
    Eigen::VectorXi d;            // misreport indicator
    Eigen::VectorXi y_reported;   // y^R = y*(1-d) + (1-y*)d
    Eigen::VectorXi y_validated;  // y = y* y^R = y*(1-d)

    std::int64_t n() const { return x.rows(); }
};

// Deterministic uniform/normal stream: splitmix64-seeded xoshiro256++ with
// inverse-CDF transforms and a fixed draw order, so simulation output is
// bit-reproducible across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);
    double uniform();            // in (0, 1)
    double normal();             // standard normal via inverse CDF
  private:
    std::uint64_t state_[4];
    std::uint64_t next_u64();
};

// Draw one (e, e*) pair from the family's bivariate law with dependence rho.
// First component is the misreporting error e, second the participation
// error e*.
std::pair<double, double> draw_error_pair(LinkFamily family, double rho,
                                          Rng& rng);

// Simulate the full design; bit-reproducible given (config, config.seed).
// Requires tau_fn and tau_fp to be set (non-NaN).
SimulatedDataset simulate(const DesignConfig& config);

// Choose (tau_fn, tau_fp) so that the empirical class-conditional
// misreporting rates on a calibration sample of size calib_n match the
// targets. Targets must lie in (0, 0.5).
std::pair<double, double> calibrate_thresholds(const DesignConfig& config,
                                               std::int64_t calib_n);

// Inverse AMH conditional: solves C_{v|u}(v) = t for v given u.
double amh_conditional_inverse(double u, double t, double rho);

}  // namespace pvmle
