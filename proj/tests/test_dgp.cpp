#include <doctest.h>

#include <cmath>
#include <limits>

#include "pvmle/dgp.hpp"
#include "pvmle/errors.hpp"

using namespace pvmle;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

DesignConfig paper_design() {
    DesignConfig d;
    d.beta0 = Eigen::VectorXd(4);
    d.beta0 << 2.0, -0.5, 0.5, 1.0;
    d.betaR = Eigen::VectorXd(5);
    d.betaR << 1.0, 0.5, -1.5, 2.5, 1.0;
    d.rho = -0.8;
    d.n = 2000;
    d.seed = 42;
    return d;
}

}  // namespace

TEST_SUITE_BEGIN("dgp");

TEST_CASE("no misreporting when thresholds are -inf") {
    DesignConfig d = paper_design();
    d.tau_fn = -kInf;
    d.tau_fp = -kInf;
    const SimulatedDataset sim = simulate(d);
    for (std::int64_t i = 0; i < sim.n(); ++i) {
        CHECK(sim.d[i] == 0);
        CHECK(sim.y_reported[i] == sim.y_star[i]);
        CHECK(sim.y_validated[i] == sim.y_star[i]);
    }
}

TEST_CASE("total misreporting when thresholds are +inf") {
    DesignConfig d = paper_design();
    d.tau_fn = kInf;
    d.tau_fp = kInf;
    const SimulatedDataset sim = simulate(d);
    for (std::int64_t i = 0; i < sim.n(); ++i) {
        CHECK(sim.d[i] == 1);
        CHECK(sim.y_reported[i] == 1 - sim.y_star[i]);
        CHECK(sim.y_validated[i] == 0);
    }
}

TEST_CASE("partial-validation identities hold on every record") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const std::uint64_t seed : {7u, 8u, 9u}) {
            DesignConfig d = paper_design();
            d.family = fam;
            d.seed = seed;
            d.tau_fn = 0.5;
            d.tau_fp = -1.0;
            const SimulatedDataset sim = simulate(d);
            for (std::int64_t i = 0; i < sim.n(); ++i) {
                CHECK(sim.y_reported[i] ==
                      sim.y_star[i] * (1 - sim.d[i]) +
                          (1 - sim.y_star[i]) * sim.d[i]);
                CHECK(sim.y_validated[i] ==
                      sim.y_star[i] * sim.y_reported[i]);
                CHECK(sim.y_validated[i] <= sim.y_reported[i]);
                CHECK(sim.y_validated[i] <= sim.y_star[i]);
            }
        }
    }
}

TEST_CASE("simulation is bit-reproducible") {
    DesignConfig d = paper_design();
    d.tau_fn = 0.3;
    d.tau_fp = 0.3;
    const SimulatedDataset a = simulate(d);
    const SimulatedDataset b = simulate(d);
    CHECK(a.x == b.x);
    CHECK(a.z == b.z);
    CHECK(a.y_reported == b.y_reported);
    d.seed += 1;
    const SimulatedDataset c = simulate(d);
    CHECK(a.x != c.x);
}

TEST_CASE("participation frequency matches mean of F(x'beta0)") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        DesignConfig d = paper_design();
        d.family = fam;
        d.n = 100000;
        d.tau_fn = 0.0;
        d.tau_fp = 0.0;
        const SimulatedDataset sim = simulate(d);
        double mean_f = 0.0;
        double freq = 0.0;
        for (std::int64_t i = 0; i < sim.n(); ++i) {
            mean_f += marginal_cdf(fam, sim.x.row(i).dot(d.beta0));
            freq += sim.y_star[i];
        }
        mean_f /= static_cast<double>(sim.n());
        freq /= static_cast<double>(sim.n());
        const double se =
            3.0 * std::sqrt(freq * (1.0 - freq) /
                            static_cast<double>(sim.n()));
        CHECK(std::fabs(freq - mean_f) <= se);
    }
}

TEST_CASE("error pair dependence matches rho (normal family)") {
    Rng rng(11);
    const double rho = -0.8;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const auto [e, es] = draw_error_pair(LinkFamily::Normal, rho, rng);
        sxy += e * es;
        sxx += e * e;
        syy += es * es;
    }
    CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(rho).epsilon(0.01));
}

TEST_CASE("amh conditional inverse solves the conditional cdf") {
    for (const double rho : {-0.9, -0.3, 0.4, 0.9}) {
        for (const double u : {0.1, 0.5, 0.93}) {
            for (const double t : {0.05, 0.4, 0.85}) {
                const double v = amh_conditional_inverse(u, t, rho);
                // C_{v|u}(v) = v(1 - rho(1-v)) / (1 - rho(1-u)(1-v))^2
                const double w = 1.0 - rho * (1.0 - u) * (1.0 - v);
                const double cdf = v * (1.0 - rho * (1.0 - v)) / (w * w);
                CHECK(cdf == doctest::Approx(t).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("amh error pair association sign follows rho") {
    Rng rng(13);
    const int n = 100000;
    for (const double rho : {-0.8, 0.8}) {
        double sxy = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto [e, es] =
                draw_error_pair(LinkFamily::AmhLogistic, rho, rng);
            sxy += e * es;
        }
        CHECK((sxy > 0.0) == (rho > 0.0));
    }
}

TEST_CASE("calibration hits the target rates") {
    DesignConfig d = paper_design();
    d.target_fn_rate = 0.05;
    d.target_fp_rate = 0.20;
    const auto [fn, fp] = calibrate_thresholds(d, 500000);
    d.tau_fn = fn;
    d.tau_fp = fp;
    d.n = 200000;
    d.seed = 77;  // fresh sample, not the calibration draw
    const SimulatedDataset sim = simulate(d);
    std::int64_t n_pos = 0, n_neg = 0, mis_pos = 0, mis_neg = 0;
    for (std::int64_t i = 0; i < sim.n(); ++i) {
        if (sim.y_star[i] == 1) {
            ++n_pos;
            mis_pos += sim.d[i];
        } else {
            ++n_neg;
            mis_neg += sim.d[i];
        }
    }
    const double fn_rate = static_cast<double>(mis_pos) / n_pos;
    const double fp_rate = static_cast<double>(mis_neg) / n_neg;
    CHECK(std::fabs(fn_rate - 0.05) <= 0.003);
    CHECK(std::fabs(fp_rate - 0.20) <= 0.003);
}

TEST_CASE("calibrated 5% targets recovered on a large fresh sample") {
    DesignConfig d = paper_design();
    d.target_fn_rate = 0.05;
    d.target_fp_rate = 0.05;
    const auto [fn, fp] = calibrate_thresholds(d, 500000);
    d.tau_fn = fn;
    d.tau_fp = fp;
    d.n = 200000;
    const SimulatedDataset sim = simulate(d);
    std::int64_t n_pos = 0, mis_pos = 0;
    for (std::int64_t i = 0; i < sim.n(); ++i) {
        if (sim.y_star[i] == 1) {
            ++n_pos;
            mis_pos += sim.d[i];
        }
    }
    const double rate = static_cast<double>(mis_pos) / n_pos;
    CHECK(rate >= 0.045);
    CHECK(rate <= 0.055);
}

TEST_CASE("calibration is stable across seeds") {
    // Quantile Monte Carlo error scales as 1/sqrt(calib_n); 5e6 draws put
    // the seed-to-seed spread inside +-0.01.
    DesignConfig d = paper_design();
    d.target_fn_rate = 0.20;
    d.target_fp_rate = 0.20;
    const auto [fn1, fp1] = calibrate_thresholds(d, 5000000);
    d.seed = 1234567;
    const auto [fn2, fp2] = calibrate_thresholds(d, 5000000);
    CHECK(std::isfinite(fn1));
    CHECK(std::isfinite(fp1));
    CHECK(std::fabs(fn1 - fn2) <= 0.01);
    CHECK(std::fabs(fp1 - fp2) <= 0.01);
}

TEST_CASE("misreporting rate is monotone in the threshold") {
    DesignConfig d = paper_design();
    d.n = 50000;
    double prev = -1.0;
    for (const double tau : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
        d.tau_fn = tau;
        d.tau_fp = tau;
        const SimulatedDataset sim = simulate(d);
        const double rate =
            sim.d.cast<double>().sum() / static_cast<double>(sim.n());
        CHECK(rate >= prev);
        prev = rate;
    }
}

TEST_CASE("calibration rejects unreachable targets") {
    DesignConfig d = paper_design();
    d.target_fn_rate = 0.0;
    CHECK_THROWS_AS(calibrate_thresholds(d, 100000), CalibrationError);
    d.target_fn_rate = 0.6;
    CHECK_THROWS_AS(calibrate_thresholds(d, 100000), CalibrationError);
}

TEST_CASE("simulate requires calibrated thresholds") {
    DesignConfig d = paper_design();
    CHECK_THROWS_AS(simulate(d), DataError);
}

TEST_CASE("design validation rejects bad dimensions") {
    DesignConfig d = paper_design();
    d.betaR = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(d.validate(), DataError);
    DesignConfig d2 = paper_design();
    d2.rho = 1.0;
    CHECK_THROWS_AS(d2.validate(), DataError);
}

TEST_SUITE_END();
