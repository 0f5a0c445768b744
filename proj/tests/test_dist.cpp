#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "oracles.hpp"
#include "pvmle/dist.hpp"

using namespace pvmle;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
const double kNan = std::numeric_limits<double>::quiet_NaN();

const double kGridAb[] = {-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0};
const double kGridRho[] = {-0.95, -0.8, -0.5, 0.0, 0.5, 0.8, 0.95};
}  // namespace

TEST_SUITE_BEGIN("dist");

TEST_CASE("marginal cdf basics") {
    CHECK(marginal_cdf(LinkFamily::Normal, 0.0) == 0.5);
    CHECK(marginal_cdf(LinkFamily::AmhLogistic, 0.0) == 0.5);
    CHECK(marginal_cdf(LinkFamily::Normal, -kInf) == 0.0);
    CHECK(marginal_cdf(LinkFamily::Normal, kInf) == 1.0);
    CHECK(marginal_cdf(LinkFamily::AmhLogistic, -kInf) == 0.0);
    CHECK(marginal_cdf(LinkFamily::AmhLogistic, kInf) == 1.0);
    CHECK_THROWS_AS(marginal_cdf(LinkFamily::Normal, kNan),
                    std::domain_error);
    CHECK_THROWS_AS(marginal_cdf(LinkFamily::AmhLogistic, kNan),
                    std::domain_error);
}

TEST_CASE("normal cdf 97.5% quantile against erf series") {
    CHECK(marginal_cdf(LinkFamily::Normal, 1.959963985) ==
          doctest::Approx(0.975).epsilon(1e-9));
    // High-precision series agreement on a grid.
    for (double t = -6.0; t <= 6.0; t += 0.37) {
        CHECK(norm_cdf(t) ==
              doctest::Approx(oracles::norm_cdf_series(t)).epsilon(1e-13));
    }
}

TEST_CASE("marginal cdf monotone nondecreasing") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        double prev = 0.0;
        for (double t = -9.0; t <= 9.0; t += 0.05) {
            const double v = marginal_cdf(fam, t);
            CHECK(v >= prev);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            prev = v;
        }
    }
}

TEST_CASE("norm_quantile inverts norm_cdf") {
    // Upper range capped at 5: beyond that the roundtrip is limited by the
    // spacing of doubles near p = 1, not by the quantile itself.
    for (double t = -7.5; t <= 5.0; t += 0.11) {
        CHECK(norm_quantile(norm_cdf(t)) == doctest::Approx(t).epsilon(1e-11));
    }
    CHECK(norm_quantile(0.5) == 0.0);
    CHECK(std::isinf(norm_quantile(0.0)));
    CHECK(std::isinf(norm_quantile(1.0)));
    for (double p = 0.0137; p < 0.9999; p += 0.0437) {
        CHECK(norm_quantile(p) == doctest::Approx(-norm_quantile(1.0 - p))
                                      .epsilon(1e-9));
    }
}

TEST_CASE("joint cdf trivial values") {
    CHECK(joint_cdf(LinkFamily::Normal, 0.0, 0.0, 0.0) == 0.25);
    // Median-point identity: Phi2(0,0,rho) = 1/4 + asin(rho)/(2 pi).
    CHECK(joint_cdf(LinkFamily::Normal, 0.0, 0.0, -0.8) ==
          doctest::Approx(0.25 + std::asin(-0.8) / (2.0 * M_PI))
              .epsilon(1e-12));
    // AMH closed form at the median with rho = 0.5: 1/(1+1+1+0.5).
    CHECK(joint_cdf(LinkFamily::AmhLogistic, 0.0, 0.0, 0.5) ==
          doctest::Approx(1.0 / 3.5).epsilon(1e-14));
}

TEST_CASE("joint cdf against 2-d adaptive quadrature") {
    for (const double rho : kGridRho) {
        for (const double a : kGridAb) {
            for (const double b : kGridAb) {
                const double got = joint_cdf(LinkFamily::Normal, a, b, rho);
                const double want = oracles::bvn_cdf_quadrature(a, b, rho);
                CHECK(std::fabs(got - want) <= 1e-10);
            }
        }
    }
}

TEST_CASE("median-point identity across rho grid") {
    for (const double rho : kGridRho) {
        CHECK(joint_cdf(LinkFamily::Normal, 0.0, 0.0, rho) ==
              doctest::Approx(0.25 + std::asin(rho) / (2.0 * M_PI))
                  .epsilon(1e-13));
    }
}

TEST_CASE("factorization at rho = 0") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double a : kGridAb) {
            for (const double b : kGridAb) {
                const double g = joint_cdf(fam, a, b, 0.0);
                const double f =
                    marginal_cdf(fam, a) * marginal_cdf(fam, b);
                CHECK(std::fabs(g - f) <= 1e-12);
            }
        }
    }
}

TEST_CASE("frechet bounds") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double rho : kGridRho) {
            for (const double a : kGridAb) {
                for (const double b : kGridAb) {
                    const double g = joint_cdf(fam, a, b, rho);
                    const double fa = marginal_cdf(fam, a);
                    const double fb = marginal_cdf(fam, b);
                    CHECK(g >= std::max(0.0, fa + fb - 1.0) - 1e-12);
                    CHECK(g <= std::min(fa, fb) + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("joint cdf monotone in each argument") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double rho : {-0.8, 0.3}) {
            double prev = -1.0;
            for (double a = -4.0; a <= 4.0; a += 0.25) {
                const double g = joint_cdf(fam, a, 0.7, rho);
                CHECK(g >= prev - 1e-15);
                prev = g;
            }
        }
    }
}

TEST_CASE("infinities resolved analytically") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        CHECK(joint_cdf(fam, kInf, kInf, 0.4) == 1.0);
        CHECK(joint_cdf(fam, -kInf, 1.0, 0.4) == 0.0);
        CHECK(joint_cdf(fam, kInf, 1.0, 0.4) ==
              doctest::Approx(marginal_cdf(fam, 1.0)).epsilon(1e-15));
        CHECK(joint_cdf(fam, 1.0, kInf, -0.4) ==
              doctest::Approx(marginal_cdf(fam, 1.0)).epsilon(1e-15));
    }
}

TEST_CASE("upper tail values") {
    CHECK(upper_tail(LinkFamily::Normal, kInf, 0.0, 0.3) == 0.0);
    CHECK(upper_tail(LinkFamily::Normal, 0.0, 0.0, 0.0) == 0.25);
    CHECK(upper_tail(LinkFamily::AmhLogistic, 0.0, 0.0, 0.0) ==
          doctest::Approx(0.25).epsilon(1e-14));
    // H = 1 - F(a) - F(b) + G on a grid.
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double rho : {-0.5, 0.8}) {
            for (const double a : kGridAb) {
                for (const double b : kGridAb) {
                    const double h = upper_tail(fam, a, b, rho);
                    const double expect = 1.0 - marginal_cdf(fam, a) -
                                          marginal_cdf(fam, b) +
                                          joint_cdf(fam, a, b, rho);
                    CHECK(h == doctest::Approx(std::max(0.0, expect))
                                   .epsilon(1e-12));
                    CHECK(h >= 0.0);
                    CHECK(h <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(joint_cdf(LinkFamily::Normal, 0.0, 0.0, 1.0),
                    std::domain_error);
    CHECK_THROWS_AS(joint_cdf(LinkFamily::AmhLogistic, 0.0, 0.0, -1.0),
                    std::domain_error);
    CHECK_THROWS_AS(joint_cdf(LinkFamily::Normal, kNan, 0.0, 0.5),
                    std::domain_error);
    CHECK_THROWS_AS(upper_tail(LinkFamily::Normal, 0.0, 0.0, 1.5),
                    std::domain_error);
    CHECK_THROWS_AS(joint_cdf_grad(LinkFamily::Normal, 0.0, 0.0, -1.0),
                    std::domain_error);
}

TEST_CASE("closed-form gradient identities at the origin") {
    const JointGrad gn = joint_cdf_grad(LinkFamily::Normal, 0.0, 0.0, 0.0);
    CHECK(gn.da == doctest::Approx(norm_pdf(0.0) * 0.5).epsilon(1e-12));
    CHECK(gn.da == doctest::Approx(0.19947).epsilon(1e-4));
    CHECK(gn.drho == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));

    const JointGrad ga =
        joint_cdf_grad(LinkFamily::AmhLogistic, 0.0, 0.0, 0.0);
    CHECK(ga.drho == doctest::Approx(1.0 / 16.0).epsilon(1e-14));
}

TEST_CASE("gradients match central finite differences") {
    const double step = 1e-5;
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double rho : kGridRho) {
            for (const double a : kGridAb) {
                for (const double b : kGridAb) {
                    const JointGrad g = joint_cdf_grad(fam, a, b, rho);
                    const double fd_a =
                        (joint_cdf(fam, a + step, b, rho) -
                         joint_cdf(fam, a - step, b, rho)) /
                        (2.0 * step);
                    const double fd_b =
                        (joint_cdf(fam, a, b + step, rho) -
                         joint_cdf(fam, a, b - step, rho)) /
                        (2.0 * step);
                    const double rstep =
                        std::min(step, 0.5 * (1.0 - std::fabs(rho)));
                    const double fd_r =
                        (joint_cdf(fam, a, b, rho + rstep) -
                         joint_cdf(fam, a, b, rho - rstep)) /
                        (2.0 * rstep);
                    // Central differences of a ~1e-15-accurate CDF resolve
                    // nothing below ~5e-11; the additive floor covers that.
                    auto close = [](double lhs, double rhs) {
                        const double scale =
                            std::max(std::fabs(lhs), std::fabs(rhs));
                        return std::fabs(lhs - rhs) <=
                               1e-6 * scale + 1e-10;
                    };
                    CHECK(close(g.da, fd_a));
                    CHECK(close(g.db, fd_b));
                    CHECK(close(g.drho, fd_r));
                }
            }
        }
    }
}

TEST_CASE("gradients at infinite arguments are zero") {
    const JointGrad g = joint_cdf_grad(LinkFamily::Normal, kInf, 0.5, 0.3);
    CHECK(g.da == 0.0);
    CHECK(g.drho == 0.0);
    const JointGrad g2 =
        joint_cdf_grad(LinkFamily::AmhLogistic, -kInf, 0.5, 0.3);
    CHECK(g2.db == 0.0);
}

TEST_CASE("conditional cdf helper consistent with gradient ratio") {
    for (const LinkFamily fam :
         {LinkFamily::Normal, LinkFamily::AmhLogistic}) {
        for (const double rho : {-0.8, 0.0, 0.6}) {
            for (const double a : {-1.5, 0.3, 2.0}) {
                for (const double b : {-2.0, 0.0, 1.0}) {
                    const JointGrad g = joint_cdf_grad(fam, a, b, rho);
                    const double f = marginal_pdf(fam, b);
                    CHECK(cond_cdf_given_second(fam, a, b, rho) ==
                          doctest::Approx(g.db / f).epsilon(1e-10));
                }
            }
        }
    }
}

TEST_SUITE_END();
