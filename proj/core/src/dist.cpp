#include "pvmle/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pvmle {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kTwoPi = 6.283185307179586;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

void check_rho(double rho) {
    if (std::isnan(rho) || std::fabs(rho) >= 1.0) {
        throw std::domain_error("dependence parameter rho must lie in (-1, 1)");
    }
}

void check_arg(double t) {
    if (std::isnan(t)) {
        throw std::domain_error("NaN argument to distribution function");
    }
}

// Gauss-Legendre nodes/weights on (0,1) pairs, per Genz's BVND.
constexpr double kW6[3] = {0.1713244923791705, 0.3607615730481384,
                           0.4679139345726904};
constexpr double kX6[3] = {0.9324695142031522, 0.6612093864662647,
                           0.2386191860831970};
constexpr double kW12[6] = {0.04717533638651177, 0.1069393259953183,
                            0.1600783285433464,  0.2031674267230659,
                            0.2334925365383547,  0.2491470458134029};
constexpr double kX12[6] = {0.9815606342467191, 0.9041172563704750,
                            0.7699026741943050, 0.5873179542866171,
                            0.3678314989981802, 0.1252334085114692};
constexpr double kW20[10] = {0.01761400713915212, 0.04060142980038694,
                             0.06267204833410906, 0.08327674157670475,
                             0.1019301198172404,  0.1181945319615184,
                             0.1316886384491766,  0.1420961093183821,
                             0.1491729864726037,  0.1527533871307259};
constexpr double kX20[10] = {0.9931285991850949,  0.9639719272779138,
                             0.9122344282513259,  0.8391169718222188,
                             0.7463319064601508,  0.6360536807265150,
                             0.5108670019508271,  0.3737060887154196,
                             0.2277858511416451,  0.07652652113349733};

// Genz's BVNU: Pr[X > dh, Y > dk] for standard bivariate normal with
// correlation r. Gauss-Legendre over asin(r) for |r| <= 0.925, Drezner-
// Wesolowsky tail expansion otherwise; absolute accuracy ~1e-15.
double bvnu(double dh, double dk, double r) {
    if (dh == std::numeric_limits<double>::infinity() ||
        dk == std::numeric_limits<double>::infinity()) {
        return 0.0;
    }
    if (dh == -std::numeric_limits<double>::infinity()) {
        return dk == -std::numeric_limits<double>::infinity() ? 1.0
                                                              : norm_cdf(-dk);
    }
    if (dk == -std::numeric_limits<double>::infinity()) {
        return norm_cdf(-dh);
    }
    if (r == 0.0) {
        return norm_cdf(-dh) * norm_cdf(-dk);
    }

    const double* w = kW20;
    const double* x = kX20;
    int ng = 10;
    if (std::fabs(r) < 0.3) {
        w = kW6;
        x = kX6;
        ng = 3;
    } else if (std::fabs(r) < 0.75) {
        w = kW12;
        x = kX12;
        ng = 6;
    }

    double h = dh;
    double k = dk;
    double hk = h * k;
    double bvn = 0.0;

    if (std::fabs(r) <= 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < ng; ++i) {
            double sn = std::sin(asr * (1.0 - x[i]) / 2.0);
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (1.0 + x[i]) / 2.0);
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        bvn = bvn * asr / (2.0 * kTwoPi) + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if (r < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (std::fabs(r) < 1.0) {
            const double as = (1.0 - r) * (1.0 + r);
            double a = std::sqrt(as);
            const double bs = (h - k) * (h - k);
            const double c = (4.0 - hk) / 8.0;
            const double d = (12.0 - hk) / 16.0;
            double asr = -(bs / as + hk) / 2.0;
            if (asr > -100.0) {
                bvn = a * std::exp(asr) *
                      (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
                       c * d * as * as / 5.0);
            }
            if (-hk < 100.0) {
                const double b = std::sqrt(bs);
                const double sp = std::sqrt(kTwoPi) * norm_cdf(-b / a);
                bvn -= std::exp(-hk / 2.0) * sp * b *
                       (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (int i = 0; i < ng; ++i) {
                for (int is = -1; is <= 1; is += 2) {
                    const double xs0 = a * (1.0 + is * x[i]);
                    const double xs = xs0 * xs0;
                    const double rs = std::sqrt(1.0 - xs);
                    asr = -(bs / xs + hk) / 2.0;
                    if (asr > -100.0) {
                        const double sp = 1.0 + c * xs * (1.0 + d * xs);
                        const double ep =
                            std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) /
                            rs;
                        bvn += a * w[i] * std::exp(asr) * (ep - sp);
                    }
                }
            }
            bvn = -bvn / kTwoPi;
        }
        if (r > 0.0) {
            bvn += norm_cdf(-std::max(h, k));
        } else {
            bvn = -bvn;
            if (k > h) {
                bvn += norm_cdf(k) - norm_cdf(h);
            }
        }
    }
    return std::clamp(bvn, 0.0, 1.0);
}

struct AmhParts {
    double u, v;    // logistic marginals at a, b
    double w;       // copula denominator 1 - rho(1-u)(1-v)
};

AmhParts amh_parts(double a, double b, double rho) {
    AmhParts p;
    p.u = logistic_cdf(a);
    p.v = logistic_cdf(b);
    p.w = 1.0 - rho * (1.0 - p.u) * (1.0 - p.v);
    return p;
}

}  // namespace

double norm_cdf(double t) {
    check_arg(t);
    return 0.5 * std::erfc(-t / kSqrt2);
}

double norm_pdf(double t) {
    check_arg(t);
    if (std::isinf(t)) return 0.0;
    return kInvSqrt2Pi * std::exp(-0.5 * t * t);
}

double norm_quantile(double p) {
    // Wichura (1988), algorithm AS 241, PPND16.
    if (std::isnan(p) || p < 0.0 || p > 1.0) {
        throw std::domain_error("norm_quantile requires p in [0, 1]");
    }
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                     67265.770927008700853) *
                        r +
                    45921.953931549871457) *
                       r +
                   13731.693765509461125) *
                      r +
                  1971.5909503065514427) *
                     r +
                 133.14166789178437745) *
                    r +
                3.387132872796366608) /
               (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                     39307.89580009271061) *
                        r +
                    21213.794301586595867) *
                       r +
                   5394.1960214247511077) *
                      r +
                  687.1870074920579083) *
                     r +
                 42.313330701600911252) *
                    r +
                1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) *
                        r +
                    0.24178072517745061177) *
                       r +
                   1.27045825245236838258) *
                      r +
                  3.64784832476320460504) *
                     r +
                 5.7694972214606914055) *
                    r +
                4.6303378461565452959) *
                   r +
               1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) *
                        r +
                    0.0151986665636164571966) *
                       r +
                   0.14810397642748007459) *
                      r +
                  0.68976733498510000455) *
                     r +
                 1.6763848301838038494) *
                    r +
                2.05319162663775882187) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r +
                     2.71155556874348757815e-5) *
                        r +
                    0.0012426609473880784386) *
                       r +
                   0.026532189526576123093) *
                      r +
                  0.29656057182850489123) *
                     r +
                 1.7848265399172913358) *
                    r +
                5.4637849111641143699) *
                   r +
               6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r +
                     1.4215117583164458887e-7) *
                        r +
                    1.8463183175100546818e-5) *
                       r +
                   7.868691311456132591e-4) *
                      r +
                  0.0148753612908506148525) *
                     r +
                 0.13692988092273580531) *
                    r +
                0.59983220655588793769) *
                   r +
               1.0);
    }
    return q < 0.0 ? -val : val;
}

double logistic_cdf(double t) {
    check_arg(t);
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double logistic_pdf(double t) {
    const double u = logistic_cdf(t);
    return u * (1.0 - u);
}

double marginal_cdf(LinkFamily family, double t) {
    return family == LinkFamily::Normal ? norm_cdf(t) : logistic_cdf(t);
}

double marginal_pdf(LinkFamily family, double t) {
    return family == LinkFamily::Normal ? norm_pdf(t) : logistic_pdf(t);
}

double marginal_pdf_deriv(LinkFamily family, double t) {
    check_arg(t);
    if (std::isinf(t)) return 0.0;
    if (family == LinkFamily::Normal) {
        return -t * norm_pdf(t);
    }
    const double u = logistic_cdf(t);
    return u * (1.0 - u) * (1.0 - 2.0 * u);
}

double marginal_quantile(LinkFamily family, double p) {
    if (family == LinkFamily::Normal) return norm_quantile(p);
    if (std::isnan(p) || p < 0.0 || p > 1.0) {
        throw std::domain_error("marginal_quantile requires p in [0, 1]");
    }
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::log(p / (1.0 - p));
}

double joint_cdf(LinkFamily family, double a, double b, double rho) {
    check_arg(a);
    check_arg(b);
    check_rho(rho);
    if (family == LinkFamily::Normal) {
        if (a == -std::numeric_limits<double>::infinity() ||
            b == -std::numeric_limits<double>::infinity()) {
            return 0.0;
        }
        if (a == std::numeric_limits<double>::infinity()) return norm_cdf(b);
        if (b == std::numeric_limits<double>::infinity()) return norm_cdf(a);
        if (rho == 0.0) return norm_cdf(a) * norm_cdf(b);
        return bvnu(-a, -b, rho);
    }
    const AmhParts p = amh_parts(a, b, rho);
    return p.u * p.v / p.w;
}

double upper_tail(LinkFamily family, double a, double b, double rho) {
    const double g = joint_cdf(family, a, b, rho);
    const double h =
        1.0 - marginal_cdf(family, a) - marginal_cdf(family, b) + g;
    return std::clamp(h, 0.0, 1.0);
}

JointGrad joint_cdf_grad(LinkFamily family, double a, double b, double rho) {
    check_arg(a);
    check_arg(b);
    check_rho(rho);
    JointGrad g{0.0, 0.0, 0.0};
    if (family == LinkFamily::Normal) {
        const double s = std::sqrt(1.0 - rho * rho);
        if (std::isfinite(a) && std::isfinite(b)) {
            g.da = norm_pdf(a) * norm_cdf((b - rho * a) / s);
            g.db = norm_pdf(b) * norm_cdf((a - rho * b) / s);
            g.drho = joint_pdf(LinkFamily::Normal, a, b, rho);
        } else if (std::isfinite(a)) {
            // b = +inf contributes phi(a); b = -inf pins G at 0.
            g.da = b > 0.0 ? norm_pdf(a) : 0.0;
        } else if (std::isfinite(b)) {
            g.db = a > 0.0 ? norm_pdf(b) : 0.0;
        }
        return g;
    }
    const AmhParts p = amh_parts(a, b, rho);
    const double w2 = p.w * p.w;
    g.da = marginal_pdf(family, a) * p.v * (1.0 - rho * (1.0 - p.v)) / w2;
    g.db = marginal_pdf(family, b) * p.u * (1.0 - rho * (1.0 - p.u)) / w2;
    g.drho = p.u * p.v * (1.0 - p.u) * (1.0 - p.v) / w2;
    return g;
}

double joint_pdf(LinkFamily family, double a, double b, double rho) {
    check_arg(a);
    check_arg(b);
    check_rho(rho);
    if (!std::isfinite(a) || !std::isfinite(b)) return 0.0;
    if (family == LinkFamily::Normal) {
        const double s2 = 1.0 - rho * rho;
        return std::exp(-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * s2)) /
               (kTwoPi * std::sqrt(s2));
    }
    const AmhParts p = amh_parts(a, b, rho);
    const double nv = 1.0 - rho + 2.0 * rho * p.v;
    const double num = nv * p.w - 2.0 * rho * (1.0 - p.u) * p.v *
                                      (1.0 - rho * (1.0 - p.v));
    const double c = num / (p.w * p.w * p.w);
    return c * marginal_pdf(family, a) * marginal_pdf(family, b);
}

double cond_cdf_given_second(LinkFamily family, double a, double b,
                             double rho) {
    check_arg(a);
    check_arg(b);
    check_rho(rho);
    if (a == std::numeric_limits<double>::infinity()) return 1.0;
    if (a == -std::numeric_limits<double>::infinity()) return 0.0;
    if (family == LinkFamily::Normal) {
        if (!std::isfinite(b)) {
            // Limit of Phi((a - rho b)/s) as b -> +-inf.
            if (rho == 0.0) return norm_cdf(a);
            const bool plus = (b > 0.0) != (rho > 0.0);
            return plus ? 1.0 : 0.0;
        }
        return norm_cdf((a - rho * b) / std::sqrt(1.0 - rho * rho));
    }
    const AmhParts p = amh_parts(a, b, rho);
    return p.u * (1.0 - rho * (1.0 - p.u)) / (p.w * p.w);
}

}  // namespace pvmle
