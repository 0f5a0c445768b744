#pragma once

// Test-only numerical oracles, independent of the library's evaluation
// paths: adaptive Simpson quadrature, a long-double erf series, and literal
// reimplementations of the likelihood formulas.

#include <cmath>
#include <functional>
#include <initializer_list>
#include <vector>
#include <algorithm>

namespace oracles {

// Adaptive Simpson on [a, b] to absolute tolerance tol.
template <typename F>
double simpson_step(const F& f, double a, double b, double fa, double fm,
                    double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double integrate(const F& f, double a, double b, double tol = 1e-12) {
    if (a >= b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, b, fa, fm, fb, whole, tol, 48);
}

inline double normal_density(double t) {
    return 0.3989422804014327 * std::exp(-0.5 * t * t);
}

// Adaptive integration over panels split at the given interior knots, so
// localized bumps are not missed and tail panels converge immediately.
template <typename F>
double integrate_paneled(const F& f, double a, double b,
                         std::initializer_list<double> knots, double tol) {
    std::vector<double> cuts{a};
    for (const double k : knots) {
        if (k > a && k < b) cuts.push_back(k);
    }
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        acc += integrate(f, cuts[i], cuts[i + 1], tol);
    }
    return acc;
}

// Iterated 2-d adaptive quadrature of the bivariate normal density over
// (-inf, a] x (-inf, b]; tails truncated at -8.5 (mass < 1e-17).
inline double bvn_cdf_quadrature(double a, double b, double rho,
                                 double tol = 1e-12) {
    const double lo = -8.5;
    const double ca = std::min(a, 8.5);
    const double cb = std::min(b, 8.5);
    if (ca <= lo || cb <= lo) return 0.0;
    const double s = std::sqrt(1.0 - rho * rho);
    auto outer = [&](double t) {
        const double center = rho * t;
        auto inner = [&](double u) {
            return normal_density((u - center) / s) / s;
        };
        // The conditional density is a bump of width s at rho * t.
        return normal_density(t) *
               integrate_paneled(inner, lo, cb,
                                 {center - 3.0 * s, center, center + 3.0 * s},
                                 tol);
    };
    return integrate_paneled(outer, lo, ca, {-4.0, -2.0, 0.0, 2.0, 4.0},
                             tol);
}

// erf via its long-double Maclaurin series (converges fast for |z| < 4).
inline long double erf_series(long double z) {
    const long double two_over_sqrt_pi = 1.128379167095512573896L;
    long double term = z;
    long double sum = z;
    for (int n = 1; n < 200; ++n) {
        term *= -z * z / n;
        const long double add = term / (2 * n + 1);
        sum += add;
        if (std::fabs(static_cast<double>(add)) < 1e-22) break;
    }
    return two_over_sqrt_pi * sum;
}

inline double norm_cdf_series(double t) {
    return 0.5 + 0.5 * static_cast<double>(
                     erf_series(static_cast<long double>(t) /
                                1.414213562373095048802L));
}

}  // namespace oracles
