#pragma once

// Univariate and bivariate distribution kernel for the two error families:
// standard normal with Gaussian dependence, and logistic marginals with the
// Ali-Mikhail-Haq one-parameter joint. All joints are parameterized by a
// dependence parameter rho in (-1, 1). Infinities are accepted as sentinel
// arguments and resolved analytically.

namespace pvmle {

enum class LinkFamily { Normal, AmhLogistic };

struct JointGrad {
    double da;    // dG/da
    double db;    // dG/db
    double drho;  // dG/drho
};

// Standard normal helpers.
double norm_cdf(double t);
double norm_pdf(double t);
// Inverse standard normal CDF (Wichura's AS 241, double precision).
double norm_quantile(double p);

// Standard logistic helpers.
double logistic_cdf(double t);
double logistic_pdf(double t);

// Marginal F, f and f' for a family. F(-inf)=0, F(+inf)=1; NaN input throws
// std::domain_error.
double marginal_cdf(LinkFamily family, double t);
double marginal_pdf(LinkFamily family, double t);
double marginal_pdf_deriv(LinkFamily family, double t);
// Inverse marginal CDF (used by samplers and threshold construction).
double marginal_quantile(LinkFamily family, double p);

// Joint CDF G(a, b; rho) = Pr[e1 <= a, e2 <= b]. Requires |rho| < 1 (throws
// std::domain_error otherwise, also on NaN input). Exactly factorizes at
// rho = 0. Normal case uses Drezner/Genz Gauss-Legendre quadrature with a
// tail series for |rho| > 0.925.
double joint_cdf(LinkFamily family, double a, double b, double rho);

// Upper tail H(a, b; rho) = Pr[e1 > a, e2 > b] = 1 - F(a) - F(b) + G(a,b;rho).
double upper_tail(LinkFamily family, double a, double b, double rho);

// Analytic partials of G with respect to a, b and rho.
JointGrad joint_cdf_grad(LinkFamily family, double a, double b, double rho);

// Bivariate density of the joint law (normal: phi2; AMH: d2G/dadb).
double joint_pdf(LinkFamily family, double a, double b, double rho);

// Pr[e1 <= a | e2 = b] = (dG/db) / f(b). Stable limit used where ratios of
// vanishing probabilities are needed.
double cond_cdf_given_second(LinkFamily family, double a, double b, double rho);

}  // namespace pvmle
