#include "pvmle/bias.hpp"

#include <cmath>

#include "pvmle/dist.hpp"
#include "pvmle/errors.hpp"
#include "pvmle/optim.hpp"

namespace pvmle {

namespace {

// Oracle covariate draw with analytic conditional misclassification
// probabilities under the class-conditional threshold rule:
//   a1(z,x) = Pr[d=1 | y*=1] = (F(x'b0) - G(z'bR - tau_fn, x'b0)) / F(x'b0)
//   a0(z,x) = Pr[d=1 | y*=0] = H(z'bR - tau_fp, x'b0) / (1 - F(x'b0))
struct OracleSample {
    Eigen::MatrixXd x;
    Eigen::VectorXd a0, a1;
    Eigen::VectorXd f0;    // F(x'beta0)
    Eigen::VectorXd ey;    // conditional expectation of the naive outcome
};

OracleSample draw_oracle(const DesignConfig& design, NaiveEstimator estimator,
                         std::int64_t oracle_n) {
    design.validate();
    if (std::isnan(design.tau_fn) || std::isnan(design.tau_fp)) {
        throw DataError("bias oracle requires calibrated thresholds");
    }
    const int k = design.k();
    const int l = design.l();
    const int extras = l - 4;
    const bool dummy_law =
        design.covariate_law == CovariateLaw::StdNormalIIDDummy;

    OracleSample s;
    s.x.resize(oracle_n, k);
    s.a0.resize(oracle_n);
    s.a1.resize(oracle_n);
    s.f0.resize(oracle_n);
    s.ey.resize(oracle_n);

    Rng rng(design.seed ^ 0x0B1A5ULL);
    Eigen::VectorXd zi(l);
    for (std::int64_t i = 0; i < oracle_n; ++i) {
        for (int j = 0; j < k; ++j) {
            if (dummy_law && j == k - 1) {
                s.x(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
            } else {
                s.x(i, j) = rng.normal();
            }
        }
        zi[0] = 1.0;
        zi[1] = s.x(i, 0);
        zi[2] = s.x(i, 1);
        zi[3] = s.x(i, 2);
        for (int j = 0; j < extras; ++j) zi[4 + j] = rng.normal();

        const double xb = s.x.row(i).dot(design.beta0);
        const double zb = zi.dot(design.betaR);
        const double f0 = marginal_cdf(design.family, xb);
        const double g_fn = joint_cdf(design.family, zb - design.tau_fn, xb,
                                      design.rho);
        const double h_fp = upper_tail(design.family, zb - design.tau_fp, xb,
                                       design.rho);
        s.f0[i] = f0;
        s.a1[i] = f0 > 0.0 ? std::clamp((f0 - g_fn) / f0, 0.0, 1.0) : 0.0;
        s.a0[i] =
            f0 < 1.0 ? std::clamp(h_fp / (1.0 - f0), 0.0, 1.0) : 0.0;
        if (estimator == NaiveEstimator::NaiveReported) {
            // E[y^R | z, x] = a0 (1 - F0) + (1 - a1) F0
            s.ey[i] = s.a0[i] * (1.0 - f0) + (1.0 - s.a1[i]) * f0;
        } else {
            // E[y | z, x] = (1 - a1) F0, one-sided model
            s.ey[i] = (1.0 - s.a1[i]) * f0;
        }
    }
    return s;
}

Eigen::MatrixXd a_matrix_from(const OracleSample& s,
                              const Eigen::VectorXd& beta_eval,
                              NaiveEstimator estimator, LinkFamily family) {
    const std::int64_t n = s.x.rows();
    const int k = static_cast<int>(beta_eval.size());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(k, k);
    const Eigen::VectorXd idx = s.x * beta_eval;
    for (std::int64_t i = 0; i < n; ++i) {
        const double F = std::clamp(marginal_cdf(family, idx[i]), 1e-12,
                                    1.0 - 1e-12);
        const double f = marginal_pdf(family, idx[i]);
        const double f1 = marginal_pdf_deriv(family, idx[i]);
        const double a0 =
            estimator == NaiveEstimator::NaiveReported ? s.a0[i] : 0.0;
        const double a1 = s.a1[i];
        const double b = a1 / (1.0 - F) - a0 / F;
        const double c =
            (F * (1.0 - F) -
             (1.0 - 2.0 * F) * (a1 * F - a0 * (1.0 - F))) /
            (F * F * (1.0 - F) * (1.0 - F));
        const double w = b * f1 + c * f * f;
        acc.selfadjointView<Eigen::Lower>().rankUpdate(
            s.x.row(i).transpose(), w);
    }
    Eigen::MatrixXd a = acc.selfadjointView<Eigen::Lower>();
    return a / static_cast<double>(n);
}

Eigen::VectorXd rhs_from(const OracleSample& s, const DesignConfig& design,
                         NaiveEstimator estimator) {
    const std::int64_t n = s.x.rows();
    const Eigen::VectorXd idx = s.x * design.beta0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(design.k());
    for (std::int64_t i = 0; i < n; ++i) {
        const double F = std::clamp(s.f0[i], 1e-12, 1.0 - 1e-12);
        const double f = marginal_pdf(design.family, idx[i]);
        const double a0 =
            estimator == NaiveEstimator::NaiveReported ? s.a0[i] : 0.0;
        rhs += (s.a1[i] / (1.0 - F) - a0 / F) * f * s.x.row(i).transpose();
    }
    return rhs / static_cast<double>(n);
}

// Mean expected score and its Jacobian at beta, with the outcome replaced
// by its conditional expectation under the true law.
void expected_score(const OracleSample& s, LinkFamily family,
                    const Eigen::VectorXd& beta, Eigen::VectorXd& score,
                    Eigen::MatrixXd& jac) {
    const int k = static_cast<int>(beta.size());
    const std::int64_t n = s.x.rows();
    const Eigen::VectorXd idx = s.x * beta;
    score.setZero(k);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(k, k);
    for (std::int64_t i = 0; i < n; ++i) {
        const double F = std::clamp(marginal_cdf(family, idx[i]), 1e-12,
                                    1.0 - 1e-12);
        const double f = marginal_pdf(family, idx[i]);
        const double f1 = marginal_pdf_deriv(family, idx[i]);
        const double denom = F * (1.0 - F);
        const double u = (s.ey[i] - F) / denom;
        score += u * f * s.x.row(i).transpose();
        // d/didx of u * f: -f^2/denom + (ey - F)(f' denom - f^2 (1-2F))/denom^2
        const double dw = -f * f / denom +
                          (s.ey[i] - F) *
                              (f1 * denom - f * f * (1.0 - 2.0 * F)) /
                              (denom * denom);
        acc.selfadjointView<Eigen::Lower>().rankUpdate(
            s.x.row(i).transpose(), dw);
    }
    score /= static_cast<double>(n);
    jac = Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) /
          static_cast<double>(n);
}

BiasReport build_report(const DesignConfig& design, NaiveEstimator estimator,
                        const OracleSample& s) {
    const int k = design.k();

    // Newton root-find of the expected score; the analytic Jacobian gives
    // quadratic convergence where a line-search method stalls at the
    // objective's floating-point resolution.
    Eigen::VectorXd beta = design.beta0;
    Eigen::VectorXd score(k);
    Eigen::MatrixXd jac(k, k);
    expected_score(s, design.family, beta, score, jac);
    double norm = score.norm();
    for (int it = 0; it < 80 && norm > 1e-12; ++it) {
        const Eigen::VectorXd step = jac.ldlt().solve(score);
        double lambda = 1.0;
        Eigen::VectorXd cand;
        Eigen::VectorXd cand_score(k);
        Eigen::MatrixXd cand_jac(k, k);
        double cand_norm = norm;
        for (int half = 0; half < 40; ++half) {
            cand = beta - lambda * step;
            expected_score(s, design.family, cand, cand_score, cand_jac);
            cand_norm = cand_score.norm();
            if (cand_norm < norm) break;
            lambda *= 0.5;
        }
        if (cand_norm >= norm) break;
        beta = cand;
        score = cand_score;
        jac = cand_jac;
        norm = cand_norm;
    }

    BiasReport rep;
    rep.estimator = estimator;
    rep.true_beta = design.beta0;
    rep.pseudo_true = beta;
    rep.bias = rep.pseudo_true - rep.true_beta;
    rep.score_norm_at_pseudo_true = norm;
    rep.converged = norm <= 1e-8;
    rep.rhs_vector = rhs_from(s, design, estimator);
    const Eigen::VectorXd midpoint = 0.5 * (design.beta0 + rep.pseudo_true);
    rep.A_matrix = a_matrix_from(s, midpoint, estimator, design.family);
    return rep;
}

}  // namespace

BiasReport pseudo_true_params(const DesignConfig& design,
                              NaiveEstimator estimator,
                              std::int64_t oracle_n) {
    const OracleSample s = draw_oracle(design, estimator, oracle_n);
    return build_report(design, estimator, s);
}

Eigen::MatrixXd eval_A_matrix(const DesignConfig& design,
                              const Eigen::VectorXd& beta_eval,
                              NaiveEstimator estimator,
                              std::int64_t oracle_n) {
    const OracleSample s = draw_oracle(design, estimator, oracle_n);
    return a_matrix_from(s, beta_eval, estimator, design.family);
}

double verify_bias_identity(const DesignConfig& design, BiasReport& report,
                            std::int64_t oracle_n) {
    const OracleSample s = draw_oracle(design, report.estimator, oracle_n);

    auto residual_at = [&](double t) {
        const Eigen::VectorXd beta_bar =
            design.beta0 + t * (report.pseudo_true - design.beta0);
        const Eigen::MatrixXd a =
            a_matrix_from(s, beta_bar, report.estimator, design.family);
        return (report.bias + a.ldlt().solve(report.rhs_vector)).norm();
    };

    // Coarse grid on the segment, then golden-section refinement.
    double best_t = 0.0;
    double best_r = residual_at(0.0);
    for (int i = 1; i <= 20; ++i) {
        const double t = static_cast<double>(i) / 20.0;
        const double r = residual_at(t);
        if (r < best_r) {
            best_r = r;
            best_t = t;
        }
    }
    double lo = std::max(0.0, best_t - 0.05);
    double hi = std::min(1.0, best_t + 0.05);
    const double gr = 0.6180339887498949;
    double t1 = hi - gr * (hi - lo);
    double t2 = lo + gr * (hi - lo);
    double r1 = residual_at(t1);
    double r2 = residual_at(t2);
    for (int it = 0; it < 25; ++it) {
        if (r1 < r2) {
            hi = t2;
            t2 = t1;
            r2 = r1;
            t1 = hi - gr * (hi - lo);
            r1 = residual_at(t1);
        } else {
            lo = t1;
            t1 = t2;
            r1 = r2;
            t2 = lo + gr * (hi - lo);
            r2 = residual_at(t2);
        }
    }
    const double t_star = r1 < r2 ? t1 : t2;
    const double r_star = std::min({r1, r2, best_r});

    report.identity_residual = r_star;
    report.identity_t = t_star;
    report.A_matrix =
        a_matrix_from(s, design.beta0 + t_star * report.bias,
                      report.estimator, design.family);
    return r_star;
}

double verify_bias_identity(const DesignConfig& design,
                            NaiveEstimator estimator, std::int64_t oracle_n) {
    BiasReport rep = pseudo_true_params(design, estimator, oracle_n);
    return verify_bias_identity(design, rep, oracle_n);
}

}  // namespace pvmle
