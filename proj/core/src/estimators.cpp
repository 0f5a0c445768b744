#include "pvmle/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pvmle/dgp.hpp"
#include "pvmle/errors.hpp"
#include "pvmle/optim.hpp"

namespace pvmle {

namespace {

constexpr double kProbFloor = 1e-12;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

// Exact derivative weight of w -> w * log(max(p, floor)): zero on the
// floored branch, 1/p otherwise. Keeps the analytic gradient equal to the
// gradient of the computed objective and bounded during line search.
double inv_or_zero(double p) { return p > kProbFloor ? 1.0 / p : 0.0; }

double sech2(double t) {
    const double c = std::cosh(t);
    return 1.0 / (c * c);
}

// Eigendecomposition-based inverse with a singularity flag.
std::optional<Eigen::MatrixXd> robust_inverse(const Eigen::MatrixXd& m,
                                              bool* flat) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const auto& ev = es.eigenvalues();
    const double max_ev = ev.maxCoeff();
    if (!(max_ev > 0.0) || ev.minCoeff() <= 1e-12 * max_ev) {
        if (flat) *flat = true;
        return std::nullopt;
    }
    return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

void fill_vcov(FitResult& fit, const Eigen::MatrixXd& scores) {
    const Eigen::MatrixXd opg = scores.transpose() * scores;
    fit.vcov = robust_inverse(opg, &fit.flat);
    const int p = static_cast<int>(fit.params.size());
    fit.std_errors = Eigen::VectorXd::Constant(p, kNaN);
    if (fit.vcov) {
        for (int j = 0; j < p; ++j) {
            const double v = (*fit.vcov)(j, j);
            fit.std_errors[j] = v >= 0.0 ? std::sqrt(v) : kNaN;
        }
    }
}

// Numerical-Hessian covariance of the sum log-likelihood in reporting
// coordinates, via central differences of the mean objective on the raw
// scale and a delta-method transform.
void fill_hessian_vcov(FitResult& fit, const GradObjective& mean_obj,
                       const Eigen::VectorXd& raw_opt,
                       const Eigen::MatrixXd& jac, std::int64_t n) {
    const int p = static_cast<int>(raw_opt.size());
    Eigen::MatrixXd hess(p, p);
    Eigen::VectorXd gp(p), gm(p), x = raw_opt;
    for (int j = 0; j < p; ++j) {
        const double h = 1e-5 * std::max(1.0, std::fabs(raw_opt[j]));
        x[j] = raw_opt[j] + h;
        mean_obj(x, gp);
        x[j] = raw_opt[j] - h;
        mean_obj(x, gm);
        x[j] = raw_opt[j];
        hess.col(j) = (gp - gm) / (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose());
    const Eigen::MatrixXd info = -static_cast<double>(n) * hess;
    bool flat = false;
    auto inv = robust_inverse(info, &flat);
    if (!inv) {
        fit.flat = true;
        return;
    }
    fit.vcov = jac * (*inv) * jac.transpose();
    for (int j = 0; j < fit.params.size(); ++j) {
        const double v = (*fit.vcov)(j, j);
        fit.std_errors[j] = v >= 0.0 ? std::sqrt(v) : kNaN;
    }
}

// ---------------------------------------------------------------------------
// Standard binary MLE machinery.

struct BinaryProblem {
    const Eigen::MatrixXd& xmat;
    Eigen::VectorXd y;  // outcomes as doubles (allows expected outcomes)
    LinkFamily family;

    double mean_loglik_grad(const Eigen::VectorXd& beta,
                            Eigen::VectorXd& grad) const {
        const std::int64_t n = xmat.rows();
        const Eigen::VectorXd idx = xmat * beta;
        double ll = 0.0;
        grad.setZero(beta.size());
        for (std::int64_t i = 0; i < n; ++i) {
            const double F = marginal_cdf(family, idx[i]);
            const double f = marginal_pdf(family, idx[i]);
            ll += y[i] * safe_log(F) + (1.0 - y[i]) * safe_log(1.0 - F);
            const double u = y[i] * inv_or_zero(F) -
                             (1.0 - y[i]) * inv_or_zero(1.0 - F);
            grad += u * f * xmat.row(i).transpose();
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        grad *= inv_n;
        return ll * inv_n;
    }
};

OptimResult fit_binary(const BinaryProblem& prob, Eigen::VectorXd start,
                       const FitOptions& opts) {
    OptimOptions oo;
    oo.grad_tol = opts.grad_tol;
    oo.f_reltol = opts.f_reltol;
    oo.max_iterations = opts.max_iterations;
    return maximize_bfgs(
        [&prob](const Eigen::VectorXd& b, Eigen::VectorXd& g) {
            return prob.mean_loglik_grad(b, g);
        },
        std::move(start), oo);
}

Eigen::VectorXd outcome_vector(const Dataset& data, NaiveOutcome outcome,
                               std::vector<std::int64_t>* keep_rows) {
    const std::int64_t n = data.n();
    switch (outcome) {
        case NaiveOutcome::Reported:
            return data.y_reported.cast<double>();
        case NaiveOutcome::Validated:
            return data.validated().cast<double>();
        case NaiveOutcome::RestrictedSample: {
            const auto& yv = data.validated();
            std::vector<std::int64_t> rows;
            for (std::int64_t i = 0; i < n; ++i) {
                if (data.y_reported[i] == 1) rows.push_back(i);
            }
            if (rows.empty()) {
                throw DataError(
                    "restricted sample is empty: no reported participation");
            }
            Eigen::VectorXd t(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                t[i] = yv[rows[i]];
            }
            *keep_rows = std::move(rows);
            return t;
        }
    }
    throw DataError("unknown outcome");
}

// ---------------------------------------------------------------------------
// PPO / PO likelihood internals.

struct RecordProbs {
    double p, q, r;
    double dp_dzb, dp_dxb, dp_drho;
    double dq_dzb, dq_dxb, dq_drho;
};

RecordProbs record_probs(LinkFamily family, double zb, double xb,
                         double rho) {
    RecordProbs rp;
    const double g = joint_cdf(family, zb, xb, rho);
    const double fz = marginal_cdf(family, zb);
    const double fx = marginal_cdf(family, xb);
    rp.p = g;
    rp.q = std::clamp(1.0 - fz - fx + g, 0.0, 1.0);
    rp.r = std::clamp(1.0 - rp.p - rp.q, 0.0, 1.0);
    const JointGrad jg = joint_cdf_grad(family, zb, xb, rho);
    const double fz_pdf = marginal_pdf(family, zb);
    const double fx_pdf = marginal_pdf(family, xb);
    rp.dp_dzb = jg.da;
    rp.dp_dxb = jg.db;
    rp.dp_drho = jg.drho;
    rp.dq_dzb = jg.da - fz_pdf;
    rp.dq_dxb = jg.db - fx_pdf;
    rp.dq_drho = jg.drho;
    return rp;
}

void check_partial_validation(const Dataset& data) {
    const auto& yv = data.validated();
    for (std::int64_t i = 0; i < data.n(); ++i) {
        if (yv[i] > data.y_reported[i]) {
            throw DataError(
                "partial-validation violation (validated=1, reported=0) at "
                "row " +
                std::to_string(i + 1));
        }
    }
}

enum class PoVariant { Po, Ppo };

// The PO likelihood needs only the partially validated outcome; a dataset
// carrying it as the sole (reported) column is accepted.
const Eigen::VectorXi& po_outcome(const Dataset& data) {
    return data.y_validated ? *data.y_validated : data.y_reported;
}

// Mean log-likelihood and gradient on the packed raw scale.
double po_family_loglik_grad(PoVariant variant, const ThetaFull& theta,
                             const Dataset& data, LinkFamily family,
                             Eigen::VectorXd* grad) {
    const std::int64_t n = data.n();
    const int l = data.l();
    const int k = data.k();
    const double rho = theta.rho();
    const double drho_draw = sech2(theta.rho_raw);
    const Eigen::VectorXd zb = data.z * theta.beta_r;
    const Eigen::VectorXd xb = data.x * theta.beta;
    const auto& yv = variant == PoVariant::Po ? po_outcome(data)
                                              : data.validated();

    if (grad) {
        grad->setZero(l + k + 1);
    }
    double ll = 0.0;
    double g_rho = 0.0;
    Eigen::VectorXd gr = Eigen::VectorXd::Zero(l);
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(k);

    for (std::int64_t i = 0; i < n; ++i) {
        const RecordProbs rp = record_probs(family, zb[i], xb[i], rho);
        const double y = yv[i];
        if (variant == PoVariant::Po) {
            ll += y * safe_log(rp.p) + (1.0 - y) * safe_log(1.0 - rp.p);
            if (grad) {
                const double u = y * inv_or_zero(rp.p) -
                                 (1.0 - y) * inv_or_zero(1.0 - rp.p);
                gr += u * rp.dp_dzb * data.z.row(i).transpose();
                gx += u * rp.dp_dxb * data.x.row(i).transpose();
                g_rho += u * rp.dp_drho;
            }
        } else {
            const double yr = data.y_reported[i];
            ll += y * safe_log(rp.p) + (yr - y) * safe_log(rp.q) +
                  (1.0 - yr) * safe_log(rp.r);
            if (grad) {
                const double w1 = y * inv_or_zero(rp.p);
                const double w2 = (yr - y) * inv_or_zero(rp.q);
                const double w3 = (1.0 - yr) * inv_or_zero(rp.r);
                const double dzb = w1 * rp.dp_dzb + w2 * rp.dq_dzb -
                                   w3 * (rp.dp_dzb + rp.dq_dzb);
                const double dxb = w1 * rp.dp_dxb + w2 * rp.dq_dxb -
                                   w3 * (rp.dp_dxb + rp.dq_dxb);
                gr += dzb * data.z.row(i).transpose();
                gx += dxb * data.x.row(i).transpose();
                g_rho += (w1 + w2 - 2.0 * w3) * rp.dp_drho;
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad) {
        grad->segment(0, l) = gr * inv_n;
        grad->segment(l, k) = gx * inv_n;
        (*grad)[l + k] = g_rho * drho_draw * inv_n;
    }
    return ll * inv_n;
}

// Reporting-scale individual scores (beta_r, beta, rho) for PO/PPO.
Eigen::MatrixXd po_family_scores(PoVariant variant, const ThetaFull& theta,
                                 const Dataset& data, LinkFamily family) {
    const std::int64_t n = data.n();
    const int l = data.l();
    const int k = data.k();
    const double rho = theta.rho();
    const Eigen::VectorXd zb = data.z * theta.beta_r;
    const Eigen::VectorXd xb = data.x * theta.beta;
    const auto& yv =
        variant == PoVariant::Po ? po_outcome(data) : data.validated();
    Eigen::MatrixXd scores(n, l + k + 1);
    for (std::int64_t i = 0; i < n; ++i) {
        const RecordProbs rp = record_probs(family, zb[i], xb[i], rho);
        const double y = yv[i];
        double dzb, dxb, drho;
        if (variant == PoVariant::Po) {
            const double u = y * inv_or_zero(rp.p) -
                             (1.0 - y) * inv_or_zero(1.0 - rp.p);
            dzb = u * rp.dp_dzb;
            dxb = u * rp.dp_dxb;
            drho = u * rp.dp_drho;
        } else {
            const double yr = data.y_reported[i];
            const double w1 = y * inv_or_zero(rp.p);
            const double w2 = (yr - y) * inv_or_zero(rp.q);
            const double w3 = (1.0 - yr) * inv_or_zero(rp.r);
            dzb = w1 * rp.dp_dzb + w2 * rp.dq_dzb -
                  w3 * (rp.dp_dzb + rp.dq_dzb);
            dxb = w1 * rp.dp_dxb + w2 * rp.dq_dxb -
                  w3 * (rp.dp_dxb + rp.dq_dxb);
            drho = (w1 + w2 - 2.0 * w3) * rp.dp_drho;
        }
        scores.row(i).segment(0, l) = dzb * data.z.row(i);
        scores.row(i).segment(l, k) = dxb * data.x.row(i);
        scores(i, l + k) = drho;
    }
    return scores;
}

FitResult fit_po_family(PoVariant variant, const Dataset& data,
                        LinkFamily family, std::optional<ThetaFull> start,
                        const FitOptions& opts) {
    const int l = data.l();
    const int k = data.k();
    const std::int64_t n = data.n();
    if (variant == PoVariant::Ppo) check_partial_validation(data);

    ThetaFull start_theta;
    if (start) {
        start_theta = *start;
        if (start_theta.beta_r.size() != l || start_theta.beta.size() != k) {
            throw DataError("starting theta has wrong dimensions");
        }
    } else {
        // Naive probit starts: beta from the validated outcome, beta_r from
        // the reported outcome on z (falling back to y when y^R is absent).
        const Eigen::VectorXi& yv = variant == PoVariant::Po
                                        ? po_outcome(data)
                                        : data.validated();
        BinaryProblem px{data.x, yv.cast<double>(), family};
        start_theta.beta =
            fit_binary(px, Eigen::VectorXd::Zero(k), opts).x;
        Eigen::VectorXd zy = variant == PoVariant::Ppo
                                 ? data.y_reported.cast<double>()
                                 : yv.cast<double>();
        BinaryProblem pz{data.z, std::move(zy), family};
        start_theta.beta_r =
            fit_binary(pz, Eigen::VectorXd::Zero(l), opts).x;
        start_theta.rho_raw = 0.0;
    }

    OptimOptions oo;
    oo.grad_tol = opts.grad_tol;
    oo.f_reltol = opts.f_reltol;
    oo.max_iterations = opts.max_iterations;

    GradObjective obj = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
        const ThetaFull th = ThetaFull::unpack(v, l, k);
        return po_family_loglik_grad(variant, th, data, family, &g);
    };

    // Newton polish on the mean score with outer-product curvature: the
    // running BFGS estimate handles the nearly flat dependence direction
    // poorly near the optimum, while the OPG information resolves it.
    auto polish = [&](OptimResult& res) {
        Eigen::VectorXd g(l + k + 1);
        double f = obj(res.x, g);
        for (int it = 0; it < 40; ++it) {
            if (g.lpNorm<Eigen::Infinity>() <= oo.grad_tol) {
                res.converged = true;
                break;
            }
            const ThetaFull th = ThetaFull::unpack(res.x, l, k);
            Eigen::MatrixXd s = po_family_scores(variant, th, data, family);
            s.col(l + k) *= sech2(th.rho_raw);  // chain to the raw scale
            Eigen::MatrixXd info =
                (s.transpose() * s) / static_cast<double>(n);
            info.diagonal().array() += 1e-10 * (info.trace() + 1.0);
            const Eigen::VectorXd step = info.ldlt().solve(g);
            double alpha = 1.0;
            bool accepted = false;
            Eigen::VectorXd xn, gn(g.size());
            double fn2 = f;
            for (int ls = 0; ls < 30; ++ls) {
                xn = res.x + alpha * step;
                fn2 = obj(xn, gn);
                if (std::isfinite(fn2) &&
                    fn2 >= f - 1e-15 * (std::fabs(f) + 1.0) &&
                    gn.lpNorm<Eigen::Infinity>() <
                        g.lpNorm<Eigen::Infinity>()) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
            res.x = xn;
            g = gn;
            if (fn2 > f) res.f_history.push_back(fn2);
            f = std::max(f, fn2);
            ++res.iterations;
        }
        res.f = f;
        res.gradient = g;
        if (g.lpNorm<Eigen::Infinity>() <= oo.grad_tol) {
            res.converged = true;
        }
    };

    OptimResult best = maximize_bfgs(obj, start_theta.pack(), oo);
    if (!best.converged) polish(best);
    if (!best.converged) {
        Rng rng(0x5EED0000ULL + static_cast<std::uint64_t>(
                                    variant == PoVariant::Ppo ? 1 : 2));
        for (int attempt = 0; attempt < opts.extra_starts; ++attempt) {
            Eigen::VectorXd pert = start_theta.pack();
            for (int j = 0; j < pert.size(); ++j) {
                pert[j] += 0.5 * rng.normal();
            }
            OptimResult alt = maximize_bfgs(obj, pert, oo);
            if (!alt.converged) polish(alt);
            const bool better =
                (alt.converged && !best.converged) ||
                (alt.converged == best.converged && alt.f > best.f);
            if (better) best = std::move(alt);
            if (best.converged) break;
        }
    }

    FitResult fit;
    fit.estimator =
        variant == PoVariant::Ppo ? Estimator::PpoMle : Estimator::PoMle;
    fit.l = l;
    fit.k = k;
    const ThetaFull opt_theta = ThetaFull::unpack(best.x, l, k);
    fit.params.resize(l + k + 1);
    fit.params.segment(0, l) = opt_theta.beta_r;
    fit.params.segment(l, k) = opt_theta.beta;
    fit.params[l + k] = opt_theta.rho();
    for (int j = 0; j < l; ++j) {
        fit.param_names.push_back("betaR_" + data.z_names[j]);
    }
    for (int j = 0; j < k; ++j) {
        fit.param_names.push_back("beta_" + data.x_names[j]);
    }
    fit.param_names.push_back("rho");
    fit.loglik = best.f * static_cast<double>(n);
    fit.converged = best.converged;
    fit.iterations = best.iterations;
    fit.gradient_norm = best.gradient.lpNorm<Eigen::Infinity>();
    fit.loglik_history = best.f_history;

    if (opts.hessian_vcov) {
        Eigen::MatrixXd jac =
            Eigen::MatrixXd::Identity(l + k + 1, l + k + 1);
        jac(l + k, l + k) = sech2(opt_theta.rho_raw);
        fit.std_errors = Eigen::VectorXd::Constant(l + k + 1, kNaN);
        fill_hessian_vcov(fit, obj, best.x, jac, n);
    } else {
        fill_vcov(fit, score_matrix(fit, data, family));
    }
    return fit;
}

}  // namespace

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::ProbitReported: return "probit-reported";
        case Estimator::ProbitValidated: return "probit-validated";
        case Estimator::ProbitRestricted: return "probit-restricted";
        case Estimator::Has: return "has";
        case Estimator::PoMle: return "po";
        case Estimator::PpoMle: return "ppo";
    }
    return "unknown";
}

Estimator estimator_from_name(const std::string& name) {
    static const std::map<std::string, Estimator> table = {
        {"probit-reported", Estimator::ProbitReported},
        {"probit-validated", Estimator::ProbitValidated},
        {"probit-restricted", Estimator::ProbitRestricted},
        {"has", Estimator::Has},
        {"po", Estimator::PoMle},
        {"ppo", Estimator::PpoMle},
    };
    const auto it = table.find(name);
    if (it == table.end()) {
        throw DataError("unknown estimator name: " + name);
    }
    return it->second;
}

Eigen::VectorXd ThetaFull::pack() const {
    Eigen::VectorXd v(beta_r.size() + beta.size() + 1);
    v.segment(0, beta_r.size()) = beta_r;
    v.segment(beta_r.size(), beta.size()) = beta;
    v[v.size() - 1] = rho_raw;
    return v;
}

ThetaFull ThetaFull::unpack(const Eigen::VectorXd& v, int l, int k) {
    ThetaFull t;
    t.beta_r = v.segment(0, l);
    t.beta = v.segment(l, k);
    t.rho_raw = v[l + k];
    return t;
}

Eigen::VectorXd FitResult::beta_block() const {
    switch (estimator) {
        case Estimator::Has:
            return params.segment(2, params.size() - 2);
        case Estimator::PoMle:
        case Estimator::PpoMle:
            return params.segment(l, k);
        default:
            return params;
    }
}

ThetaFull FitResult::theta() const {
    if (estimator != Estimator::PoMle && estimator != Estimator::PpoMle) {
        throw DataError("theta() requires a PO or PPO fit");
    }
    ThetaFull t;
    t.beta_r = params.segment(0, l);
    t.beta = params.segment(l, k);
    t.rho_raw = std::atanh(params[l + k]);
    return t;
}

FitResult fit_probit_naive(const Dataset& data, NaiveOutcome outcome,
                           LinkFamily family, const FitOptions& opts) {
    std::vector<std::int64_t> keep;
    const Eigen::VectorXd y = outcome_vector(data, outcome, &keep);
    Eigen::MatrixXd xmat;
    if (outcome == NaiveOutcome::RestrictedSample) {
        xmat.resize(keep.size(), data.k());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            xmat.row(i) = data.x.row(keep[i]);
        }
    } else {
        xmat = data.x;
    }

    BinaryProblem prob{xmat, y, family};
    OptimResult opt = fit_binary(prob, Eigen::VectorXd::Zero(data.k()), opts);

    FitResult fit;
    switch (outcome) {
        case NaiveOutcome::Reported:
            fit.estimator = Estimator::ProbitReported;
            break;
        case NaiveOutcome::Validated:
            fit.estimator = Estimator::ProbitValidated;
            break;
        case NaiveOutcome::RestrictedSample:
            fit.estimator = Estimator::ProbitRestricted;
            break;
    }
    fit.k = data.k();
    fit.params = opt.x;
    for (int j = 0; j < data.k(); ++j) {
        fit.param_names.push_back("beta_" + data.x_names[j]);
    }
    fit.loglik = opt.f * static_cast<double>(xmat.rows());
    // Perfect separation drives coefficients off toward infinity; the
    // gradient can underflow the tolerance once the indices saturate, so a
    // runaway norm is treated as non-convergence.
    fit.converged =
        opt.converged && opt.x.lpNorm<Eigen::Infinity>() < 15.0;
    fit.iterations = opt.iterations;
    fit.gradient_norm = opt.gradient.lpNorm<Eigen::Infinity>();
    fit.loglik_history = opt.f_history;

    if (opts.hessian_vcov) {
        GradObjective obj = [&prob](const Eigen::VectorXd& b,
                                    Eigen::VectorXd& g) {
            return prob.mean_loglik_grad(b, g);
        };
        fit.std_errors = Eigen::VectorXd::Constant(data.k(), kNaN);
        fill_hessian_vcov(fit, obj, opt.x,
                          Eigen::MatrixXd::Identity(data.k(), data.k()),
                          xmat.rows());
    } else {
        // Scores on the fitting subsample.
        const Eigen::VectorXd idx = xmat * opt.x;
        Eigen::MatrixXd scores(xmat.rows(), data.k());
        for (std::int64_t i = 0; i < xmat.rows(); ++i) {
            const double F = marginal_cdf(family, idx[i]);
            const double f = marginal_pdf(family, idx[i]);
            const double u = y[i] * inv_or_zero(F) -
                             (1.0 - y[i]) * inv_or_zero(1.0 - F);
            scores.row(i) = u * f * xmat.row(i);
        }
        fill_vcov(fit, scores);
    }
    return fit;
}

FitResult fit_has(const Dataset& data, LinkFamily family,
                  const FitOptions& opts) {
    const int k = data.k();
    const std::int64_t n = data.n();
    const Eigen::VectorXd y = data.y_reported.cast<double>();

    // Raw parameterization: alpha_j = logistic(g_j)/2 keeps each rate in
    // [0, 1/2) and the sum below 1.
    auto alpha = [](double g) { return 0.5 * logistic_cdf(g); };
    auto dalpha = [](double g) { return 0.5 * logistic_pdf(g); };

    GradObjective obj = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
        const double a0 = alpha(v[0]);
        const double a1 = alpha(v[1]);
        const Eigen::VectorXd beta = v.segment(2, k);
        const Eigen::VectorXd idx = data.x * beta;
        double ll = 0.0;
        grad.setZero(k + 2);
        for (std::int64_t i = 0; i < n; ++i) {
            const double F = marginal_cdf(family, idx[i]);
            const double f = marginal_pdf(family, idx[i]);
            const double psi = a0 + (1.0 - a0 - a1) * F;
            ll += y[i] * safe_log(psi) + (1.0 - y[i]) * safe_log(1.0 - psi);
            const double u = y[i] * inv_or_zero(psi) -
                             (1.0 - y[i]) * inv_or_zero(1.0 - psi);
            grad[0] += u * (1.0 - F);
            grad[1] += u * (-F);
            grad.segment(2, k) +=
                u * (1.0 - a0 - a1) * f * data.x.row(i).transpose();
        }
        grad[0] *= dalpha(v[0]);
        grad[1] *= dalpha(v[1]);
        const double inv_n = 1.0 / static_cast<double>(n);
        grad *= inv_n;
        return ll * inv_n;
    };

    Eigen::VectorXd start(k + 2);
    start[0] = start[1] = std::log(0.1 / 0.9);  // alpha ~= 0.05
    start.segment(2, k) =
        fit_probit_naive(data, NaiveOutcome::Reported, family, opts).params;

    OptimOptions oo;
    oo.grad_tol = opts.grad_tol;
    oo.f_reltol = opts.f_reltol;
    oo.max_iterations = opts.max_iterations;
    OptimResult opt = maximize_bfgs(obj, start, oo);
    if (!opt.converged) {
        Rng rng(0x5EED0003ULL);
        for (int attempt = 0; attempt < opts.extra_starts; ++attempt) {
            Eigen::VectorXd pert = start;
            for (int j = 0; j < pert.size(); ++j) pert[j] += 0.5 * rng.normal();
            OptimResult alt = maximize_bfgs(obj, pert, oo);
            const bool better = (alt.converged && !opt.converged) ||
                                (alt.converged == opt.converged &&
                                 alt.f > opt.f);
            if (better) opt = std::move(alt);
            if (opt.converged) break;
        }
    }

    FitResult fit;
    fit.estimator = Estimator::Has;
    fit.k = k;
    fit.params.resize(k + 2);
    fit.params[0] = alpha(opt.x[0]);
    fit.params[1] = alpha(opt.x[1]);
    fit.params.segment(2, k) = opt.x.segment(2, k);
    fit.param_names = {"alpha0", "alpha1"};
    for (int j = 0; j < k; ++j) {
        fit.param_names.push_back("beta_" + data.x_names[j]);
    }
    fit.loglik = opt.f * static_cast<double>(n);
    fit.converged = opt.converged;
    fit.iterations = opt.iterations;
    fit.gradient_norm = opt.gradient.lpNorm<Eigen::Infinity>();
    fit.loglik_history = opt.f_history;
    fit.boundary = fit.params[0] < 1e-4 || fit.params[1] < 1e-4;

    if (opts.hessian_vcov) {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(k + 2, k + 2);
        jac(0, 0) = dalpha(opt.x[0]);
        jac(1, 1) = dalpha(opt.x[1]);
        fit.std_errors = Eigen::VectorXd::Constant(k + 2, kNaN);
        fill_hessian_vcov(fit, obj, opt.x, jac, n);
    } else {
        fill_vcov(fit, score_matrix(fit, data, family));
    }
    return fit;
}

double ppo_loglik(const ThetaFull& theta, const Dataset& data,
                  LinkFamily family) {
    check_partial_validation(data);
    return po_family_loglik_grad(PoVariant::Ppo, theta, data, family,
                                 nullptr) *
           static_cast<double>(data.n());
}

double po_loglik(const ThetaFull& theta, const Dataset& data,
                 LinkFamily family) {
    return po_family_loglik_grad(PoVariant::Po, theta, data, family,
                                 nullptr) *
           static_cast<double>(data.n());
}

double ppo_loglik_grad(const ThetaFull& theta, const Dataset& data,
                       LinkFamily family, Eigen::VectorXd& grad) {
    return po_family_loglik_grad(PoVariant::Ppo, theta, data, family, &grad);
}

double po_loglik_grad(const ThetaFull& theta, const Dataset& data,
                      LinkFamily family, Eigen::VectorXd& grad) {
    return po_family_loglik_grad(PoVariant::Po, theta, data, family, &grad);
}

FitResult fit_ppo_mle(const Dataset& data, LinkFamily family,
                      std::optional<ThetaFull> start, const FitOptions& opts) {
    return fit_po_family(PoVariant::Ppo, data, family, std::move(start),
                         opts);
}

FitResult fit_po_mle(const Dataset& data, LinkFamily family,
                     std::optional<ThetaFull> start, const FitOptions& opts) {
    return fit_po_family(PoVariant::Po, data, family, std::move(start), opts);
}

MisclassProbs misclass_probs(const ThetaFull& theta, const Dataset& data,
                             LinkFamily family) {
    const std::int64_t n = data.n();
    const double rho = theta.rho();
    const Eigen::VectorXd zb = data.z * theta.beta_r;
    const Eigen::VectorXd xb = data.x * theta.beta;
    MisclassProbs out;
    out.a0r.resize(n);
    out.a1r.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double F = marginal_cdf(family, xb[i]);
        if (F < kProbFloor || 1.0 - F < kProbFloor) {
            // Degenerate participation probability: use the conditional law
            // of the misreporting error at the boundary index.
            const double cond =
                cond_cdf_given_second(family, zb[i], xb[i], rho);
            out.a1r[i] = F < kProbFloor ? 1.0 - cond : 0.0;
            out.a0r[i] = 1.0 - F < kProbFloor ? 1.0 - cond : 0.0;
            out.flagged.push_back(i);
            continue;
        }
        const double g = joint_cdf(family, zb[i], xb[i], rho);
        const double h = upper_tail(family, zb[i], xb[i], rho);
        out.a1r[i] = std::clamp((F - g) / F, 0.0, 1.0);
        out.a0r[i] = std::clamp(h / (1.0 - F), 0.0, 1.0);
    }
    return out;
}

MarginalEffects marginal_effects(const FitResult& fit, const Dataset& data,
                                 LinkFamily family) {
    const Eigen::VectorXd beta = fit.beta_block();
    const std::int64_t n = data.n();
    const int k = static_cast<int>(beta.size());
    const Eigen::VectorXd idx = data.x * beta;
    MarginalEffects me;
    me.per_record.resize(n, k);
    me.predicted.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double f = marginal_pdf(family, idx[i]);
        me.predicted[i] = marginal_cdf(family, idx[i]);
        for (int j = 0; j < k; ++j) {
            me.per_record(i, j) = f * beta[j];
        }
    }
    me.average = me.per_record.colwise().mean();
    return me;
}

Eigen::MatrixXd score_matrix(const FitResult& fit, const Dataset& data,
                             LinkFamily family) {
    const std::int64_t n = data.n();
    const int k = data.k();
    switch (fit.estimator) {
        case Estimator::ProbitReported:
        case Estimator::ProbitValidated:
        case Estimator::ProbitRestricted: {
            Eigen::VectorXd y;
            Eigen::MatrixXd xmat;
            if (fit.estimator == Estimator::ProbitRestricted) {
                std::vector<std::int64_t> keep;
                y = outcome_vector(data, NaiveOutcome::RestrictedSample,
                                   &keep);
                xmat.resize(keep.size(), k);
                for (std::size_t i = 0; i < keep.size(); ++i) {
                    xmat.row(i) = data.x.row(keep[i]);
                }
            } else {
                y = fit.estimator == Estimator::ProbitReported
                        ? data.y_reported.cast<double>()
                        : data.validated().cast<double>();
                xmat = data.x;
            }
            const Eigen::VectorXd idx = xmat * fit.params;
            Eigen::MatrixXd scores(xmat.rows(), k);
            for (std::int64_t i = 0; i < xmat.rows(); ++i) {
                const double F = marginal_cdf(family, idx[i]);
                const double f = marginal_pdf(family, idx[i]);
                const double u = y[i] * inv_or_zero(F) -
                                 (1.0 - y[i]) * inv_or_zero(1.0 - F);
                scores.row(i) = u * f * xmat.row(i);
            }
            return scores;
        }
        case Estimator::Has: {
            const double a0 = fit.params[0];
            const double a1 = fit.params[1];
            const Eigen::VectorXd beta = fit.params.segment(2, k);
            const Eigen::VectorXd idx = data.x * beta;
            Eigen::MatrixXd scores(n, k + 2);
            for (std::int64_t i = 0; i < n; ++i) {
                const double F = marginal_cdf(family, idx[i]);
                const double f = marginal_pdf(family, idx[i]);
                const double psi = a0 + (1.0 - a0 - a1) * F;
                const double y = data.y_reported[i];
                const double u = y * inv_or_zero(psi) -
                                 (1.0 - y) * inv_or_zero(1.0 - psi);
                scores(i, 0) = u * (1.0 - F);
                scores(i, 1) = u * (-F);
                scores.row(i).segment(2, k) =
                    u * (1.0 - a0 - a1) * f * data.x.row(i);
            }
            return scores;
        }
        case Estimator::PoMle:
        case Estimator::PpoMle:
            return po_family_scores(fit.estimator == Estimator::PoMle
                                        ? PoVariant::Po
                                        : PoVariant::Ppo,
                                    fit.theta(), data, family);
    }
    throw DataError("unknown estimator in score_matrix");
}

Eigen::MatrixXd cluster_robust_vcov(const FitResult& fit, const Dataset& data,
                                    LinkFamily family) {
    if (!data.cluster_ids) {
        throw DataError("cluster-robust covariance requires cluster ids");
    }
    if (fit.estimator == Estimator::ProbitRestricted) {
        throw DataError(
            "cluster-robust covariance on the restricted sample is not "
            "supported");
    }
    const Eigen::MatrixXd scores = score_matrix(fit, data, family);
    const int p = static_cast<int>(scores.cols());

    std::map<int, Eigen::VectorXd> sums;
    for (std::int64_t i = 0; i < scores.rows(); ++i) {
        auto [it, inserted] = sums.try_emplace((*data.cluster_ids)[i],
                                               Eigen::VectorXd::Zero(p));
        it->second += scores.row(i).transpose();
    }
    if (sums.size() < 2) {
        throw DataError("cluster-robust covariance needs at least 2 clusters");
    }

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    for (const auto& [id, sg] : sums) {
        meat += sg * sg.transpose();
    }
    const Eigen::MatrixXd bread = scores.transpose() * scores;
    bool flat = false;
    const auto inv = robust_inverse(bread, &flat);
    if (!inv) {
        throw ConvergenceError(
            "information matrix is singular; cluster covariance undefined");
    }
    return (*inv) * meat * (*inv);
}

}  // namespace pvmle
