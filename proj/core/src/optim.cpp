#include "pvmle/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pvmle {

namespace {

bool finite_all(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

OptimResult maximize_bfgs(const GradObjective& fg, Eigen::VectorXd x0,
                          const OptimOptions& opts,
                          const PlainObjective& f_only) {
    const int p = static_cast<int>(x0.size());
    OptimResult res;
    res.x = std::move(x0);

    Eigen::VectorXd g(p);
    double f = fg(res.x, g);
    res.evaluations = 1;
    res.f_history.push_back(f);

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(p, p);
    bool reset_done = false;
    int small_df_streak = 0;

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (!std::isfinite(f) || !finite_all(g)) break;
        if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd dir = hinv * g;  // ascent direction
        double slope = g.dot(dir);
        if (slope <= 0.0) {
            hinv.setIdentity();
            dir = g;
            slope = g.dot(dir);
        }

        // Backtracking Armijo line search; accepted steps are monotone.
        const double c1 = 1e-4;
        double alpha = 1.0;
        double f_new = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new(p), g_new(p);
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + alpha * dir;
            if (f_only) {
                f_new = f_only(x_new);
            } else {
                f_new = fg(x_new, g_new);
            }
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new >= f + c1 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (!reset_done) {
                hinv.setIdentity();
                reset_done = true;
                continue;
            }
            break;
        }
        if (f_only) {
            fg(x_new, g_new);
            ++res.evaluations;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);

        const double df = f_new - f;
        res.x = x_new;
        f = f_new;
        g = g_new;
        res.f_history.push_back(f);

        // BFGS inverse update on the minimization pair (s, -y): with
        // maximization the curvature condition is s'y < 0.
        if (sy < -1e-12 * s.norm() * y.norm()) {
            const double rho_bfgs = 1.0 / sy;
            const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(p, p);
            hinv = (ident - rho_bfgs * s * y.transpose()) * hinv *
                       (ident - rho_bfgs * y * s.transpose()) -
                   rho_bfgs * s * s.transpose();
            hinv = 0.5 * (hinv + hinv.transpose());
        }

        // The objective-change stop only fires once the improvement has
        // stayed negligible for a few iterations; near the optimum the
        // quasi-Newton steps still shrink the gradient quickly.
        if (std::fabs(df) <= opts.f_reltol * (std::fabs(f) + 1e-12)) {
            ++small_df_streak;
        } else {
            small_df_streak = 0;
        }
        if (small_df_streak >= 3) {
            if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
                res.converged = true;
            } else {
                res.stalled = true;
            }
            ++it;
            break;
        }
    }

    if (!res.converged && finite_all(g) &&
        g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
        res.converged = true;
    }
    res.f = f;
    res.gradient = g;
    res.iterations = it;
    return res;
}

OptimResult maximize_bfgs_fd(const PlainObjective& f, Eigen::VectorXd x0,
                             const OptimOptions& opts, double fd_step) {
    GradObjective fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const int p = static_cast<int>(x.size());
        g.resize(p);
        Eigen::VectorXd xp = x;
        for (int j = 0; j < p; ++j) {
            const double h = fd_step * std::max(1.0, std::fabs(x[j]));
            xp[j] = x[j] + h;
            const double fp = f(xp);
            xp[j] = x[j] - h;
            const double fm = f(xp);
            xp[j] = x[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        return f(x);
    };
    return maximize_bfgs(fg, std::move(x0), opts, f);
}

OptimResult maximize_simplex(const PlainObjective& f, Eigen::VectorXd x0,
                             const SimplexOptions& opts) {
    const int p = static_cast<int>(x0.size());
    OptimResult res;

    std::vector<Eigen::VectorXd> verts;
    std::vector<double> fv;
    verts.reserve(p + 1);
    verts.push_back(x0);
    fv.push_back(f(x0));
    res.evaluations = 1;
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd v = x0;
        v[j] += opts.initial_step * std::max(1.0, std::fabs(x0[j]));
        verts.push_back(v);
        fv.push_back(f(v));
        ++res.evaluations;
    }

    auto order = [&]() {
        // Descending objective values (best first).
        for (int i = 1; i <= p; ++i) {
            Eigen::VectorXd v = verts[i];
            double fvi = fv[i];
            int j = i - 1;
            while (j >= 0 && fv[j] < fvi) {
                verts[j + 1] = verts[j];
                fv[j + 1] = fv[j];
                --j;
            }
            verts[j + 1] = std::move(v);
            fv[j + 1] = fvi;
        }
    };
    order();
    res.f_history.push_back(fv[0]);

    while (res.evaluations < opts.max_evaluations) {
        if (std::fabs(fv[0] - fv[p]) <=
            opts.f_tol * (std::fabs(fv[0]) + 1.0)) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
        for (int i = 0; i < p; ++i) centroid += verts[i];
        centroid /= static_cast<double>(p);

        const Eigen::VectorXd xr = centroid + (centroid - verts[p]);
        const double fr = f(xr);
        ++res.evaluations;

        if (fr > fv[0]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - verts[p]);
            const double fe = f(xe);
            ++res.evaluations;
            if (fe > fr) {
                verts[p] = xe;
                fv[p] = fe;
            } else {
                verts[p] = xr;
                fv[p] = fr;
            }
        } else if (fr > fv[p - 1]) {
            verts[p] = xr;
            fv[p] = fr;
        } else {
            const Eigen::VectorXd xc =
                centroid + 0.5 * (verts[p] - centroid);
            const double fc = f(xc);
            ++res.evaluations;
            if (fc > fv[p]) {
                verts[p] = xc;
                fv[p] = fc;
            } else {
                for (int i = 1; i <= p; ++i) {
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0]);
                    fv[i] = f(verts[i]);
                    ++res.evaluations;
                }
            }
        }
        order();
        if (res.f_history.empty() || fv[0] > res.f_history.back()) {
            res.f_history.push_back(fv[0]);
        }
        ++res.iterations;
    }

    res.x = verts[0];
    res.f = fv[0];
    return res;
}

}  // namespace pvmle
