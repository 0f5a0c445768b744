#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace pvmle {

struct OptimOptions {
    double grad_tol = 1e-6;    // max-norm of the gradient at the optimum
    double f_reltol = 1e-10;   // relative objective change between iterates
    int max_iterations = 500;
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd gradient;
    bool converged = false;        // true only if the gradient criterion held
    bool stalled = false;          // stopped on f-change with large gradient
    int iterations = 0;
    int evaluations = 0;
    std::vector<double> f_history;  // accepted iterates, nondecreasing
};

// Objective evaluated with analytic gradient; returns f(x), fills grad.
using GradObjective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using PlainObjective = std::function<double(const Eigen::VectorXd&)>;

// BFGS maximization with backtracking Armijo line search. Accepted steps
// never decrease the objective. When f_only is supplied, line-search trials
// use it and the gradient is evaluated only at accepted iterates.
OptimResult maximize_bfgs(const GradObjective& fg, Eigen::VectorXd x0,
                          const OptimOptions& opts = {},
                          const PlainObjective& f_only = nullptr);

// BFGS on a plain objective using central finite-difference gradients.
OptimResult maximize_bfgs_fd(const PlainObjective& f, Eigen::VectorXd x0,
                             const OptimOptions& opts = {},
                             double fd_step = 1e-5);

struct SimplexOptions {
    int max_evaluations = 4000;
    double f_tol = 1e-9;       // absolute spread of simplex values
    double initial_step = 0.1;
};

// Nelder-Mead maximization, for objectives with indicator-induced kinks.
OptimResult maximize_simplex(const PlainObjective& f, Eigen::VectorXd x0,
                             const SimplexOptions& opts = {});

}  // namespace pvmle
