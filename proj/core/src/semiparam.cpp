#include "pvmle/semiparam.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "pvmle/dgp.hpp"
#include "pvmle/errors.hpp"
#include "pvmle/optim.hpp"

namespace pvmle {

namespace {

constexpr double kCutoffBandwidths = 9.5;  // kernel support cutoff, in h

double KernelConfigBandwidth(const KernelConfig& cfg, std::int64_t n) {
    return cfg.bandwidth_c *
           std::pow(static_cast<double>(n), -1.0 / cfg.bandwidth_p);
}

// Spatial binning of the 2-d index points at the cutoff radius, so kernel
// sums only visit the 3x3 cell neighborhood. Iteration order is fixed by
// (cell, insertion) order, keeping accumulation deterministic.
struct IndexBins {
    double cell;  // cell width = cutoff radius
    double u0, v0;
    std::int64_t ncx;
    std::unordered_map<std::int64_t, std::vector<std::int32_t>> cells;

    void build(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
               double cutoff) {
        cell = cutoff;
        u0 = u.minCoeff();
        v0 = v.minCoeff();
        ncx = static_cast<std::int64_t>((u.maxCoeff() - u0) / cell) + 3;
        cells.clear();
        cells.reserve(static_cast<std::size_t>(u.size()) / 4 + 16);
        for (std::int32_t i = 0; i < u.size(); ++i) {
            cells[key_of(u[i], v[i])].push_back(i);
        }
    }

    std::int64_t key_of(double u, double v) const {
        const auto cx = static_cast<std::int64_t>((u - u0) / cell);
        const auto cy = static_cast<std::int64_t>((v - v0) / cell);
        return cy * ncx + cx;
    }

    template <typename Visitor>
    void for_neighbors(double ui, double vi, Visitor&& visit) const {
        const auto cx = static_cast<std::int64_t>((ui - u0) / cell);
        const auto cy = static_cast<std::int64_t>((vi - v0) / cell);
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const auto it = cells.find((cy + dy) * ncx + (cx + dx));
                if (it == cells.end()) continue;
                for (const std::int32_t j : it->second) visit(j);
            }
        }
    }
};

void parallel_rows(std::int64_t n, const std::function<void(std::int64_t,
                                                            std::int64_t)>& f) {
    const unsigned hw = std::thread::hardware_concurrency();
    const int workers =
        n >= 2000 ? static_cast<int>(std::max(1u, std::min(hw, 8u))) : 1;
    if (workers == 1) {
        f(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] { f(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

struct SmlWorkspace {
    Eigen::VectorXd y, yr;
    std::vector<std::uint8_t> trim;
    std::int64_t n = 0;
    double h = 0.0;

    void init(const Dataset& data, const KernelConfig& cfg,
              SmlVariant variant) {
        n = data.n();
        h = KernelConfigBandwidth(cfg, n);
        trim = trimming_indicator(data, cfg);
        if (variant == SmlVariant::PPO) {
            y = data.validated().cast<double>();
            yr = data.y_reported.cast<double>();
        } else {
            y = (data.y_validated ? *data.y_validated : data.y_reported)
                    .cast<double>();
            yr = y;
        }
    }
};

// Leave-one-out kernel sums at the evaluation points selected by mask
// (nullptr = all). The squared distances of each point's in-radius
// neighbors are buffered so the exponentials vectorize.
KernelProbs kernel_probs_indices(const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& v,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& yr, double h,
                                 const std::vector<std::uint8_t>* mask =
                                     nullptr) {
    const std::int64_t n = u.size();
    const double cutoff = kCutoffBandwidths * h;
    const double cutoff2 = cutoff * cutoff;
    const double inv2h2 = 1.0 / (2.0 * h * h);

    IndexBins bins;
    bins.build(u, v, cutoff);

    KernelProbs out;
    out.pbar.resize(n);
    out.qbar.resize(n);
    out.rbar.resize(n);
    out.valid.assign(n, 1);

    std::atomic<std::int64_t> trimmed{0};
    parallel_rows(n, [&](std::int64_t lo, std::int64_t hi) {
        Eigen::ArrayXd d2buf(n), ybuf(n), yrbuf(n);
        for (std::int64_t i = lo; i < hi; ++i) {
            if (mask && !(*mask)[i]) {
                out.valid[i] = 0;
                out.pbar[i] = out.qbar[i] = out.rbar[i] = 0.0;
                continue;
            }
            std::int64_t m = 0;
            bins.for_neighbors(u[i], v[i], [&](std::int32_t j) {
                if (j == i) return;
                const double du = u[j] - u[i];
                const double dv = v[j] - v[i];
                const double d2 = du * du + dv * dv;
                if (d2 > cutoff2) return;
                d2buf[m] = d2;
                ybuf[m] = y[j];
                yrbuf[m] = yr[j];
                ++m;
            });
            if (m == 0) {
                out.valid[i] = 0;
                out.pbar[i] = out.qbar[i] = out.rbar[i] =
                    std::numeric_limits<double>::quiet_NaN();
                ++trimmed;
                continue;
            }
            d2buf.head(m) = (d2buf.head(m) * (-inv2h2)).exp();
            const double s = d2buf.head(m).sum();
            if (s <= 0.0) {
                out.valid[i] = 0;
                out.pbar[i] = out.qbar[i] = out.rbar[i] =
                    std::numeric_limits<double>::quiet_NaN();
                ++trimmed;
                continue;
            }
            const double sy = (d2buf.head(m) * ybuf.head(m)).sum();
            const double syr = (d2buf.head(m) * yrbuf.head(m)).sum();
            out.pbar[i] = sy / s;
            out.qbar[i] = (syr - sy) / s;
            out.rbar[i] = 1.0 - out.pbar[i] - out.qbar[i];
        }
    });
    out.auto_trimmed = trimmed.load();
    return out;
}

double guarded_loglik(const KernelProbs& kp, const SmlWorkspace& ws,
                      double delta, SmlVariant variant) {
    double ll = 0.0;
    for (std::int64_t i = 0; i < ws.n; ++i) {
        if (!ws.trim[i] || !kp.valid[i]) continue;
        const double p = kp.pbar[i];
        if (variant == SmlVariant::PO) {
            if (p > delta && p < 1.0 - delta) {
                if (ws.y[i] > 0.0) ll += ws.y[i] * std::log(p);
                if (ws.y[i] < 1.0) {
                    ll += (1.0 - ws.y[i]) * std::log(1.0 - p);
                }
            }
            continue;
        }
        const double q = kp.qbar[i];
        const double r = kp.rbar[i];
        if (ws.y[i] > 0.0 && p > delta && p < 1.0 - delta) {
            ll += ws.y[i] * std::log(p);
        }
        const double wq = ws.yr[i] - ws.y[i];
        if (wq > 0.0 && q > delta && q < 1.0 - delta) {
            ll += wq * std::log(q);
        }
        const double wr = 1.0 - ws.yr[i];
        if (wr > 0.0 && r > 0.0 && r < 1.0 - delta) {
            ll += wr * std::log(r);
        }
    }
    return ll / static_cast<double>(ws.n);
}

// Free-parameter embedding: beta's last element pinned at 1, coefficients of
// constant z columns pinned at 0.
struct FreeMap {
    std::vector<int> z_free;
    int l = 0, k = 0;

    void build(const Dataset& data) {
        l = data.l();
        k = data.k();
        for (int j = 0; j < l; ++j) {
            const double lo = data.z.col(j).minCoeff();
            const double hi = data.z.col(j).maxCoeff();
            if (hi - lo > 1e-12) z_free.push_back(j);
        }
    }

    int size() const { return static_cast<int>(z_free.size()) + k - 1; }

    SmlTheta to_theta(const Eigen::VectorXd& free) const {
        SmlTheta t;
        t.beta_r = Eigen::VectorXd::Zero(l);
        for (std::size_t m = 0; m < z_free.size(); ++m) {
            t.beta_r[z_free[m]] = free[m];
        }
        t.beta.resize(k);
        for (int j = 0; j + 1 < k; ++j) {
            t.beta[j] = free[z_free.size() + j];
        }
        t.beta[k - 1] = 1.0;
        return t;
    }

    Eigen::VectorXd from_theta(const SmlTheta& t) const {
        Eigen::VectorXd free(size());
        for (std::size_t m = 0; m < z_free.size(); ++m) {
            free[m] = t.beta_r[z_free[m]];
        }
        for (int j = 0; j + 1 < k; ++j) {
            free[z_free.size() + j] = t.beta[j];
        }
        return free;
    }
};

}  // namespace

double KernelConfig::bandwidth(std::int64_t n) const {
    return KernelConfigBandwidth(*this, n);
}

void KernelConfig::validate() const {
    if (!(trim_quantile >= 0.0 && trim_quantile < 0.5)) {
        throw DataError("trim_quantile must lie in [0, 0.5)");
    }
    if (!(delta_n > 0.0 && delta_n < 0.25)) {
        throw DataError("delta_n must lie in (0, 0.25)");
    }
    if (!(bandwidth_c > 0.0) || !(bandwidth_p > 0.0)) {
        throw DataError("bandwidth parameters must be positive");
    }
}

KernelProbs kernel_probs(const SmlTheta& theta, const Dataset& data,
                         const KernelConfig& cfg) {
    cfg.validate();
    const Eigen::VectorXd u = data.z * theta.beta_r;
    const Eigen::VectorXd v = data.x * theta.beta;
    const Eigen::VectorXd y = data.validated().cast<double>();
    const Eigen::VectorXd yr = data.y_reported.cast<double>();
    return kernel_probs_indices(u, v, y, yr, cfg.bandwidth(data.n()));
}

std::vector<std::uint8_t> trimming_indicator(const Dataset& data,
                                             const KernelConfig& cfg) {
    cfg.validate();
    const std::int64_t n = data.n();
    std::vector<std::uint8_t> keep(n, 1);
    if (cfg.trim_quantile <= 0.0) return keep;

    auto apply_box = [&](const Eigen::MatrixXd& m, const std::vector<int>& cols) {
        std::vector<double> s(n);
        for (const int c : cols) {
            for (std::int64_t i = 0; i < n; ++i) s[i] = m(i, c);
            std::sort(s.begin(), s.end());
            const double p = cfg.trim_quantile;
            const auto lo_idx = static_cast<std::int64_t>(
                std::floor(p * static_cast<double>(n - 1)));
            const auto hi_idx = static_cast<std::int64_t>(
                std::ceil((1.0 - p) * static_cast<double>(n - 1)));
            const double lo = s[lo_idx];
            const double hi = s[hi_idx];
            for (std::int64_t i = 0; i < n; ++i) {
                if (m(i, c) < lo || m(i, c) > hi) keep[i] = 0;
            }
        }
    };
    apply_box(data.z, data.z_continuous);
    apply_box(data.x, data.x_continuous);
    return keep;
}

double sml_loglik(const SmlTheta& theta, const Dataset& data,
                  const KernelConfig& cfg, SmlVariant variant) {
    cfg.validate();
    SmlWorkspace ws;
    ws.init(data, cfg, variant);
    const Eigen::VectorXd u = data.z * theta.beta_r;
    const Eigen::VectorXd v = data.x * theta.beta;
    const KernelProbs kp = kernel_probs_indices(u, v, ws.y, ws.yr, ws.h);
    return guarded_loglik(kp, ws, cfg.delta_n, variant);
}

SmlFit fit_sml(const Dataset& data, const KernelConfig& cfg,
               SmlVariant variant, std::optional<SmlTheta> start) {
    cfg.validate();
    SmlWorkspace ws;
    ws.init(data, cfg, variant);
    FreeMap fm;
    fm.build(data);

    // Default start: the parametric fit of the same observability scheme,
    // rescaled so the last beta component is 1.
    SmlTheta start_theta;
    if (start) {
        start_theta = *start;
    } else {
        const FitResult par = variant == SmlVariant::PPO
                                  ? fit_ppo_mle(data, LinkFamily::Normal)
                                  : fit_po_mle(data, LinkFamily::Normal);
        const ThetaFull th = par.theta();
        start_theta.beta_r = th.beta_r;
        start_theta.beta = th.beta;
    }
    {
        double scale = start_theta.beta[fm.k - 1];
        if (std::fabs(scale) < 0.05) {
            scale = scale < 0.0 ? -0.05 : 0.05;
        }
        start_theta.beta /= scale;
    }
    const Eigen::VectorXd free0 = fm.from_theta(start_theta);

    // Compact search box around the start. The guard indicators make the
    // objective degenerate at extreme index scales (terms drop out and the
    // trimmed mean drifts to zero), so maximization is restricted to the
    // compact parameter set the asymptotics assume anyway.
    Eigen::VectorXd lo(free0.size()), hi(free0.size());
    for (int j = 0; j < free0.size(); ++j) {
        const double half = 2.5 * (1.0 + std::fabs(free0[j]));
        lo[j] = free0[j] - half;
        hi[j] = free0[j] + half;
    }
    PlainObjective obj = [&](const Eigen::VectorXd& free) {
        const Eigen::VectorXd clamped = free.cwiseMax(lo).cwiseMin(hi);
        const SmlTheta t = fm.to_theta(clamped);
        const Eigen::VectorXd u = data.z * t.beta_r;
        const Eigen::VectorXd v = data.x * t.beta;
        const KernelProbs kp =
            kernel_probs_indices(u, v, ws.y, ws.yr, ws.h, &ws.trim);
        double penalty = 0.0;
        for (int j = 0; j < free.size(); ++j) {
            const double out = std::fabs(free[j] - clamped[j]);
            penalty += out * out;
        }
        return guarded_loglik(kp, ws, cfg.delta_n, variant) - penalty;
    };

    // Objective evaluations cost O(n * neighborhood); small samples can
    // afford generous optimizer budgets, large ones rely on the quality of
    // the root-n-consistent parametric start.
    const bool small_sample = ws.n <= 1500;
    SimplexOptions so;
    so.max_evaluations = (small_sample ? 80 : 22) * fm.size();
    so.initial_step = 0.12;
    so.f_tol = 1e-7;

    OptimResult best;
    best.f = -std::numeric_limits<double>::infinity();
    Rng rng(0x5EED0005ULL + (variant == SmlVariant::PPO ? 0 : 1));
    for (int attempt = 0; attempt < 3; ++attempt) {
        Eigen::VectorXd s0 = free0;
        if (attempt > 0) {
            for (int j = 0; j < s0.size(); ++j) s0[j] += 0.25 * rng.normal();
        }
        OptimResult stage1 = maximize_simplex(obj, s0, so);
        OptimOptions po;
        po.grad_tol = 1e-5;
        po.f_reltol = 1e-9;
        po.max_iterations = small_sample ? 60 : 20;
        OptimResult stage2 = maximize_bfgs_fd(obj, stage1.x, po, 1e-4);
        const int total_iters = stage1.iterations + stage2.iterations;
        // The guard indicators kink the surface, so exhausted objective
        // progress counts as convergence alongside the smooth criteria.
        const bool met = (stage1.converged || stage2.converged ||
                          stage2.stalled) &&
                         std::isfinite(std::max(stage1.f, stage2.f));
        OptimResult better =
            stage2.f >= stage1.f ? std::move(stage2) : std::move(stage1);
        better.converged = met;
        better.iterations = total_iters;
        better.x = better.x.cwiseMax(lo).cwiseMin(hi);
        if (better.f > best.f) best = std::move(better);
        if (attempt == 0 && best.converged) break;
    }

    SmlFit fit;
    fit.variant = variant;
    const SmlTheta opt = fm.to_theta(best.x);
    fit.beta_scale = opt.beta;
    fit.theta_unit = opt.beta / opt.beta.norm();
    fit.beta_r = opt.beta_r;
    fit.loglik = best.f;
    fit.converged = best.converged;
    fit.iterations = best.iterations;
    fit.free_z_columns = fm.z_free;

    const Eigen::VectorXd u = data.z * opt.beta_r;
    const Eigen::VectorXd v = data.x * opt.beta;
    const KernelProbs kp = kernel_probs_indices(u, v, ws.y, ws.yr, ws.h);
    std::int64_t eff = 0;
    for (std::int64_t i = 0; i < ws.n; ++i) {
        if (ws.trim[i] && kp.valid[i]) ++eff;
    }
    fit.effective_n = eff;
    return fit;
}

SmlVariance sml_variance(const SmlFit& fit, const Dataset& data,
                         const KernelConfig& cfg, SmlVariant variant) {
    cfg.validate();
    SmlWorkspace ws;
    ws.init(data, cfg, variant);
    FreeMap fm;
    fm.build(data);
    const int p = fm.size();
    const std::int64_t n = ws.n;

    SmlTheta theta;
    theta.beta_r = fit.beta_r;
    theta.beta = fit.beta_scale;
    const Eigen::VectorXd u = data.z * theta.beta_r;
    const Eigen::VectorXd v = data.x * theta.beta;
    const double h = ws.h;
    const double cutoff = kCutoffBandwidths * h;
    const double cutoff2 = cutoff * cutoff;
    const double inv2h2 = 1.0 / (2.0 * h * h);
    const double invh2 = 1.0 / (h * h);

    IndexBins bins;
    bins.build(u, v, cutoff);

    // Free-parameter difference vector for the pair (i, j).
    const int nzf = static_cast<int>(fm.z_free.size());
    auto pair_dw = [&](std::int64_t i, std::int64_t j, double du, double dv,
                       Eigen::VectorXd& dw) {
        for (int m = 0; m < nzf; ++m) {
            dw[m] = -du * invh2 *
                    (data.z(j, fm.z_free[m]) - data.z(i, fm.z_free[m]));
        }
        for (int m = 0; m + 1 < fm.k; ++m) {
            dw[nzf + m] = -dv * invh2 * (data.x(j, m) - data.x(i, m));
        }
    };

    // Pass 1: probabilities and their derivatives at every point.
    Eigen::MatrixXd dp(n, p), dq(n, p);
    Eigen::VectorXd pbar(n), qbar(n), rbar(n);
    std::vector<std::uint8_t> valid(n, 1);
    parallel_rows(n, [&](std::int64_t lo, std::int64_t hi) {
        Eigen::VectorXd dw(p), sum_dk(p), sum_y_dk(p), sum_yr_dk(p);
        for (std::int64_t i = lo; i < hi; ++i) {
            double s = 0.0, sy = 0.0, syr = 0.0;
            sum_dk.setZero();
            sum_y_dk.setZero();
            sum_yr_dk.setZero();
            bins.for_neighbors(u[i], v[i], [&](std::int32_t j) {
                if (j == i) return;
                const double du = u[j] - u[i];
                const double dv = v[j] - v[i];
                const double d2 = du * du + dv * dv;
                if (d2 > cutoff2) return;
                const double kij = std::exp(-d2 * inv2h2);
                s += kij;
                sy += ws.y[j] * kij;
                syr += ws.yr[j] * kij;
                pair_dw(i, j, du, dv, dw);
                sum_dk += kij * dw;
                sum_y_dk += (ws.y[j] * kij) * dw;
                sum_yr_dk += (ws.yr[j] * kij) * dw;
            });
            if (s <= 0.0) {
                valid[i] = 0;
                pbar[i] = qbar[i] = rbar[i] = 0.0;
                dp.row(i).setZero();
                dq.row(i).setZero();
                continue;
            }
            pbar[i] = sy / s;
            qbar[i] = (syr - sy) / s;
            rbar[i] = 1.0 - pbar[i] - qbar[i];
            dp.row(i) = ((sum_y_dk - pbar[i] * sum_dk) / s).transpose();
            dq.row(i) =
                ((sum_yr_dk - sum_y_dk - qbar[i] * sum_dk) / s).transpose();
        }
    });

    // Trimmed derivative fields whose index-conditional means appear in
    // Omega.
    Eigen::MatrixXd qp = Eigen::MatrixXd::Zero(n, p);
    Eigen::MatrixXd qq = Eigen::MatrixXd::Zero(n, p);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!ws.trim[i] || !valid[i]) continue;
        qp.row(i) = dp.row(i);
        qq.row(i) = dq.row(i);
    }

    // Pass 2: kernel regressions of the trimmed derivative fields on the
    // index, with the same bandwidth.
    Eigen::MatrixXd mp = Eigen::MatrixXd::Zero(n, p);
    Eigen::MatrixXd mq = Eigen::MatrixXd::Zero(n, p);
    parallel_rows(n, [&](std::int64_t lo, std::int64_t hi) {
        Eigen::VectorXd accp(p), accq(p);
        for (std::int64_t i = lo; i < hi; ++i) {
            double s = 0.0;
            accp.setZero();
            accq.setZero();
            bins.for_neighbors(u[i], v[i], [&](std::int32_t j) {
                if (j == i) return;
                const double du = u[j] - u[i];
                const double dv = v[j] - v[i];
                const double d2 = du * du + dv * dv;
                if (d2 > cutoff2) return;
                const double kij = std::exp(-d2 * inv2h2);
                s += kij;
                accp += kij * qp.row(j).transpose();
                accq += kij * qq.row(j).transpose();
            });
            if (s > 0.0) {
                mp.row(i) = (accp / s).transpose();
                mq.row(i) = (accq / s).transpose();
            }
        }
    });

    const double delta = cfg.delta_n;
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        const bool in = ws.trim[i] != 0;
        const double pi = pbar[i];
        const double qi = qbar[i];
        const double ri = rbar[i];
        const Eigen::VectorXd dpi = dp.row(i).transpose();
        const Eigen::VectorXd dqi = dq.row(i).transpose();
        const Eigen::VectorXd dri = -(dpi + dqi);
        const Eigen::VectorXd mpi = mp.row(i).transpose();
        const Eigen::VectorXd mqi = mq.row(i).transpose();
        const Eigen::VectorXd mri = -(mpi + mqi);

        if (variant == SmlVariant::PO) {
            if (pi > delta && pi < 1.0 - delta) {
                const double wgt = 1.0 / (pi * (1.0 - pi));
                if (in) {
                    sigma += wgt * dpi * dpi.transpose();
                    omega += wgt * dpi * dpi.transpose();
                }
                omega -= wgt * mpi * mpi.transpose();
            }
            continue;
        }
        if (pi > delta) {
            if (in) {
                sigma += dpi * dpi.transpose() / pi;
                omega += dpi * dpi.transpose() / pi;
            }
            omega -= mpi * mpi.transpose() / pi;
        }
        if (qi > delta) {
            if (in) {
                sigma += dqi * dqi.transpose() / qi;
                omega += dqi * dqi.transpose() / qi;
            }
            omega -= mqi * mqi.transpose() / qi;
        }
        if (ri > delta) {
            if (in) {
                sigma += dri * dri.transpose() / ri;
                omega += dri * dri.transpose() / ri;
            }
            omega -= mri * mri.transpose() / ri;
        }
    }
    sigma /= static_cast<double>(n);
    omega /= static_cast<double>(n);
    sigma = 0.5 * (sigma + sigma.transpose());
    omega = 0.5 * (omega + omega.transpose());

    SmlVariance out;
    out.sigma = sigma;
    out.omega = omega;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() <= 1e-12 * es.eigenvalues().maxCoeff()) {
        throw ConvergenceError("semiparametric Sigma matrix is singular");
    }
    const Eigen::MatrixXd sinv = es.eigenvectors() *
                                 es.eigenvalues().cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose();
    out.vcov = sinv * omega * sinv / static_cast<double>(n);
    return out;
}

}  // namespace pvmle
