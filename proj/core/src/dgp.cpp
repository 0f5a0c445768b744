#include "pvmle/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pvmle/errors.hpp"

namespace pvmle {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int s) {
    return (x << s) | (x >> (64 - s));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53-bit mantissa, shifted into the open interval (0, 1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return norm_quantile(uniform()); }

double amh_conditional_inverse(double u, double t, double rho) {
    // Solve t = v(1 - rho(1-v)) / (1 - rho(1-u)(1-v))^2 for v via the
    // quadratic in s = 1 - v.
    const double q = 1.0 - u;
    const double a = rho * (1.0 - t * rho * q * q);
    const double b = 2.0 * t * rho * q - (1.0 + rho);
    const double c = 1.0 - t;
    double s;
    if (std::fabs(a) < 1e-12) {
        s = -c / b;
    } else {
        const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * c));
        // Stable root in [0, 1]: c >= 0 and b <= 0 for admissible inputs.
        s = 2.0 * c / (-b + disc);
    }
    return std::clamp(1.0 - s, 0.0, 1.0);
}

std::pair<double, double> draw_error_pair(LinkFamily family, double rho,
                                          Rng& rng) {
    if (family == LinkFamily::Normal) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double eps_star = z1;
        const double eps = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
        return {eps, eps_star};
    }
    // AMH copula with logistic marginals, conditional-inverse sampling.
    const double u = rng.uniform();
    const double t = rng.uniform();
    const double v = amh_conditional_inverse(u, t, rho);
    return {marginal_quantile(family, u), marginal_quantile(family, v)};
}

void DesignConfig::validate() const {
    if (beta0.size() < 3) {
        throw DataError("beta0 must have at least 3 components");
    }
    if (betaR.size() < 4) {
        throw DataError(
            "betaR must have at least 4 components (intercept + x1..x3)");
    }
    if (std::isnan(rho) || std::fabs(rho) >= 1.0) {
        throw DataError("design rho must lie in (-1, 1)");
    }
    if (n <= 0) throw DataError("design n must be positive");
    const int num_normals =
        covariate_law == CovariateLaw::StdNormalIIDDummy ? k() - 1 : k();
    if (num_normals < 3) {
        throw DataError("design needs at least 3 continuous x covariates");
    }
}

SimulatedDataset simulate(const DesignConfig& config) {
    config.validate();
    if (std::isnan(config.tau_fn) || std::isnan(config.tau_fp)) {
        throw DataError("simulate requires calibrated thresholds");
    }
    const int k = config.k();
    const int l = config.l();
    const std::int64_t n = config.n;
    const int extras = l - 4;  // z columns beyond (intercept, x1..x3)
    const bool dummy_law =
        config.covariate_law == CovariateLaw::StdNormalIIDDummy;

    SimulatedDataset out;
    out.x.resize(n, k);
    out.z.resize(n, l);
    out.y_star.resize(n);
    out.d.resize(n);
    out.y_reported.resize(n);
    out.y_validated.resize(n);

    Rng rng(config.seed);
    for (std::int64_t i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            if (dummy_law && j == k - 1) {
                out.x(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
            } else {
                out.x(i, j) = rng.normal();
            }
        }
        out.z(i, 0) = 1.0;
        out.z(i, 1) = out.x(i, 0);
        out.z(i, 2) = out.x(i, 1);
        out.z(i, 3) = out.x(i, 2);
        for (int j = 0; j < extras; ++j) {
            out.z(i, 4 + j) = rng.normal();
        }

        const auto [eps, eps_star] =
            draw_error_pair(config.family, config.rho, rng);

        const double xb = out.x.row(i).dot(config.beta0);
        const double zb = out.z.row(i).dot(config.betaR);
        const int ys = xb - eps_star > 0.0 ? 1 : 0;
        const double tau = ys == 1 ? config.tau_fn : config.tau_fp;
        const int di = zb - eps < tau ? 1 : 0;
        const int yr = ys * (1 - di) + (1 - ys) * di;

        out.y_star[i] = ys;
        out.d[i] = di;
        out.y_reported[i] = yr;
        out.y_validated[i] = ys * yr;
    }
    return out;
}

std::pair<double, double> calibrate_thresholds(const DesignConfig& config,
                                               std::int64_t calib_n) {
    config.validate();
    if (!(config.target_fn_rate > 0.0 && config.target_fn_rate < 0.5) ||
        !(config.target_fp_rate > 0.0 && config.target_fp_rate < 0.5)) {
        throw CalibrationError("target rates must lie in (0, 0.5)");
    }
    if (calib_n < 1000) {
        throw CalibrationError("calibration sample too small");
    }

    // Misreporting occurs iff tau > z'betaR - eps, so the class-conditional
    // rate is the empirical CDF of c = z'betaR - eps at tau. The exact root
    // is the target-level order statistic of c within each class.
    const int k = config.k();
    const int l = config.l();
    const int extras = l - 4;
    const bool dummy_law =
        config.covariate_law == CovariateLaw::StdNormalIIDDummy;

    std::vector<double> c_pos, c_neg;
    c_pos.reserve(calib_n / 2 + 1);
    c_neg.reserve(calib_n / 2 + 1);

    Rng rng(config.seed ^ 0xC001CAFEULL);
    Eigen::VectorXd xi(k), zi(l);
    for (std::int64_t i = 0; i < calib_n; ++i) {
        for (int j = 0; j < k; ++j) {
            if (dummy_law && j == k - 1) {
                xi[j] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            } else {
                xi[j] = rng.normal();
            }
        }
        zi[0] = 1.0;
        zi[1] = xi[0];
        zi[2] = xi[1];
        zi[3] = xi[2];
        for (int j = 0; j < extras; ++j) zi[4 + j] = rng.normal();

        const auto [eps, eps_star] =
            draw_error_pair(config.family, config.rho, rng);
        const double xb = xi.dot(config.beta0);
        const double zb = zi.dot(config.betaR);
        const double c = zb - eps;
        if (xb - eps_star > 0.0) {
            c_pos.push_back(c);
        } else {
            c_neg.push_back(c);
        }
    }

    auto class_threshold = [](std::vector<double>& c, double target,
                              const char* label) {
        const std::int64_t m = static_cast<std::int64_t>(c.size());
        if (m < 100) {
            throw CalibrationError(std::string("class '") + label +
                                   "' nearly empty in calibration sample");
        }
        std::int64_t kth = std::llround(target * static_cast<double>(m));
        if (kth < 1 || kth >= m) {
            throw CalibrationError(
                std::string("target rate unreachable for class '") + label +
                "' at this calibration size");
        }
        std::nth_element(c.begin(), c.begin() + (kth - 1), c.end());
        const double lo = c[kth - 1];
        const double hi = *std::min_element(c.begin() + kth, c.end());
        return 0.5 * (lo + hi);
    };

    const double tau_fn =
        class_threshold(c_pos, config.target_fn_rate, "y*=1");
    const double tau_fp =
        class_threshold(c_neg, config.target_fp_rate, "y*=0");
    return {tau_fn, tau_fp};
}

}  // namespace pvmle
