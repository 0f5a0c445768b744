#include "pvmle/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "pvmle/errors.hpp"
#include "pvmle/io.hpp"

namespace pvmle {

namespace {

ReplicationRecord run_one(const MCConfig& cfg, const DesignConfig& design,
                          int r) {
    ReplicationRecord rec;
    rec.replication = r;
    rec.seed = cfg.master_seed + static_cast<std::uint64_t>(r);

    DesignConfig d = design;
    d.seed = rec.seed;
    d.n = cfg.n;
    const SimulatedDataset sim = simulate(d);
    const Dataset data = to_dataset(sim);

    std::int64_t n_pos = 0, n_neg = 0, fn = 0, fp = 0;
    for (std::int64_t i = 0; i < sim.n(); ++i) {
        if (sim.y_star[i] == 1) {
            ++n_pos;
            fn += sim.d[i];
        } else {
            ++n_neg;
            fp += sim.d[i];
        }
    }
    rec.achieved_fn =
        n_pos > 0 ? static_cast<double>(fn) / static_cast<double>(n_pos) : 0.0;
    rec.achieved_fp =
        n_neg > 0 ? static_cast<double>(fp) / static_cast<double>(n_neg) : 0.0;

    for (const Estimator est : cfg.estimators) {
        try {
            FitResult fit;
            switch (est) {
                case Estimator::ProbitReported:
                    fit = fit_probit_naive(data, NaiveOutcome::Reported,
                                           d.family);
                    break;
                case Estimator::ProbitValidated:
                    fit = fit_probit_naive(data, NaiveOutcome::Validated,
                                           d.family);
                    break;
                case Estimator::ProbitRestricted:
                    fit = fit_probit_naive(data,
                                           NaiveOutcome::RestrictedSample,
                                           d.family);
                    break;
                case Estimator::Has:
                    fit = fit_has(data, d.family);
                    break;
                case Estimator::PoMle:
                    fit = fit_po_mle(data, d.family);
                    break;
                case Estimator::PpoMle:
                    fit = fit_ppo_mle(data, d.family);
                    break;
            }
            rec.beta[est] = fit.beta_block();
            rec.converged[est] = fit.converged;
            rec.loglik[est] = fit.loglik;
        } catch (const std::exception& e) {
            rec.error[est] = e.what();
            rec.converged[est] = false;
        }
    }
    return rec;
}

}  // namespace

MCSummary run_mc(const MCConfig& cfg) {
    DesignConfig design = cfg.design;
    design.validate();
    if (cfg.replications < 1) throw DataError("replications must be >= 1");
    if (std::isnan(design.tau_fn) || std::isnan(design.tau_fp)) {
        const auto [fn, fp] = calibrate_thresholds(design, cfg.calib_n);
        design.tau_fn = fn;
        design.tau_fp = fp;
    }

    const int reps = cfg.replications;
    std::vector<ReplicationRecord> records(reps);
    std::atomic<int> next{0};
    const unsigned hw = std::thread::hardware_concurrency();
    int workers = cfg.parallel_workers > 0
                      ? cfg.parallel_workers
                      : static_cast<int>(std::max(1u, hw));
    workers = std::min(workers, reps);

    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= reps) return;
            records[r] = run_one(cfg, design, r);
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MCSummary s;
    s.design = design;
    s.replications = reps;
    s.n = cfg.n;

    const int k = design.k();
    double fn_acc = 0.0, fp_acc = 0.0;
    for (const auto& rec : records) {
        fn_acc += rec.achieved_fn;
        fp_acc += rec.achieved_fp;
    }
    s.achieved_fn = fn_acc / reps;
    s.achieved_fp = fp_acc / reps;

    for (const Estimator est : cfg.estimators) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
        int used = 0;
        int failed = 0;
        for (const auto& rec : records) {
            const auto conv = rec.converged.find(est);
            if (conv == rec.converged.end() || !conv->second) {
                ++failed;
                continue;
            }
            mean += rec.beta.at(est);
            ++used;
        }
        s.failures[est] = failed;
        if (used > 0) {
            mean /= static_cast<double>(used);
            Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
            for (const auto& rec : records) {
                const auto conv = rec.converged.find(est);
                if (conv == rec.converged.end() || !conv->second) continue;
                const Eigen::VectorXd d = rec.beta.at(est) - mean;
                var += d.cwiseProduct(d);
            }
            if (used > 1) var /= static_cast<double>(used - 1);
            s.means[est] = mean;
            s.variances[est] = var;
        }
    }

    // Pairwise PO / PPO comparison: replications where both converged.
    const bool has_pair = s.means.count(Estimator::PoMle) &&
                          s.means.count(Estimator::PpoMle);
    if (has_pair) {
        std::vector<const ReplicationRecord*> pairs;
        for (const auto& rec : records) {
            const auto po = rec.converged.find(Estimator::PoMle);
            const auto ppo = rec.converged.find(Estimator::PpoMle);
            if (po != rec.converged.end() && po->second &&
                ppo != rec.converged.end() && ppo->second) {
                pairs.push_back(&rec);
            }
        }
        s.po_ppo_pairs = static_cast<int>(pairs.size());
        if (pairs.size() >= 2) {
            auto cov_of = [&](Estimator est) {
                Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
                for (const auto* rec : pairs) mean += rec->beta.at(est);
                mean /= static_cast<double>(pairs.size());
                Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
                for (const auto* rec : pairs) {
                    const Eigen::VectorXd d = rec->beta.at(est) - mean;
                    cov += d * d.transpose();
                }
                return Eigen::MatrixXd(
                    cov / static_cast<double>(pairs.size() - 1));
            };
            const Eigen::MatrixXd cov_po = cov_of(Estimator::PoMle);
            const Eigen::MatrixXd cov_ppo = cov_of(Estimator::PpoMle);
            s.po_ppo_variance_ratios =
                cov_po.diagonal().cwiseQuotient(cov_ppo.diagonal());
            s.po_ppo_det_ratio = cov_po.determinant() / cov_ppo.determinant();
        }
    }

    s.records = std::move(records);
    return s;
}

std::vector<std::pair<GridCell, MCSummary>> run_grid(
    const MCConfig& base, const std::vector<GridCell>& grid) {
    std::vector<std::pair<GridCell, MCSummary>> out;
    out.reserve(grid.size());
    for (const GridCell& cell : grid) {
        MCConfig cfg = base;
        cfg.design.target_fn_rate = cell.fn;
        cfg.design.target_fp_rate = cell.fp;
        cfg.design.tau_fn = std::numeric_limits<double>::quiet_NaN();
        cfg.design.tau_fp = std::numeric_limits<double>::quiet_NaN();
        out.emplace_back(cell, run_mc(cfg));
    }
    return out;
}

namespace {

std::string format_cell(double v) {
    if (std::isnan(v)) return std::string(8, ' ');
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8.3f", v);
    return buf;
}

}  // namespace

std::string table1_text(
    const std::vector<std::pair<GridCell, MCSummary>>& cells,
    const std::vector<Estimator>& estimators) {
    std::ostringstream os;
    os << "   fn    fp    true";
    for (const Estimator est : estimators) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %17s", estimator_name(est).c_str());
        os << buf;
    }
    os << "\n";
    for (const auto& [cell, summary] : cells) {
        const int k = summary.design.k();
        for (int j = 0; j < k; ++j) {
            char head[64];
            std::snprintf(head, sizeof(head), "%5.2f %5.2f %7.3f", cell.fn,
                          cell.fp, summary.design.beta0[j]);
            os << head;
            for (const Estimator est : estimators) {
                const auto it = summary.means.find(est);
                const double v = it != summary.means.end()
                                     ? it->second[j]
                                     : std::numeric_limits<double>::quiet_NaN();
                os << "         " << format_cell(v);
            }
            os << "\n";
        }
    }
    return os.str();
}

std::string table1_csv(
    const std::vector<std::pair<GridCell, MCSummary>>& cells,
    const std::vector<Estimator>& estimators) {
    std::ostringstream os;
    os << "fn,fp,coefficient,true_beta";
    for (const Estimator est : estimators) os << "," << estimator_name(est);
    os << "\n";
    for (const auto& [cell, summary] : cells) {
        const int k = summary.design.k();
        for (int j = 0; j < k; ++j) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%g,%g,%d,%.17g", cell.fn,
                          cell.fp, j + 1, summary.design.beta0[j]);
            os << buf;
            for (const Estimator est : estimators) {
                const auto it = summary.means.find(est);
                if (it == summary.means.end()) {
                    os << ",";
                } else {
                    std::snprintf(buf, sizeof(buf), ",%.17g", it->second[j]);
                    os << buf;
                }
            }
            os << "\n";
        }
    }
    return os.str();
}

std::string table2_text(
    const std::vector<std::pair<GridCell, MCSummary>>& cells) {
    std::ostringstream os;
    os << "   fn    fp";
    for (int j = 1; j <= 4; ++j) os << "  var_ratio_b" << j;
    os << "   det_ratio  pairs\n";
    for (const auto& [cell, summary] : cells) {
        char head[64];
        std::snprintf(head, sizeof(head), "%5.2f %5.2f", cell.fn, cell.fp);
        os << head;
        const int k = static_cast<int>(summary.po_ppo_variance_ratios.size());
        for (int j = 0; j < 4; ++j) {
            if (j < k) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "  %12.3f",
                              summary.po_ppo_variance_ratios[j]);
                os << buf;
            } else {
                os << "              ";
            }
        }
        char tail[64];
        std::snprintf(tail, sizeof(tail), "  %10.3f  %5d\n",
                      summary.po_ppo_det_ratio, summary.po_ppo_pairs);
        os << tail;
    }
    return os.str();
}

}  // namespace pvmle
