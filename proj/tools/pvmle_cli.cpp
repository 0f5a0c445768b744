// Command-line front end: simulate | calibrate | fit | bias | sml | mc.
// Every run writes its outputs plus a manifest (resolved config, config
// hash, seed, version) into the output directory. Exit codes: 0 success,
// 1 usage error, 2 data/validation error, 3 numerical non-convergence.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pvmle/bias.hpp"
#include "pvmle/errors.hpp"
#include "pvmle/json_io.hpp"
#include "pvmle/montecarlo.hpp"
#include "pvmle/semiparam.hpp"
#include "pvmle/version.hpp"

namespace fs = std::filesystem;
using pvmle::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pvmle::DataError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw pvmle::DataError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw pvmle::DataError("cannot write output file: " + path.string());
    }
    out << text;
}

void write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

struct RunContext {
    std::string command;
    fs::path out_dir;
    json resolved_config;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;

    fs::path out(const std::string& name) {
        outputs.push_back(name);
        return out_dir / name;
    }

    void write_manifest() const {
        json m;
        m["command"] = command;
        m["version"] = pvmle::kVersion;
        m["config_hash"] = pvmle::config_hash(resolved_config);
        m["seed"] = seed;
        m["config"] = resolved_config;
        m["outputs"] = outputs;
        write_text(out_dir / "manifest.json", m.dump(2) + "\n");
    }
};

RunContext make_context(const std::string& command,
                        const std::string& out_dir) {
    RunContext ctx;
    ctx.command = command;
    ctx.out_dir = out_dir;
    fs::create_directories(ctx.out_dir);
    return ctx;
}

pvmle::DesignConfig resolve_design(json& design_json, std::uint64_t seed_override,
                                   bool has_seed, std::int64_t calib_n) {
    pvmle::DesignConfig design = pvmle::design_from_json(design_json);
    if (has_seed) design.seed = seed_override;
    if (std::isnan(design.tau_fn) || std::isnan(design.tau_fp)) {
        const auto [fn, fp] = pvmle::calibrate_thresholds(design, calib_n);
        design.tau_fn = fn;
        design.tau_fp = fp;
    }
    design_json = pvmle::to_json(design);
    return design;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed, bool has_seed, std::int64_t calib_n) {
    RunContext ctx = make_context("simulate", out_dir);
    json cfg = load_json_file(config_path);
    const pvmle::DesignConfig design =
        resolve_design(cfg, seed, has_seed, calib_n);
    ctx.resolved_config = cfg;
    ctx.seed = design.seed;

    const pvmle::SimulatedDataset sim = pvmle::simulate(design);
    pvmle::export_csv(sim, ctx.out("dataset.csv").string());
    write_json(ctx.out("design_resolved.json"), cfg);
    ctx.write_manifest();
    return kExitOk;
}

int cmd_calibrate(const std::string& config_path, const std::string& out_dir,
                  std::uint64_t seed, bool has_seed, std::int64_t calib_n) {
    RunContext ctx = make_context("calibrate", out_dir);
    json cfg = load_json_file(config_path);
    pvmle::DesignConfig design = pvmle::design_from_json(cfg);
    if (has_seed) design.seed = seed;
    const auto [fn, fp] = pvmle::calibrate_thresholds(design, calib_n);
    design.tau_fn = fn;
    design.tau_fp = fp;
    ctx.resolved_config = pvmle::to_json(design);
    ctx.seed = design.seed;

    json result;
    result["tau_fn"] = fn;
    result["tau_fp"] = fp;
    result["target_fn_rate"] = design.target_fn_rate;
    result["target_fp_rate"] = design.target_fp_rate;
    result["calib_n"] = calib_n;
    write_json(ctx.out("calibration.json"), result);
    ctx.write_manifest();
    return kExitOk;
}

int cmd_fit(const std::string& estimator_name, const std::string& data_path,
            const std::string& spec_path, const std::string& family_name,
            const std::string& out_dir) {
    RunContext ctx = make_context("fit", out_dir);
    const json spec_json = load_json_file(spec_path);
    const pvmle::ColumnSpec spec = pvmle::column_spec_from_json(spec_json);
    const pvmle::Estimator est = pvmle::estimator_from_name(estimator_name);
    const pvmle::LinkFamily family = family_name == "amh"
                                         ? pvmle::LinkFamily::AmhLogistic
                                         : pvmle::LinkFamily::Normal;
    json cfg;
    cfg["estimator"] = estimator_name;
    cfg["data"] = data_path;
    cfg["family"] = family_name;
    cfg["column_spec"] = spec_json;
    ctx.resolved_config = cfg;

    const pvmle::Dataset data = pvmle::load_csv(data_path, spec);

    pvmle::FitResult fit;
    switch (est) {
        case pvmle::Estimator::ProbitReported:
            fit = pvmle::fit_probit_naive(data, pvmle::NaiveOutcome::Reported,
                                          family);
            break;
        case pvmle::Estimator::ProbitValidated:
            fit = pvmle::fit_probit_naive(data, pvmle::NaiveOutcome::Validated,
                                          family);
            break;
        case pvmle::Estimator::ProbitRestricted:
            fit = pvmle::fit_probit_naive(
                data, pvmle::NaiveOutcome::RestrictedSample, family);
            break;
        case pvmle::Estimator::Has:
            fit = pvmle::fit_has(data, family);
            break;
        case pvmle::Estimator::PoMle:
            fit = pvmle::fit_po_mle(data, family);
            break;
        case pvmle::Estimator::PpoMle:
            fit = pvmle::fit_ppo_mle(data, family);
            break;
    }

    json out = pvmle::to_json(fit);
    const pvmle::MarginalEffects me =
        pvmle::marginal_effects(fit, data, family);
    json me_json;
    {
        json avg = json::array();
        for (int j = 0; j < me.average.size(); ++j) avg.push_back(me.average[j]);
        me_json["average"] = avg;
        me_json["mean_predicted_participation"] = me.predicted.mean();
    }
    out["marginal_effects"] = me_json;

    if (data.cluster_ids && est != pvmle::Estimator::ProbitRestricted) {
        const Eigen::MatrixXd cl =
            pvmle::cluster_robust_vcov(fit, data, family);
        json se = json::array();
        for (int j = 0; j < cl.rows(); ++j) {
            se.push_back(std::sqrt(std::max(0.0, cl(j, j))));
        }
        out["cluster_std_errors"] = se;
    }

    write_json(ctx.out("fit.json"), out);
    write_text(ctx.out("fit.csv"),
               pvmle::fit_csv_header(fit) + pvmle::fit_csv_row(fit));
    ctx.write_manifest();
    if (!fit.converged) {
        std::cerr << "fit did not converge (gradient max-norm "
                  << fit.gradient_norm << ")\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_bias(const std::string& design_path, const std::string& estimator,
             std::int64_t oracle_n, std::int64_t compare_n,
             const std::string& out_dir, std::uint64_t seed, bool has_seed) {
    RunContext ctx = make_context("bias", out_dir);
    json cfg = load_json_file(design_path);
    const pvmle::DesignConfig design =
        resolve_design(cfg, seed, has_seed, 500000);
    ctx.resolved_config = cfg;
    ctx.resolved_config["oracle_n"] = oracle_n;
    ctx.seed = design.seed;

    pvmle::NaiveEstimator est;
    if (estimator == "naive-reported") {
        est = pvmle::NaiveEstimator::NaiveReported;
    } else if (estimator == "naive-validated") {
        est = pvmle::NaiveEstimator::NaiveValidated;
    } else {
        throw pvmle::DataError(
            "bias estimator must be naive-reported or naive-validated");
    }

    pvmle::BiasReport rep = pvmle::pseudo_true_params(design, est, oracle_n);
    pvmle::verify_bias_identity(design, rep, oracle_n);
    json out = pvmle::to_json(rep);

    if (compare_n > 0) {
        pvmle::DesignConfig big = design;
        big.n = compare_n;
        const pvmle::Dataset data = pvmle::to_dataset(pvmle::simulate(big));
        const pvmle::FitResult fit = pvmle::fit_probit_naive(
            data,
            est == pvmle::NaiveEstimator::NaiveReported
                ? pvmle::NaiveOutcome::Reported
                : pvmle::NaiveOutcome::Validated,
            design.family);
        json cmp;
        json est_json = json::array();
        for (int j = 0; j < fit.params.size(); ++j) {
            est_json.push_back(fit.params[j]);
        }
        cmp["empirical_fit_n"] = compare_n;
        cmp["empirical_beta"] = est_json;
        out["comparison"] = cmp;

        std::string table = "component  pseudo_true  empirical  true_beta\n";
        for (int j = 0; j < rep.pseudo_true.size(); ++j) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%9d  %11.4f  %9.4f  %9.4f\n",
                          j + 1, rep.pseudo_true[j], fit.params[j],
                          rep.true_beta[j]);
            table += buf;
        }
        write_text(ctx.out("bias_comparison.txt"), table);
    }

    write_json(ctx.out("bias.json"), out);
    ctx.write_manifest();
    if (!rep.converged) {
        std::cerr << "pseudo-true score solve did not reach tolerance\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_sml(const std::string& data_path, const std::string& spec_path,
            const std::string& variant_name, const std::string& kernel_path,
            bool with_variance, const std::string& out_dir) {
    RunContext ctx = make_context("sml", out_dir);
    const json spec_json = load_json_file(spec_path);
    const pvmle::ColumnSpec spec = pvmle::column_spec_from_json(spec_json);
    pvmle::KernelConfig kcfg;
    json kernel_json = pvmle::to_json(kcfg);
    if (!kernel_path.empty()) {
        kernel_json = load_json_file(kernel_path);
        kcfg = pvmle::kernel_config_from_json(kernel_json);
        kernel_json = pvmle::to_json(kcfg);
    }
    const pvmle::SmlVariant variant = variant_name == "po"
                                          ? pvmle::SmlVariant::PO
                                          : pvmle::SmlVariant::PPO;
    json cfg;
    cfg["data"] = data_path;
    cfg["variant"] = variant_name;
    cfg["kernel"] = kernel_json;
    cfg["column_spec"] = spec_json;
    ctx.resolved_config = cfg;

    const pvmle::Dataset data = pvmle::load_csv(data_path, spec);
    const pvmle::SmlFit fit = pvmle::fit_sml(data, kcfg, variant);
    json out = pvmle::to_json(fit);
    if (with_variance) {
        const pvmle::SmlVariance var =
            pvmle::sml_variance(fit, data, kcfg, variant);
        json se = json::array();
        for (int j = 0; j < var.vcov.rows(); ++j) {
            se.push_back(std::sqrt(std::max(0.0, var.vcov(j, j))));
        }
        out["free_param_std_errors"] = se;
    }
    write_json(ctx.out("sml.json"), out);
    write_text(ctx.out("sml.csv"),
               pvmle::sml_csv_header(fit) + pvmle::sml_csv_row(fit));
    ctx.write_manifest();
    return fit.converged ? kExitOk : kExitNumeric;
}

int cmd_mc(const std::string& config_path, const std::string& out_dir,
           int workers, std::uint64_t seed, bool has_seed,
           bool write_replications) {
    RunContext ctx = make_context("mc", out_dir);
    json cfg = load_json_file(config_path);
    pvmle::MCConfig mc = pvmle::mc_config_from_json(cfg);
    if (workers > 0) mc.parallel_workers = workers;
    if (has_seed) mc.master_seed = seed;
    ctx.seed = mc.master_seed;

    std::vector<pvmle::GridCell> grid;
    const bool grid_mode = cfg.contains("grid");
    if (grid_mode) {
        for (const auto& cell : cfg.at("grid")) {
            grid.push_back({cell.at("fn").get<double>(),
                            cell.at("fp").get<double>()});
        }
    } else {
        grid.push_back(
            {mc.design.target_fn_rate, mc.design.target_fp_rate});
    }
    json resolved = pvmle::to_json(mc);
    json grid_json = json::array();
    for (const auto& cell : grid) {
        grid_json.push_back({{"fn", cell.fn}, {"fp", cell.fp}});
    }
    resolved["grid"] = grid_json;
    ctx.resolved_config = resolved;

    // Grid mode recalibrates thresholds per cell; a single-cell run honors
    // thresholds already present in the design.
    std::vector<std::pair<pvmle::GridCell, pvmle::MCSummary>> results;
    if (grid_mode) {
        results = pvmle::run_grid(mc, grid);
    } else {
        results.emplace_back(grid[0], pvmle::run_mc(mc));
    }

    for (const auto& [cell, summary] : results) {
        char name[128];
        std::snprintf(name, sizeof(name), "cell_fn%02.0f_fp%02.0f",
                      cell.fn * 100.0, cell.fp * 100.0);
        write_json(ctx.out(std::string(name) + "_summary.json"),
                   pvmle::to_json(summary));
        write_text(ctx.out(std::string(name) + "_summary.csv"),
                   pvmle::table1_csv({{cell, summary}}, mc.estimators));
        if (write_replications) {
            const fs::path rep_dir =
                ctx.out_dir / (std::string(name) + "_replications");
            fs::create_directories(rep_dir);
            for (const auto& rec : summary.records) {
                char rep_name[64];
                std::snprintf(rep_name, sizeof(rep_name), "rep_%05d.json",
                              rec.replication);
                write_json(rep_dir / rep_name, pvmle::to_json(rec));
            }
            ctx.outputs.push_back(std::string(name) + "_replications/");
        }
    }
    write_text(ctx.out("table1.txt"),
               pvmle::table1_text(results, mc.estimators));
    write_text(ctx.out("table1.csv"),
               pvmle::table1_csv(results, mc.estimators));
    write_text(ctx.out("table2.txt"), pvmle::table2_text(results));
    ctx.write_manifest();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binary-choice estimation under partially validated "
                 "misclassified outcomes"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_path, spec_path;
    std::string estimator = "ppo", family = "normal", variant = "ppo";
    std::string kernel_path;
    std::uint64_t seed = 0;
    std::int64_t calib_n = 500000, oracle_n = 200000, compare_n = 0;
    int workers = 0;
    bool with_variance = false;
    bool write_replications = false;

    auto* sim = app.add_subcommand("simulate", "Simulate a design to CSV");
    sim->add_option("--config", config_path, "DesignConfig JSON")->required();
    sim->add_option("--out", out_dir, "output directory")->required();
    auto* sim_seed = sim->add_option("--seed", seed, "override design seed");
    sim->add_option("--calib-n", calib_n, "calibration sample size");

    auto* cal = app.add_subcommand("calibrate",
                                   "Calibrate misreporting thresholds");
    cal->add_option("--config", config_path, "DesignConfig JSON")->required();
    cal->add_option("--out", out_dir, "output directory")->required();
    auto* cal_seed = cal->add_option("--seed", seed, "override design seed");
    cal->add_option("--calib-n", calib_n, "calibration sample size");

    auto* fit = app.add_subcommand("fit", "Fit one estimator on a CSV");
    fit->add_option("--estimator", estimator,
                    "probit-reported|probit-validated|probit-restricted|has|"
                    "po|ppo")
        ->required();
    fit->add_option("--data", data_path, "dataset CSV")->required();
    fit->add_option("--spec", spec_path, "ColumnSpec JSON")->required();
    fit->add_option("--family", family, "normal|amh");
    fit->add_option("--out", out_dir, "output directory")->required();

    auto* bias = app.add_subcommand("bias", "Pseudo-true bias analysis");
    bias->add_option("--design", config_path, "DesignConfig JSON")->required();
    bias->add_option("--estimator", estimator,
                     "naive-reported|naive-validated")
        ->required();
    bias->add_option("--oracle-n", oracle_n, "oracle sample size");
    bias->add_option("--compare-n", compare_n,
                     "when > 0, also fit the naive estimator on one "
                     "simulated draw of this size");
    bias->add_option("--out", out_dir, "output directory")->required();
    auto* bias_seed = bias->add_option("--seed", seed, "override design seed");

    auto* sml = app.add_subcommand("sml", "Semiparametric PPO/PO fit");
    sml->add_option("--data", data_path, "dataset CSV")->required();
    sml->add_option("--spec", spec_path, "ColumnSpec JSON")->required();
    sml->add_option("--variant", variant, "ppo|po");
    sml->add_option("--config", kernel_path, "KernelConfig JSON");
    sml->add_flag("--variance", with_variance,
                  "also compute plug-in variance components");
    sml->add_option("--out", out_dir, "output directory")->required();

    auto* mc = app.add_subcommand("mc", "Monte Carlo replication study");
    mc->add_option("--config", config_path, "MCConfig JSON")->required();
    mc->add_option("--out", out_dir, "output directory")->required();
    mc->add_option("--workers", workers, "parallel workers (0 = cores)");
    auto* mc_seed = mc->add_option("--seed", seed, "override master seed");
    mc->add_flag("--replication-json", write_replications,
                 "write one JSON per replication");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(config_path, out_dir, seed, !sim_seed->empty(),
                                calib_n);
        }
        if (cal->parsed()) {
            return cmd_calibrate(config_path, out_dir, seed,
                                 !cal_seed->empty(), calib_n);
        }
        if (fit->parsed()) {
            return cmd_fit(estimator, data_path, spec_path, family, out_dir);
        }
        if (bias->parsed()) {
            return cmd_bias(config_path, estimator, oracle_n, compare_n,
                            out_dir, seed, !bias_seed->empty());
        }
        if (sml->parsed()) {
            return cmd_sml(data_path, spec_path, variant, kernel_path,
                           with_variance, out_dir);
        }
        if (mc->parsed()) {
            return cmd_mc(config_path, out_dir, workers, seed,
                          !mc_seed->empty(), write_replications);
        }
    } catch (const pvmle::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const pvmle::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const pvmle::CalibrationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
