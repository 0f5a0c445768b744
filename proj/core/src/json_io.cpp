#include "pvmle/json_io.hpp"

#include <cmath>

#include "pvmle/errors.hpp"

namespace pvmle {

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

// tau values may be finite numbers, null (uncalibrated) or "inf"/"-inf".
json tau_to_json(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double tau_from_json(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw DataError("invalid threshold string: " + s);
    }
    return j.get<double>();
}

std::string family_name(LinkFamily f) {
    return f == LinkFamily::Normal ? "normal" : "amh";
}

LinkFamily family_from_name(const std::string& s) {
    if (s == "normal") return LinkFamily::Normal;
    if (s == "amh" || s == "amh-logistic") return LinkFamily::AmhLogistic;
    throw DataError("unknown family: " + s + " (expected normal|amh)");
}

}  // namespace

json to_json(const DesignConfig& c) {
    json j;
    j["beta0"] = vec_to_json(c.beta0);
    j["betaR"] = vec_to_json(c.betaR);
    j["rho"] = c.rho;
    j["family"] = family_name(c.family);
    j["n"] = c.n;
    j["covariate_law"] = c.covariate_law == CovariateLaw::StdNormalIID
                             ? "std_normal_iid"
                             : "std_normal_iid_dummy";
    j["target_fn_rate"] = c.target_fn_rate;
    j["target_fp_rate"] = c.target_fp_rate;
    j["tau_fn"] = tau_to_json(c.tau_fn);
    j["tau_fp"] = tau_to_json(c.tau_fp);
    j["seed"] = c.seed;
    return j;
}

DesignConfig design_from_json(const json& j) {
    DesignConfig c;
    c.beta0 = vec_from_json(j.at("beta0"));
    c.betaR = vec_from_json(j.at("betaR"));
    c.rho = j.value("rho", -0.8);
    c.family = family_from_name(j.value("family", "normal"));
    c.n = j.value("n", static_cast<std::int64_t>(5000));
    const std::string law = j.value("covariate_law", "std_normal_iid");
    if (law == "std_normal_iid") {
        c.covariate_law = CovariateLaw::StdNormalIID;
    } else if (law == "std_normal_iid_dummy") {
        c.covariate_law = CovariateLaw::StdNormalIIDDummy;
    } else {
        throw DataError("unknown covariate_law: " + law);
    }
    c.target_fn_rate = j.value("target_fn_rate", 0.05);
    c.target_fp_rate = j.value("target_fp_rate", 0.05);
    if (j.contains("tau_fn")) c.tau_fn = tau_from_json(j.at("tau_fn"));
    if (j.contains("tau_fp")) c.tau_fp = tau_from_json(j.at("tau_fp"));
    c.seed = j.value("seed", static_cast<std::uint64_t>(1));
    c.validate();
    return c;
}

json to_json(const MCConfig& c) {
    json j;
    j["design"] = to_json(c.design);
    j["replications"] = c.replications;
    j["n"] = c.n;
    json est = json::array();
    for (const Estimator e : c.estimators) est.push_back(estimator_name(e));
    j["estimators"] = est;
    j["master_seed"] = c.master_seed;
    j["parallel_workers"] = c.parallel_workers;
    j["calib_n"] = c.calib_n;
    return j;
}

MCConfig mc_config_from_json(const json& j) {
    MCConfig c;
    c.design = design_from_json(j.at("design"));
    c.replications = j.value("replications", 250);
    c.n = j.value("n", static_cast<std::int64_t>(5000));
    if (j.contains("estimators")) {
        for (const auto& e : j.at("estimators")) {
            c.estimators.push_back(estimator_from_name(e.get<std::string>()));
        }
    } else {
        c.estimators = {Estimator::ProbitReported, Estimator::ProbitValidated,
                        Estimator::ProbitRestricted, Estimator::Has,
                        Estimator::PoMle, Estimator::PpoMle};
    }
    c.master_seed = j.value("master_seed", static_cast<std::uint64_t>(1));
    c.parallel_workers = j.value("parallel_workers", 0);
    c.calib_n = j.value("calib_n", static_cast<std::int64_t>(500000));
    return c;
}

ColumnSpec column_spec_from_json(const json& j) {
    ColumnSpec s;
    s.outcome_reported = j.at("outcome_reported").get<std::string>();
    if (j.contains("outcome_validated") && !j.at("outcome_validated").is_null()) {
        s.outcome_validated = j.at("outcome_validated").get<std::string>();
    }
    s.x_columns = j.at("x_columns").get<std::vector<std::string>>();
    s.z_columns = j.at("z_columns").get<std::vector<std::string>>();
    if (j.contains("cluster_column") && !j.at("cluster_column").is_null()) {
        s.cluster_column = j.at("cluster_column").get<std::string>();
    }
    if (j.contains("continuous_columns")) {
        s.continuous_columns =
            j.at("continuous_columns").get<std::vector<std::string>>();
    }
    return s;
}

json to_json(const ColumnSpec& s) {
    json j;
    j["outcome_reported"] = s.outcome_reported;
    j["outcome_validated"] =
        s.outcome_validated ? json(*s.outcome_validated) : json(nullptr);
    j["x_columns"] = s.x_columns;
    j["z_columns"] = s.z_columns;
    j["cluster_column"] =
        s.cluster_column ? json(*s.cluster_column) : json(nullptr);
    j["continuous_columns"] = s.continuous_columns;
    return j;
}

json to_json(const KernelConfig& c) {
    json j;
    j["bandwidth_c"] = c.bandwidth_c;
    j["bandwidth_p"] = c.bandwidth_p;
    j["trim_quantile"] = c.trim_quantile;
    j["delta_n"] = c.delta_n;
    j["kernel"] = "gaussian-bivariate";
    return j;
}

KernelConfig kernel_config_from_json(const json& j) {
    KernelConfig c;
    c.bandwidth_c = j.value("bandwidth_c", 1.0);
    c.bandwidth_p = j.value("bandwidth_p", 6.5);
    c.trim_quantile = j.value("trim_quantile", 0.02);
    c.delta_n = j.value("delta_n", 0.01);
    c.validate();
    return c;
}

json to_json(const FitResult& fit) {
    json j;
    j["estimator"] = estimator_name(fit.estimator);
    j["params"] = vec_to_json(fit.params);
    j["param_names"] = fit.param_names;
    j["loglik"] = fit.loglik;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["gradient_norm"] = fit.gradient_norm;
    j["boundary"] = fit.boundary;
    j["flat"] = fit.flat;
    json se = json::array();
    for (int i = 0; i < fit.std_errors.size(); ++i) {
        const double v = fit.std_errors[i];
        se.push_back(std::isnan(v) ? json(nullptr) : json(v));
    }
    j["std_errors"] = se;
    j["vcov"] = fit.vcov ? mat_to_json(*fit.vcov) : json(nullptr);
    return j;
}

json to_json(const BiasReport& rep) {
    json j;
    j["estimator"] = rep.estimator == NaiveEstimator::NaiveReported
                         ? "naive-reported"
                         : "naive-validated";
    j["pseudo_true"] = vec_to_json(rep.pseudo_true);
    j["true_beta"] = vec_to_json(rep.true_beta);
    j["bias"] = vec_to_json(rep.bias);
    j["score_norm_at_pseudo_true"] = rep.score_norm_at_pseudo_true;
    j["A_matrix"] = mat_to_json(rep.A_matrix);
    j["rhs_vector"] = vec_to_json(rep.rhs_vector);
    j["converged"] = rep.converged;
    j["identity_residual"] = std::isnan(rep.identity_residual)
                                 ? json(nullptr)
                                 : json(rep.identity_residual);
    j["identity_t"] =
        std::isnan(rep.identity_t) ? json(nullptr) : json(rep.identity_t);
    return j;
}

json to_json(const SmlFit& fit) {
    json j;
    j["variant"] = fit.variant == SmlVariant::PPO ? "ppo" : "po";
    j["beta_scale_normalized"] = vec_to_json(fit.beta_scale);
    j["beta_unit_normalized"] = vec_to_json(fit.theta_unit);
    j["beta_r"] = vec_to_json(fit.beta_r);
    j["free_z_columns"] = fit.free_z_columns;
    j["loglik"] = fit.loglik;
    j["effective_n"] = fit.effective_n;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    return j;
}

json to_json(const ReplicationRecord& rec) {
    json j;
    j["replication"] = rec.replication;
    j["seed"] = rec.seed;
    j["achieved_fn"] = rec.achieved_fn;
    j["achieved_fp"] = rec.achieved_fp;
    json fits;
    for (const auto& [est, beta] : rec.beta) {
        json f;
        f["beta"] = vec_to_json(beta);
        f["converged"] = rec.converged.at(est);
        f["loglik"] = rec.loglik.at(est);
        fits[estimator_name(est)] = std::move(f);
    }
    for (const auto& [est, msg] : rec.error) {
        fits[estimator_name(est)]["error"] = msg;
    }
    j["fits"] = std::move(fits);
    return j;
}

json to_json(const MCSummary& s, bool include_records) {
    json j;
    j["design"] = to_json(s.design);
    j["replications"] = s.replications;
    j["n"] = s.n;
    j["achieved_fn"] = s.achieved_fn;
    j["achieved_fp"] = s.achieved_fp;
    json means, variances, failures;
    for (const auto& [est, v] : s.means) {
        means[estimator_name(est)] = vec_to_json(v);
    }
    for (const auto& [est, v] : s.variances) {
        variances[estimator_name(est)] = vec_to_json(v);
    }
    for (const auto& [est, c] : s.failures) {
        failures[estimator_name(est)] = c;
    }
    j["means"] = std::move(means);
    j["variances"] = std::move(variances);
    j["failures"] = std::move(failures);
    j["po_ppo_variance_ratios"] = vec_to_json(s.po_ppo_variance_ratios);
    j["po_ppo_det_ratio"] = std::isnan(s.po_ppo_det_ratio)
                                ? json(nullptr)
                                : json(s.po_ppo_det_ratio);
    j["po_ppo_pairs"] = s.po_ppo_pairs;
    if (include_records) {
        json recs = json::array();
        for (const auto& rec : s.records) recs.push_back(to_json(rec));
        j["records"] = std::move(recs);
    }
    return j;
}

namespace {

void append_num(std::string& s, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    s += buf;
}

}  // namespace

std::string fit_csv_header(const FitResult& fit) {
    std::string s = "estimator,converged,loglik,gradient_norm,iterations";
    for (const auto& name : fit.param_names) s += "," + name;
    for (const auto& name : fit.param_names) s += ",se_" + name;
    s += "\n";
    return s;
}

std::string fit_csv_row(const FitResult& fit) {
    std::string s = estimator_name(fit.estimator);
    s += fit.converged ? ",1," : ",0,";
    append_num(s, fit.loglik);
    s += ",";
    append_num(s, fit.gradient_norm);
    s += "," + std::to_string(fit.iterations);
    for (int j = 0; j < fit.params.size(); ++j) {
        s += ",";
        append_num(s, fit.params[j]);
    }
    for (int j = 0; j < fit.std_errors.size(); ++j) {
        s += ",";
        if (!std::isnan(fit.std_errors[j])) append_num(s, fit.std_errors[j]);
    }
    s += "\n";
    return s;
}

std::string sml_csv_header(const SmlFit& fit) {
    std::string s = "variant,converged,loglik,effective_n";
    for (int j = 0; j < fit.beta_scale.size(); ++j) {
        s += ",beta_scale_" + std::to_string(j + 1);
    }
    for (int j = 0; j < fit.theta_unit.size(); ++j) {
        s += ",beta_unit_" + std::to_string(j + 1);
    }
    for (int j = 0; j < fit.beta_r.size(); ++j) {
        s += ",beta_r_" + std::to_string(j + 1);
    }
    s += "\n";
    return s;
}

std::string sml_csv_row(const SmlFit& fit) {
    std::string s = fit.variant == SmlVariant::PPO ? "ppo" : "po";
    s += fit.converged ? ",1," : ",0,";
    append_num(s, fit.loglik);
    s += "," + std::to_string(fit.effective_n);
    for (int j = 0; j < fit.beta_scale.size(); ++j) {
        s += ",";
        append_num(s, fit.beta_scale[j]);
    }
    for (int j = 0; j < fit.theta_unit.size(); ++j) {
        s += ",";
        append_num(s, fit.theta_unit[j]);
    }
    for (int j = 0; j < fit.beta_r.size(); ++j) {
        s += ",";
        append_num(s, fit.beta_r[j]);
    }
    s += "\n";
    return s;
}

std::string config_hash(const json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pvmle
