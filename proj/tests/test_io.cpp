#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "pvmle/dgp.hpp"
#include "pvmle/errors.hpp"
#include "pvmle/estimators.hpp"
#include "pvmle/io.hpp"

using namespace pvmle;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path("/tmp/pvmle_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
    void write(const std::string& body) const {
        std::ofstream out(path);
        out << body;
    }
};

ColumnSpec small_spec() {
    ColumnSpec s;
    s.outcome_reported = "yr";
    s.outcome_validated = "y";
    s.x_columns = {"x1", "x2"};
    s.z_columns = {"x1", "z2"};
    s.continuous_columns = {"x1", "x2", "z2"};
    return s;
}

DesignConfig small_design() {
    DesignConfig d;
    d.beta0 = Eigen::VectorXd(4);
    d.beta0 << 2.0, -0.5, 0.5, 1.0;
    d.betaR = Eigen::VectorXd(5);
    d.betaR << 1.0, 0.5, -1.5, 2.5, 1.0;
    d.rho = -0.8;
    d.tau_fn = 0.0;
    d.tau_fp = 0.0;
    d.n = 300;
    d.seed = 3;
    return d;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("well-formed file loads") {
    TempFile f("ok.csv");
    f.write(
        "x1,x2,z2,yr,y\n"
        "0.1,0.2,0.3,1,1\n"
        "-0.5,1.2,0.0,0,0\n"
        "0.7,-0.3,1.1,1,0\n"
        "1.5,0.4,-2.0,0,0\n"
        "-1.1,0.9,0.4,1,1\n"
        "0.3,-1.7,0.2,0,0\n"
        "2.2,0.5,-0.7,1,1\n"
        "-0.2,-0.8,1.4,0,0\n"
        "0.9,1.1,-0.1,1,0\n"
        "-1.4,0.6,0.8,0,0\n");
    const Dataset d = load_csv(f.path, small_spec());
    CHECK(d.n() == 10);
    CHECK(d.k() == 2);
    CHECK(d.l() == 2);
    CHECK(d.x(0, 0) == 0.1);
    CHECK(d.z(0, 1) == 0.3);
    CHECK(d.y_reported[2] == 1);
    CHECK((*d.y_validated)[2] == 0);
    CHECK(d.x_continuous.size() == 2);
}

TEST_CASE("validated > reported rejected with row number") {
    TempFile f("bad.csv");
    f.write(
        "x1,x2,z2,yr,y\n"
        "0.1,0.2,0.3,1,1\n"
        "-0.5,1.2,0.0,0,0\n"
        "0.7,-0.3,1.1,0,1\n");
    try {
        load_csv(f.path, small_spec());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
}

TEST_CASE("non-binary outcome rejected") {
    TempFile f("nb.csv");
    f.write(
        "x1,x2,z2,yr,y\n"
        "0.1,0.2,0.3,2,1\n");
    CHECK_THROWS_AS(load_csv(f.path, small_spec()), DataError);
}

TEST_CASE("missing value rejected") {
    TempFile f("mv.csv");
    f.write(
        "x1,x2,z2,yr,y\n"
        "0.1,,0.3,1,1\n");
    CHECK_THROWS_AS(load_csv(f.path, small_spec()), DataError);
}

TEST_CASE("rank-deficient x rejected") {
    TempFile f("rank.csv");
    std::string body = "x1,x2,z2,yr,y\n";
    for (int i = 0; i < 12; ++i) {
        const double v = 0.1 * i;
        char row[128];
        std::snprintf(row, sizeof(row), "%g,%g,%g,%d,%d\n", v, 2.0 * v,
                      0.3 * i * i, i % 2, i % 2);
        body += row;
    }
    f.write(body);
    CHECK_THROWS_AS(load_csv(f.path, small_spec()), DataError);
}

TEST_CASE("exclusion restriction enforced") {
    TempFile f("excl.csv");
    f.write(
        "x1,x2,z2,yr,y\n"
        "0.1,0.2,0.3,1,1\n"
        "-0.5,1.2,0.0,0,0\n"
        "0.7,-0.3,1.1,1,0\n");
    ColumnSpec s = small_spec();
    s.x_columns = {"x1", "x2"};
    s.z_columns = {"x1", "x2"};
    CHECK_THROWS_AS(load_csv(f.path, s), DataError);
    // One direction of exclusion suffices: z subset of x is fine if x has
    // an extra column.
    s.z_columns = {"x1"};
    const Dataset d = load_csv(f.path, s);
    CHECK(d.l() == 1);
}

TEST_CASE("unknown column name rejected") {
    TempFile f("unk.csv");
    f.write("x1,x2,z2,yr,y\n0.1,0.2,0.3,1,1\n");
    ColumnSpec s = small_spec();
    s.x_columns = {"x1", "nope"};
    CHECK_THROWS_AS(load_csv(f.path, s), DataError);
}

TEST_CASE("simulated dataset round-trips bitwise through CSV") {
    const SimulatedDataset sim = simulate(small_design());
    const Dataset original = to_dataset(sim);
    TempFile f("roundtrip.csv");
    export_csv(original, f.path);

    ColumnSpec s;
    s.outcome_reported = "y_reported";
    s.outcome_validated = "y_validated";
    s.x_columns = original.x_names;
    s.z_columns = original.z_names;
    s.continuous_columns = {"x1", "x2", "x3", "x4", "z4"};
    const Dataset reloaded = load_csv(f.path, s);

    REQUIRE(reloaded.n() == original.n());
    CHECK(reloaded.x == original.x);
    CHECK(reloaded.z == original.z);
    CHECK(reloaded.y_reported == original.y_reported);
    CHECK(*reloaded.y_validated == *original.y_validated);
}

TEST_CASE("cluster-robust vcov with singleton clusters equals OPG") {
    DesignConfig d = small_design();
    d.n = 2000;
    Dataset data = to_dataset(simulate(d));
    Eigen::VectorXi ids(data.n());
    for (int i = 0; i < data.n(); ++i) ids[i] = i;
    data.cluster_ids = ids;

    const FitResult fit =
        fit_probit_naive(data, NaiveOutcome::Reported, d.family);
    REQUIRE(fit.vcov.has_value());
    const Eigen::MatrixXd cl = cluster_robust_vcov(fit, data, d.family);
    CHECK((cl - *fit.vcov).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("duplicating records and pairing duplicates scales the sandwich") {
    DesignConfig d = small_design();
    d.n = 1500;
    const Dataset base = to_dataset(simulate(d));

    // Stack two copies; cluster c pairs record i with its duplicate.
    Dataset doubled;
    const auto n = base.n();
    doubled.x.resize(2 * n, base.k());
    doubled.z.resize(2 * n, base.l());
    doubled.y_reported.resize(2 * n);
    Eigen::VectorXi yv(2 * n), ids(2 * n);
    doubled.x << base.x, base.x;
    doubled.z << base.z, base.z;
    doubled.y_reported << base.y_reported, base.y_reported;
    yv << *base.y_validated, *base.y_validated;
    for (int i = 0; i < 2 * n; ++i) ids[i] = i % n;
    doubled.y_validated = yv;
    doubled.cluster_ids = ids;
    doubled.x_names = base.x_names;
    doubled.z_names = base.z_names;

    const FitResult fit =
        fit_probit_naive(doubled, NaiveOutcome::Reported, d.family);
    REQUIRE(fit.vcov.has_value());
    const Eigen::MatrixXd cl = cluster_robust_vcov(fit, doubled, d.family);
    // Within-cluster score sums are 2 S_i, so the meat doubles relative to
    // independent pooling: vcov_cluster = 2 * vcov_opg exactly.
    const Eigen::MatrixXd expect = 2.0 * (*fit.vcov);
    CHECK((cl - expect).lpNorm<Eigen::Infinity>() <=
          1e-8 * expect.lpNorm<Eigen::Infinity>());
}

TEST_CASE("independent clusters give SEs near the default") {
    DesignConfig d = small_design();
    d.n = 4000;
    d.seed = 17;
    Dataset data = to_dataset(simulate(d));
    Eigen::VectorXi ids(data.n());
    for (int i = 0; i < data.n(); ++i) ids[i] = i % 40;
    data.cluster_ids = ids;

    const FitResult fit =
        fit_probit_naive(data, NaiveOutcome::Reported, d.family);
    REQUIRE(fit.vcov.has_value());
    const Eigen::MatrixXd cl = cluster_robust_vcov(fit, data, d.family);
    for (int j = 0; j < data.k(); ++j) {
        const double se_cl = std::sqrt(cl(j, j));
        const double se = std::sqrt((*fit.vcov)(j, j));
        CHECK(se_cl / se > 0.75);
        CHECK(se_cl / se < 1.25);
    }
}

TEST_CASE("single cluster rejected") {
    DesignConfig d = small_design();
    Dataset data = to_dataset(simulate(d));
    data.cluster_ids = Eigen::VectorXi::Zero(data.n());
    const FitResult fit =
        fit_probit_naive(data, NaiveOutcome::Reported, d.family);
    CHECK_THROWS_AS(cluster_robust_vcov(fit, data, d.family), DataError);
}

TEST_SUITE_END();
