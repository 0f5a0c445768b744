#include "pvmle/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "pvmle/errors.hpp"

namespace pvmle {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    fields.push_back(field);
    return fields;
}

double parse_double(const std::string& s, std::int64_t row,
                    const std::string& col) {
    if (s.empty()) {
        throw DataError("missing value in column '" + col + "' at row " +
                        std::to_string(row));
    }
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw DataError("unparseable value '" + s + "' in column '" + col +
                        "' at row " + std::to_string(row));
    }
    if (pos != s.size() || std::isnan(v)) {
        throw DataError("unparseable value '" + s + "' in column '" + col +
                        "' at row " + std::to_string(row));
    }
    return v;
}

int parse_binary(const std::string& s, std::int64_t row,
                 const std::string& col) {
    const double v = parse_double(s, row, col);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw DataError("non-binary value '" + s + "' in outcome column '" + col +
                    "' at row " + std::to_string(row));
}

int rank_of(const Eigen::MatrixXd& m) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    return static_cast<int>(qr.rank());
}

void write_double(std::FILE* f, double v) {
    std::fprintf(f, "%.17g", v);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

const Eigen::VectorXi& Dataset::validated() const {
    if (!y_validated) {
        throw DataError("dataset has no validated outcome column");
    }
    return *y_validated;
}

void Dataset::validate() const {
    if (x.rows() != z.rows() || x.rows() != y_reported.size()) {
        throw DataError("dataset dimensions disagree");
    }
    if (y_validated) {
        for (std::int64_t i = 0; i < n(); ++i) {
            if ((*y_validated)[i] > y_reported[i]) {
                throw DataError(
                    "partial-validation violation (validated=1, reported=0) "
                    "at row " +
                    std::to_string(i + 1));
            }
        }
    }
    if (rank_of(x) < k()) {
        throw DataError("x covariates are rank deficient");
    }
    if (rank_of(z) < l()) {
        throw DataError("z covariates are rank deficient");
    }
    const std::set<std::string> xs(x_names.begin(), x_names.end());
    const std::set<std::string> zs(z_names.begin(), z_names.end());
    const bool z_extra = std::any_of(z_names.begin(), z_names.end(),
                                     [&](const std::string& nm) {
                                         return xs.find(nm) == xs.end();
                                     });
    const bool x_extra = std::any_of(x_names.begin(), x_names.end(),
                                     [&](const std::string& nm) {
                                         return zs.find(nm) == zs.end();
                                     });
    if (!z_extra && !x_extra) {
        throw DataError(
            "exclusion restriction violated: x and z contain identical "
            "covariate sets");
    }
}

Dataset load_csv(const std::string& path, const ColumnSpec& spec) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open CSV file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty CSV file: " + path);
    }
    const std::vector<std::string> header = split_csv_line(line);

    auto col_index = [&](const std::string& name) {
        int found = -1;
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] == name) {
                if (found >= 0) {
                    throw DataError("column name '" + name +
                                    "' is duplicated in the CSV header");
                }
                found = static_cast<int>(j);
            }
        }
        if (found < 0) {
            throw DataError("column '" + name + "' not found in CSV header");
        }
        return found;
    };

    const int yr_col = col_index(spec.outcome_reported);
    const int yv_col =
        spec.outcome_validated ? col_index(*spec.outcome_validated) : -1;
    const int cl_col =
        spec.cluster_column ? col_index(*spec.cluster_column) : -1;
    std::vector<int> x_cols, z_cols;
    for (const auto& nm : spec.x_columns) x_cols.push_back(col_index(nm));
    for (const auto& nm : spec.z_columns) z_cols.push_back(col_index(nm));

    std::vector<std::vector<double>> x_rows, z_rows;
    std::vector<int> yr, yv, cl;
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) +
                            " fields, header has " +
                            std::to_string(header.size()));
        }
        std::vector<double> xr(x_cols.size()), zr(z_cols.size());
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            xr[j] = parse_double(fields[x_cols[j]], row, spec.x_columns[j]);
        }
        for (std::size_t j = 0; j < z_cols.size(); ++j) {
            zr[j] = parse_double(fields[z_cols[j]], row, spec.z_columns[j]);
        }
        yr.push_back(parse_binary(fields[yr_col], row, spec.outcome_reported));
        if (yv_col >= 0) {
            const int v =
                parse_binary(fields[yv_col], row, *spec.outcome_validated);
            if (v > yr.back()) {
                throw DataError(
                    "partial-validation violation (validated=1, reported=0) "
                    "at row " +
                    std::to_string(row));
            }
            yv.push_back(v);
        }
        if (cl_col >= 0) {
            const double v =
                parse_double(fields[cl_col], row, *spec.cluster_column);
            if (v != std::floor(v)) {
                throw DataError("non-integer cluster id at row " +
                                std::to_string(row));
            }
            cl.push_back(static_cast<int>(v));
        }
        x_rows.push_back(std::move(xr));
        z_rows.push_back(std::move(zr));
    }
    if (row == 0) {
        throw DataError("CSV file has no data rows: " + path);
    }

    Dataset out;
    out.x.resize(row, static_cast<int>(x_cols.size()));
    out.z.resize(row, static_cast<int>(z_cols.size()));
    for (std::int64_t i = 0; i < row; ++i) {
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            out.x(i, j) = x_rows[i][j];
        }
        for (std::size_t j = 0; j < z_cols.size(); ++j) {
            out.z(i, j) = z_rows[i][j];
        }
    }
    out.y_reported =
        Eigen::Map<Eigen::VectorXi>(yr.data(), static_cast<int>(yr.size()));
    if (!yv.empty()) {
        out.y_validated = Eigen::Map<Eigen::VectorXi>(
            yv.data(), static_cast<int>(yv.size()));
    }
    if (!cl.empty()) {
        out.cluster_ids = Eigen::Map<Eigen::VectorXi>(
            cl.data(), static_cast<int>(cl.size()));
    }
    out.x_names = spec.x_columns;
    out.z_names = spec.z_columns;

    const std::set<std::string> continuous(spec.continuous_columns.begin(),
                                           spec.continuous_columns.end());
    for (int j = 0; j < out.k(); ++j) {
        if (continuous.count(out.x_names[j])) out.x_continuous.push_back(j);
    }
    for (int j = 0; j < out.l(); ++j) {
        if (continuous.count(out.z_names[j])) out.z_continuous.push_back(j);
    }

    out.validate();
    return out;
}

void export_csv(const Dataset& data, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "w"));
    if (!f) throw DataError("cannot open file for writing: " + path);

    // x columns, z columns not duplicating x names, outcomes, clusters.
    std::vector<int> z_out;
    const std::set<std::string> xs(data.x_names.begin(), data.x_names.end());
    for (int j = 0; j < data.l(); ++j) {
        if (!xs.count(data.z_names[j])) z_out.push_back(j);
    }
    for (int j = 0; j < data.k(); ++j) {
        std::fprintf(f.get(), "%s,", data.x_names[j].c_str());
    }
    for (int j : z_out) {
        std::fprintf(f.get(), "%s,", data.z_names[j].c_str());
    }
    std::fprintf(f.get(), "y_reported");
    if (data.y_validated) std::fprintf(f.get(), ",y_validated");
    if (data.cluster_ids) std::fprintf(f.get(), ",cluster");
    std::fprintf(f.get(), "\n");

    for (std::int64_t i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.k(); ++j) {
            write_double(f.get(), data.x(i, j));
            std::fprintf(f.get(), ",");
        }
        for (int j : z_out) {
            write_double(f.get(), data.z(i, j));
            std::fprintf(f.get(), ",");
        }
        std::fprintf(f.get(), "%d", data.y_reported[i]);
        if (data.y_validated) {
            std::fprintf(f.get(), ",%d", (*data.y_validated)[i]);
        }
        if (data.cluster_ids) {
            std::fprintf(f.get(), ",%d", (*data.cluster_ids)[i]);
        }
        std::fprintf(f.get(), "\n");
    }
}

void export_csv(const SimulatedDataset& sim, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "w"));
    if (!f) throw DataError("cannot open file for writing: " + path);

    const int k = static_cast<int>(sim.x.cols());
    const int l = static_cast<int>(sim.z.cols());
    for (int j = 0; j < k; ++j) std::fprintf(f.get(), "x%d,", j + 1);
    std::fprintf(f.get(), "z_const,");
    for (int j = 4; j < l; ++j) std::fprintf(f.get(), "z%d,", j);
    std::fprintf(f.get(), "y_reported,y_validated,y_star,d\n");

    for (std::int64_t i = 0; i < sim.n(); ++i) {
        for (int j = 0; j < k; ++j) {
            write_double(f.get(), sim.x(i, j));
            std::fprintf(f.get(), ",");
        }
        std::fprintf(f.get(), "1,");
        for (int j = 4; j < l; ++j) {
            write_double(f.get(), sim.z(i, j));
            std::fprintf(f.get(), ",");
        }
        std::fprintf(f.get(), "%d,%d,%d,%d\n", sim.y_reported[i],
                     sim.y_validated[i], sim.y_star[i], sim.d[i]);
    }
}

Dataset to_dataset(const SimulatedDataset& sim) {
    Dataset out;
    out.x = sim.x;
    out.z = sim.z;
    out.y_reported = sim.y_reported;
    out.y_validated = sim.y_validated;
    const int k = static_cast<int>(sim.x.cols());
    const int l = static_cast<int>(sim.z.cols());
    auto is_binary_col = [&](int j) {
        for (std::int64_t i = 0; i < sim.n(); ++i) {
            const double v = sim.x(i, j);
            if (v != 0.0 && v != 1.0) return false;
        }
        return true;
    };
    for (int j = 0; j < k; ++j) {
        out.x_names.push_back("x" + std::to_string(j + 1));
        if (!is_binary_col(j)) out.x_continuous.push_back(j);
    }
    out.z_names.push_back("z_const");
    for (int j = 1; j <= 3; ++j) {
        out.z_names.push_back("x" + std::to_string(j));
        out.z_continuous.push_back(j);
    }
    for (int j = 4; j < l; ++j) {
        out.z_names.push_back("z" + std::to_string(j));
        out.z_continuous.push_back(j);
    }
    return out;
}

}  // namespace pvmle
