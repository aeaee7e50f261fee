#include "kobt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace kobt {

namespace {

std::string shape_error(const std::string& what) {
    return "DataMatrix: " + what;
}

bool parse_double(const std::string& cell, double& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void format_value(std::string& buf, double v) {
    char tmp[64];
    int len = std::snprintf(tmp, sizeof(tmp), "%.17g", v);
    buf.append(tmp, static_cast<std::size_t>(len));
}

}  // namespace

DataMatrix::DataMatrix(Eigen::MatrixXd v, std::vector<std::string> names)
    : values(std::move(v)), column_names(std::move(names)) {
    validate();
}

int DataMatrix::column_index(const std::string& name) const {
    auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) return -1;
    return static_cast<int>(it - column_names.begin());
}

void DataMatrix::validate() const {
    if (values.rows() < 2) throw std::invalid_argument(shape_error("need n >= 2 rows"));
    if (values.cols() < 1) throw std::invalid_argument(shape_error("need p >= 1 columns"));
    if (static_cast<Eigen::Index>(column_names.size()) != values.cols())
        throw std::invalid_argument(shape_error("column_names length != p"));
    std::unordered_set<std::string> seen;
    for (const auto& name : column_names) {
        if (!seen.insert(name).second)
            throw std::invalid_argument(shape_error("duplicate column name '" + name + "'"));
    }
    if (!values.allFinite())
        throw std::invalid_argument(shape_error("non-finite entry present"));
}

void Dataset::validate() const {
    x.validate();
    if (y.size() != x.n())
        throw std::invalid_argument("Dataset: response length != number of rows");
    if (!y.allFinite()) throw std::invalid_argument("Dataset: non-finite response value");
    if (w) {
        w->validate();
        if (w->n() != x.n())
            throw std::invalid_argument("Dataset: covariate rows != design rows");
    }
    if (task == Task::binary_classification) {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] != 0.0 && y[i] != 1.0)
                throw std::invalid_argument(
                    "Dataset: binary task requires responses in {0,1}, got " +
                    std::to_string(y[i]) + " at row " + std::to_string(i + 1));
        }
    }
}

namespace {

struct RawCsv {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::size_t ncols = 0;
};

RawCsv read_raw_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

    RawCsv raw;
    std::string line;
    std::size_t line_no = 0;

    if (has_header) {
        if (!std::getline(in, line))
            throw std::runtime_error("load_csv: empty file '" + path + "'");
        ++line_no;
        for (auto& cell : split_line(line)) raw.names.push_back(trim(cell));
        raw.ncols = raw.names.size();
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (raw.ncols == 0) raw.ncols = cells.size();
        if (cells.size() != raw.ncols)
            throw std::runtime_error("load_csv: row " + std::to_string(line_no) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(raw.ncols));
        std::vector<double> row(raw.ncols);
        for (std::size_t c = 0; c < raw.ncols; ++c) {
            double v;
            if (!parse_double(cells[c], v))
                throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                                         ", column " + std::to_string(c + 1) +
                                         ": cannot parse '" + trim(cells[c]) + "' as a number");
            if (!std::isfinite(v))
                throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                                         ", column " + std::to_string(c + 1) +
                                         ": non-finite value '" + trim(cells[c]) + "'");
            row[c] = v;
        }
        raw.rows.push_back(std::move(row));
    }
    if (raw.rows.empty()) throw std::runtime_error("load_csv: no data rows in '" + path + "'");
    if (raw.names.empty()) {
        for (std::size_t c = 0; c < raw.ncols; ++c)
            raw.names.push_back("col_" + std::to_string(c));
    }
    return raw;
}

}  // namespace

DataMatrix load_csv_matrix(const std::string& path, bool has_header) {
    RawCsv raw = read_raw_csv(path, has_header);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(raw.rows.size()),
                      static_cast<Eigen::Index>(raw.ncols));
    for (std::size_t i = 0; i < raw.rows.size(); ++i)
        for (std::size_t c = 0; c < raw.ncols; ++c)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = raw.rows[i][c];
    return DataMatrix(std::move(x), std::move(raw.names));
}

Dataset load_csv(const std::string& path, bool has_header,
                 const std::string& response_column,
                 const std::vector<std::string>& covariate_columns) {
    RawCsv raw = read_raw_csv(path, has_header);
    std::vector<std::string>& names = raw.names;
    std::vector<std::vector<double>>& rows = raw.rows;
    const std::size_t ncols = raw.ncols;

    // Resolve the response: header name first, then 0-based index.
    int resp = -1;
    auto it = std::find(names.begin(), names.end(), response_column);
    if (it != names.end()) {
        resp = static_cast<int>(it - names.begin());
    } else {
        int idx;
        auto [ptr, ec] = std::from_chars(response_column.data(),
                                         response_column.data() + response_column.size(), idx);
        if (ec == std::errc() && ptr == response_column.data() + response_column.size() &&
            idx >= 0 && idx < static_cast<int>(ncols)) {
            resp = idx;
        }
    }
    if (resp < 0)
        throw std::runtime_error("load_csv: response column '" + response_column + "' not found");

    std::vector<int> cov_idx;
    for (const auto& cname : covariate_columns) {
        int ci = -1;
        auto cit = std::find(names.begin(), names.end(), cname);
        if (cit != names.end()) ci = static_cast<int>(cit - names.begin());
        if (ci < 0 || ci == resp)
            throw std::runtime_error("load_csv: covariate column '" + cname + "' not found");
        cov_idx.push_back(ci);
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<int> x_idx;
    for (std::size_t c = 0; c < ncols; ++c) {
        int ci = static_cast<int>(c);
        if (ci == resp) continue;
        if (std::find(cov_idx.begin(), cov_idx.end(), ci) != cov_idx.end()) continue;
        x_idx.push_back(ci);
    }
    if (x_idx.empty()) throw std::runtime_error("load_csv: no feature columns left");

    Dataset d;
    d.response_name = names[static_cast<std::size_t>(resp)];
    d.y.resize(n);
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(x_idx.size()));
    std::vector<std::string> x_names;
    for (int ci : x_idx) x_names.push_back(names[static_cast<std::size_t>(ci)]);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        d.y[i] = row[static_cast<std::size_t>(resp)];
        for (std::size_t c = 0; c < x_idx.size(); ++c)
            X(i, static_cast<Eigen::Index>(c)) = row[static_cast<std::size_t>(x_idx[c])];
    }
    d.x = DataMatrix(std::move(X), std::move(x_names));

    if (!cov_idx.empty()) {
        Eigen::MatrixXd W(n, static_cast<Eigen::Index>(cov_idx.size()));
        std::vector<std::string> w_names;
        for (std::size_t c = 0; c < cov_idx.size(); ++c) {
            w_names.push_back(names[static_cast<std::size_t>(cov_idx[c])]);
            for (Eigen::Index i = 0; i < n; ++i)
                W(i, static_cast<Eigen::Index>(c)) =
                    rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(cov_idx[c])];
        }
        d.w = DataMatrix(std::move(W), std::move(w_names));
    }
    return d;
}

void write_csv(const DataMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "' for writing");
    std::string buf;
    for (Eigen::Index c = 0; c < m.p(); ++c) {
        if (c) buf.push_back(',');
        buf += m.column_names[static_cast<std::size_t>(c)];
    }
    buf.push_back('\n');
    for (Eigen::Index i = 0; i < m.n(); ++i) {
        for (Eigen::Index c = 0; c < m.p(); ++c) {
            if (c) buf.push_back(',');
            format_value(buf, m.values(i, c));
        }
        buf.push_back('\n');
    }
    out << buf;
}

void write_dataset_csv(const Dataset& d, const std::string& path) {
    Eigen::Index extra = 1 + (d.w ? d.w->p() : 0);
    Eigen::MatrixXd all(d.x.n(), d.x.p() + extra);
    std::vector<std::string> names = d.x.column_names;
    all.leftCols(d.x.p()) = d.x.values;
    Eigen::Index c = d.x.p();
    if (d.w) {
        all.middleCols(c, d.w->p()) = d.w->values;
        names.insert(names.end(), d.w->column_names.begin(), d.w->column_names.end());
        c += d.w->p();
    }
    all.col(c) = d.y;
    names.push_back(d.response_name);
    write_csv(DataMatrix(std::move(all), std::move(names)), path);
}

CleanResult clean_columns(const DataMatrix& x) {
    const Eigen::Index n = x.values.rows();
    std::vector<int> keep;
    std::vector<std::string> dropped;
    for (Eigen::Index c = 0; c < x.values.cols(); ++c) {
        const auto col = x.values.col(c);
        bool ok = col.allFinite();
        if (ok) {
            double mean = col.mean();
            double ss = (col.array() - mean).square().sum();
            ok = ss / static_cast<double>(n - 1) > 0.0;
        }
        if (ok)
            keep.push_back(static_cast<int>(c));
        else
            dropped.push_back(x.column_names[static_cast<std::size_t>(c)]);
    }
    if (keep.empty())
        throw std::invalid_argument("clean_columns: every column was dropped");

    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> names;
    names.reserve(keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = x.values.col(keep[c]);
        names.push_back(x.column_names[static_cast<std::size_t>(keep[c])]);
    }
    return {DataMatrix(std::move(out), std::move(names)), std::move(dropped)};
}

StandardizeResult standardize_columns(const DataMatrix& x) {
    const Eigen::Index n = x.values.rows();
    const Eigen::Index p = x.values.cols();
    StandardizeResult r;
    r.means.resize(p);
    r.sds.resize(p);
    Eigen::MatrixXd out(n, p);
    for (Eigen::Index c = 0; c < p; ++c) {
        double mean = x.values.col(c).mean();
        double ss = (x.values.col(c).array() - mean).square().sum();
        double var = ss / static_cast<double>(n - 1);
        if (!(var > 0.0))
            throw std::invalid_argument("standardize_columns: zero-variance column '" +
                                        x.column_names[static_cast<std::size_t>(c)] +
                                        "' (run clean_columns first)");
        double sd = std::sqrt(var);
        r.means[c] = mean;
        r.sds[c] = sd;
        out.col(c) = (x.values.col(c).array() - mean) / sd;
    }
    r.matrix = DataMatrix(std::move(out), x.column_names);
    return r;
}

}  // namespace kobt
