#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace kobt {

/// Dense numeric design matrix with named columns. All entries are finite;
/// shape is n rows x p columns with n >= 2, p >= 1 and unique names.
/// Immutable by convention once built, so it can be shared across threads.
struct DataMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;

    DataMatrix() = default;
    DataMatrix(Eigen::MatrixXd v, std::vector<std::string> names);

    Eigen::Index n() const { return values.rows(); }
    Eigen::Index p() const { return values.cols(); }

    int column_index(const std::string& name) const;  // -1 when absent

    /// Throws std::invalid_argument on any shape/name/finiteness violation.
    void validate() const;
};

enum class Task { regression, binary_classification };

/// One modelling problem: design matrix, response, optional covariates to
/// retain outside the selection.
struct Dataset {
    DataMatrix x;
    Eigen::VectorXd y;
    std::optional<DataMatrix> w;
    Task task = Task::regression;
    std::string response_name = "y";

    void validate() const;
};

/// Reads a CSV of decimal/scientific numerics. `response_column` is a header
/// name, or a 0-based column index when there is no header (or when no header
/// cell matches). Parse failures report 1-based row and column.
Dataset load_csv(const std::string& path, bool has_header,
                 const std::string& response_column,
                 const std::vector<std::string>& covariate_columns = {});

/// Reads every column as a feature (no response extraction).
DataMatrix load_csv_matrix(const std::string& path, bool has_header);

/// Writes values at 17 significant digits so load_csv round-trips doubles
/// bit-identically.
void write_csv(const DataMatrix& m, const std::string& path);
void write_dataset_csv(const Dataset& d, const std::string& path);

struct CleanResult {
    DataMatrix matrix;
    std::vector<std::string> dropped;
};

/// Drops columns with any non-finite entry or zero sample variance.
/// Idempotent; throws when nothing survives.
CleanResult clean_columns(const DataMatrix& x);

struct StandardizeResult {
    DataMatrix matrix;
    Eigen::VectorXd means;
    Eigen::VectorXd sds;  // sample sd (n-1 denominator)
};

/// Centers and scales every column to mean 0, sd 1. Requires positive
/// variance everywhere (run clean_columns first).
StandardizeResult standardize_columns(const DataMatrix& x);

}  // namespace kobt
