#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace triphase {

/// Category dictionary for a coded variable. The same dictionary applies to
/// every phase copy of the variable (x1_star, x1_tilde, x1_true share "x1").
struct CategoricalDict {
    std::vector<int> codes;           // ordered; first code is the reference level
    std::vector<std::string> labels;  // parallel to codes

    int index_of(int code) const {
        for (size_t i = 0; i < codes.size(); ++i)
            if (codes[i] == code) return static_cast<int>(i);
        return -1;
    }
};

/// Columnar subject-month table used by all numeric routines. One row per
/// subject-month; rows of a subject are contiguous and month-ordered.
/// Missing numeric cells are NaN.
struct FlatTable {
    // Row-level data.
    std::vector<int> subj;                       // row -> subject index
    std::map<std::string, Eigen::VectorXd> cols; // named numeric columns

    // Subject-level data.
    int n_subjects = 0;
    std::vector<std::pair<int, int>> subj_rows;  // subject -> [begin, end) row range
    std::vector<std::string> ids;
    std::vector<std::uint8_t> r1, r2;
    std::vector<std::string> stratum_p2, stratum_p3;

    // Variable metadata.
    std::map<std::string, CategoricalDict> categorical; // base name ("x1") -> dict
    std::vector<std::string> x3_names;

    Eigen::Index rows() const { return static_cast<Eigen::Index>(subj.size()); }

    const Eigen::VectorXd& col(const std::string& name) const;
    Eigen::VectorXd& add_col(const std::string& name);
    bool has_col(const std::string& name) const { return cols.count(name) > 0; }

    /// Index of the previous/next month row within the same subject, or -1.
    /// Valid because months within a subject are consecutive.
    std::vector<int> prev_row() const;
    std::vector<int> next_row() const;

    /// All rows belonging to subjects for which keep[subject] != 0.
    std::vector<int> rows_where_subject(const std::vector<std::uint8_t>& keep) const;
    std::vector<int> all_rows() const;

    void validate_shape() const; // internal consistency checks
};

} // namespace triphase
