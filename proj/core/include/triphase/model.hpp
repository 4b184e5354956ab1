#pragma once

#include "triphase/table.hpp"

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace triphase {

enum class Family { poisson, binomial, multinomial, gaussian };
enum class Link { log_link, logit, identity };

/// One additive term of a linear predictor: the product of the listed
/// variables ("x1" or "x1:x2"). Categorical variables expand to level
/// indicator columns against the first (reference) level.
struct Term {
    std::vector<std::string> vars;
    std::string label() const;
};

/// Regression model: family, link, formula and optional offset column.
/// An intercept is always included.
struct ModelSpec {
    Family family = Family::binomial;
    Link link = Link::logit;
    std::string response;
    std::vector<Term> terms;
    std::string offset_col; // empty = no offset

    /// Parses "y ~ x1 + x2 + x1:x2". The left side names the response.
    static ModelSpec parse(Family family, const std::string& formula,
                           const std::string& offset_col = "");

    /// Enforces the family/link pairing and offset rules.
    void validate() const;

    static Family family_from_string(const std::string& s);
    static std::string family_to_string(Family f);
};

/// Resolves an abstract variable name to a numeric column and (optionally)
/// its category dictionary. Used to point the same formula at different
/// phases of observation or at completed (imputed) data.
struct ColumnRef {
    const Eigen::VectorXd* values = nullptr;
    const CategoricalDict* dict = nullptr; // non-null for categorical variables
};
using ColumnResolver = std::function<ColumnRef(const std::string&)>;

/// Materialized regression inputs for a row subset.
struct DesignData {
    Eigen::MatrixXd X;              // n x p, includes intercept column
    Eigen::VectorXd y;              // response (multinomial: level index 0..K-1)
    Eigen::VectorXd offset_log;     // log person-time; zero when no offset
    std::vector<int> rows;          // source table rows
    std::vector<int> cluster;       // per design row: subject index
    std::vector<std::string> colnames;
    int n_categories = 0;           // >0 for a multinomial response
    std::vector<int> category_codes;
    Family family = Family::binomial;
    Link link = Link::logit;
};

/// Builds the design matrix for `spec` over `row_ids`, resolving variables
/// through `resolve`. Throws MissingColumn for unresolvable names and
/// SchemaError for NaN cells in referenced variables.
DesignData build_design(const ModelSpec& spec, const std::vector<int>& row_ids,
                        const std::vector<int>& subj_of_row, const ColumnResolver& resolve);

/// Resolver over raw FlatTable column names (name -> same-named column).
ColumnResolver table_resolver(const FlatTable& t);

} // namespace triphase
