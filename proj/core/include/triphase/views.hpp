#pragma once

#include "triphase/model.hpp"
#include "triphase/table.hpp"

#include <vector>

namespace triphase {

enum class Phase { p1, p2, p3 };

/// Which analysis variables carry measurement error. An error-free variable
/// has no separate chart/validated copy: its registry (phase-1) value is the
/// truth at every phase.
struct VariableRoles {
    bool y_error_prone = true;
    bool x1_error_prone = true;
    bool x2_error_prone = true;

    bool error_prone(const std::string& var) const {
        if (var == "y") return y_error_prone;
        if (var == "x1") return x1_error_prone;
        if (var == "x2") return x2_error_prone;
        return false; // x3 covariates and offset are error-free by definition
    }
};

/// Maps the abstract analysis variables (y, x1, x2, x3_*, offset) to the
/// concrete columns observed at one phase.
ColumnResolver phase_resolver(const FlatTable& t, Phase phase, const VariableRoles& roles);

/// Rows visible at a phase: everyone at phase 1, the r1 = 1 subjects'
/// months at phase 2, the fully validated subjects' months at phase 3.
std::vector<int> phase_rows(const FlatTable& t, Phase phase);

/// Resolver over completed (imputed or observed) true-scale values, given
/// as full-length columns for the error-prone variables.
ColumnResolver completed_resolver(const FlatTable& t, const VariableRoles& roles,
                                  const Eigen::VectorXd* y_comp, const Eigen::VectorXd* x1_comp,
                                  const Eigen::VectorXd* x2_comp);

} // namespace triphase
