#pragma once

#include "triphase/calibration.hpp"
#include "triphase/design.hpp"
#include "triphase/domain.hpp"
#include "triphase/glm.hpp"
#include "triphase/views.hpp"

#include <Eigen/Dense>
#include <optional>
#include <string>

namespace triphase {

struct ReportDiagnostics {
    bool converged = true;
    int fit_iterations = 0;
    int cal_iterations = 0;
    double cal_residual1 = 0.0, cal_residual2 = 0.0;
    double g1_min = 1.0, g1_max = 1.0, g2_min = 1.0, g2_max = 1.0;
    int B = 0;
};

/// Point estimates with a robust variance. ci95 = beta +- 1.96 se; for a
/// Poisson log model the exponentiated coefficients are incidence rate
/// ratios.
struct EstimateReport {
    std::string method;
    std::vector<std::string> coef_names;
    Eigen::VectorXd beta, se, ci_lo, ci_hi;
    Eigen::MatrixXd vcov;
    bool irr_scale = false;
    ReportDiagnostics diag;
};

struct EstimatorOptions {
    Distance distance = Distance::poisson_deviance;
    VariableRoles roles;
    /// Replaces the influence-function auxiliaries (one row per subject,
    /// influence coordinates only; the count constraint is added inside).
    const Eigen::MatrixXd* aux1_override = nullptr;
    const Eigen::MatrixXd* aux2_override = nullptr;
};

/// Weighted regression on the fully validated subsample with weights
/// 1/(pi1*pi2); variance from the sandwich over per-subject contributions.
EstimateReport ipw(const FlatTable& t, const ThreePhaseDesign& design, const ModelSpec& spec,
                   const EstimatorOptions& opts = {});

/// Calibrates the combined design weight against full-cohort totals of the
/// phase-1 influence functions, then solves the weighted score equations on
/// the validated subsample. Variance by linearization.
EstimateReport two_phase_raking(const FlatTable& t, const ThreePhaseDesign& design,
                                const ModelSpec& spec, const EstimatorOptions& opts = {});

/// Calibrates d1 (phase-1 influences) and d2 (phase-2 influences from an
/// IPW fit of the chart data) separately and estimates with weight w1*w2.
EstimateReport three_phase_raking(const FlatTable& t, const ThreePhaseDesign& design,
                                  const ModelSpec& spec, const EstimatorOptions& opts = {});

/// Per-subject influence proxies used as raking auxiliaries: the inverse
/// information times each subject's (unweighted) score sum. Rows align with
/// subject indices; rows outside the phase are zero.
struct PhaseInfluence {
    FitResult fit;
    Eigen::MatrixXd infl; // n_subjects x p
};
PhaseInfluence phase_influence(const FlatTable& t, const ModelSpec& spec,
                               const VariableRoles& roles, Phase phase,
                               const Eigen::VectorXd* subject_weights);

/// Convenience overloads on the domain type.
EstimateReport ipw(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                   const EstimatorOptions& o = {});
EstimateReport two_phase_raking(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                                const EstimatorOptions& o = {});
EstimateReport three_phase_raking(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                                  const EstimatorOptions& o = {});

} // namespace triphase
