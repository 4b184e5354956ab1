#pragma once

#include "triphase/estimators.hpp"
#include "triphase/glm.hpp"
#include "triphase/rng.hpp"
#include "triphase/views.hpp"

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

namespace triphase {

enum class MiMode { two_phase, three_phase };

/// Imputation stages. p3_to_p2 fits on the fully validated subjects with
/// registry and chart predictors; p2_to_p1 fits on the chart-completed
/// phase-2 subjects with registry predictors only. p3_to_p1 is the
/// two-phase variant that skips the chart data entirely.
enum class StageTag { p3_to_p2, p2_to_p1, p3_to_p1 };

struct MiOptions {
    int B = 50;
    MiMode mode = MiMode::three_phase;
    std::uint64_t seed = 0;
    double ridge = 1e-6;           // imputation-model stabilizer only
    double param_draw_scale = 1.0; // 0 fixes drawn parameters at the estimates
    VariableRoles roles;
};

enum class ImpModelKind { logistic, multinomial, linear };

struct ImputationModel {
    ImpModelKind kind = ImpModelKind::logistic;
    std::string response;
    std::vector<Term> terms;
    FitResult fit;

    std::vector<std::string> predictor_names() const {
        std::vector<std::string> out;
        for (const auto& t : terms) out.push_back(t.label());
        return out;
    }
};

struct ImputationModelSet {
    StageTag stage = StageTag::p3_to_p2;
    std::optional<ImputationModel> f_y, g_x1, g_x2;
};

/// True-scale values for every subject-month, observed or imputed.
/// Provenance: 0 observed, 1 imputed at the chart stage, 2 imputed at the
/// registry stage.
struct CompletedData {
    Eigen::VectorXd y, x1, x2;
    std::vector<std::uint8_t> prov_y, prov_x1, prov_x2;
};

struct ImputedCohort {
    int B = 0;
    MiMode mode = MiMode::three_phase;
    std::vector<CompletedData> datasets;
};

/// Engine holding the shared imputation frame (neighbor-month predictor
/// columns). Imputation models are fit per stage; stage p2_to_p1 is refit
/// inside every imputation because its responses include stage-1 draws.
class MiEngine {
public:
    MiEngine(const FlatTable& t, const MiOptions& opts);
    ~MiEngine();
    MiEngine(MiEngine&&) noexcept;

    /// Fits the first-stage models (p3_to_p2, or p3_to_p1 in two-phase mode).
    ImputationModelSet fit_first_stage();

    /// Fits the registry-stage (p2_to_p1) models against completed phase-2
    /// values. Called once per imputation since the responses include
    /// stage-1 draws.
    ImputationModelSet fit_registry_stage(const CompletedData& completed);

    /// Draws parameters and completes one dataset: stage 1 fills the
    /// chart-reviewed, non-interviewed subjects; stage 2 refits on the
    /// completed phase-2 data and fills the registry-only subjects.
    CompletedData impute_once(const ImputationModelSet& first_stage, std::uint64_t seed);

    const MiOptions& options() const { return opts_; }

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
    MiOptions opts_;
};

/// Stage fit per the cascade contracts. p2_to_p1 requires completed
/// phase-2 values (it is refit per imputation inside the engine).
ImputationModelSet fit_stage(const FlatTable& t, StageTag stage, const MiOptions& opts,
                             const CompletedData* completed_chart = nullptr);

struct MiResult {
    EstimateReport report;
    ImputedCohort imputed;
};

/// Sequential multiple imputation estimate: B completed datasets, the
/// analysis model fit on each, estimates averaged and variance combined by
/// Rubin's rules (within + (1+1/B) between).
MiResult mi_estimate(const FlatTable& t, const ModelSpec& analysis, const MiOptions& opts);
MiResult mi_estimate(const Cohort& c, const ModelSpec& analysis, const MiOptions& opts);

/// Internal streaming pass shared by mi_estimate, the raking+MI auxiliaries
/// and the Monte Carlo harness: runs the B imputations once and returns the
/// pooled report plus averaged influence auxiliaries.
struct MiArtifacts {
    EstimateReport report;
    Eigen::MatrixXd aux_emr;   // n_subjects x p averaged completed-data influences
    Eigen::MatrixXd aux_chart; // empty unless three-phase with a design
    ImputedCohort imputed;     // retained only when keep_datasets
};
MiArtifacts mi_pass(const FlatTable& t, const ModelSpec& analysis, const MiOptions& opts,
                    bool keep_datasets, bool compute_aux, const ThreePhaseDesign* design);

/// Generalized raking with multiply imputed auxiliaries: refits the
/// analysis model on each completed dataset, averages the per-subject
/// influence functions over the B imputations and uses the averages as the
/// calibration auxiliaries of the matching raking estimator.
EstimateReport raking_with_mi(const FlatTable& t, const ThreePhaseDesign& design,
                              const ModelSpec& spec, const ImputedCohort& imputed,
                              const EstimatorOptions& opts = {});
EstimateReport raking_with_mi(const Cohort& c, const ThreePhaseDesign& design,
                              const ModelSpec& spec, const ImputedCohort& imputed,
                              const EstimatorOptions& opts = {});

/// Raking with precomputed averaged auxiliaries (the streaming path).
EstimateReport raking_with_aux(const FlatTable& t, const ThreePhaseDesign& design,
                               const ModelSpec& spec, const EstimatorOptions& opts,
                               const Eigen::MatrixXd& aux_emr, const Eigen::MatrixXd* aux_chart,
                               int B_used);

} // namespace triphase
