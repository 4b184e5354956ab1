#include "triphase/estimators.hpp"

#include "triphase/errors.hpp"

#include <cmath>

namespace triphase {

namespace {

EstimateReport make_report(std::string method, const FitResult& fit,
                           const Eigen::MatrixXd& vcov, const ModelSpec& spec) {
    EstimateReport rep;
    rep.method = std::move(method);
    rep.coef_names = fit.colnames;
    rep.beta = fit.beta;
    rep.vcov = vcov;
    const Eigen::Index p = fit.beta.size();
    rep.se.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) rep.se(j) = std::sqrt(std::max(0.0, vcov(j, j)));
    rep.ci_lo = rep.beta - 1.96 * rep.se;
    rep.ci_hi = rep.beta + 1.96 * rep.se;
    rep.irr_scale = (spec.family == Family::poisson);
    rep.diag.converged = fit.converged;
    rep.diag.fit_iterations = fit.iterations;
    return rep;
}

void check_analysis_family(const ModelSpec& spec) {
    if (spec.family != Family::poisson && spec.family != Family::binomial)
        throw ConfigError("analysis model must be poisson or binomial");
}

Eigen::VectorXd row_weights(const DesignData& dd, const Eigen::VectorXd& subject_w) {
    Eigen::VectorXd w(dd.X.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = subject_w(dd.cluster[i]);
    return w;
}

/// Spreads per-cluster vectors into a subject-indexed matrix (zero rows for
/// absent subjects).
Eigen::MatrixXd scatter(const ClusterVectors& cv, int n_subjects) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_subjects, cv.m.cols());
    for (size_t k = 0; k < cv.ids.size(); ++k) m.row(cv.ids[k]) = cv.m.row(static_cast<int>(k));
    return m;
}

/// Prepends the count-constraint column (constant one) to influence
/// auxiliaries, so calibrated weights also reproduce the sample size.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& aux) {
    Eigen::MatrixXd out(aux.rows(), aux.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(aux.cols()) = aux;
    return out;
}

Eigen::MatrixXd solve_gamma(const Eigen::MatrixXd& cross, const Eigen::MatrixXd& gram) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14))
        throw SingularBread("auxiliary Gram matrix numerically singular in the linearization");
    return ldlt.solve(cross.transpose()).transpose();
}

} // namespace

PhaseInfluence phase_influence(const FlatTable& t, const ModelSpec& spec,
                               const VariableRoles& roles, Phase phase,
                               const Eigen::VectorXd* subject_weights) {
    const auto rows = phase_rows(t, phase);
    DesignData dd = build_design(spec, rows, t.subj, phase_resolver(t, phase, roles));
    Eigen::VectorXd w = subject_weights ? row_weights(dd, *subject_weights)
                                        : Eigen::VectorXd::Ones(dd.X.rows());
    PhaseInfluence out;
    out.fit = fit_glm(dd, w);
    // Auxiliary proxy: common bread, unweighted per-subject score.
    const ClusterVectors cv = influence(dd, out.fit, w, /*weighted=*/false);
    out.infl = scatter(cv, t.n_subjects);
    return out;
}

EstimateReport ipw(const FlatTable& t, const ThreePhaseDesign& design, const ModelSpec& spec,
                   const EstimatorOptions& opts) {
    check_analysis_family(spec);
    const auto rows = phase_rows(t, Phase::p3);
    DesignData dd = build_design(spec, rows, t.subj, phase_resolver(t, Phase::p3, opts.roles));

    Eigen::VectorXd subject_w = Eigen::VectorXd::Zero(t.n_subjects);
    int n_validated = 0;
    for (int i = 0; i < t.n_subjects; ++i)
        if (t.r1[i] && t.r2[i]) {
            subject_w(i) = design.d(i);
            ++n_validated;
        }
    if (n_validated < dd.X.cols() + 1)
        throw RankDeficient("too few fully validated subjects for the model");

    const Eigen::VectorXd w = row_weights(dd, subject_w);
    FitResult fit = fit_glm(dd, w);
    const ClusterVectors contribs = cluster_scores(dd, fit, w, /*weighted=*/true);
    const Eigen::MatrixXd vcov = sandwich(fit, contribs.m);
    return make_report("ipw", fit, vcov, spec);
}

namespace {

/// Shared body of the raking estimators. `aux1` must span every subject;
/// `aux2` (three-phase only) spans the r1 = 1 subjects.
EstimateReport raking_core(const FlatTable& t, const ThreePhaseDesign& design,
                           const ModelSpec& spec, const EstimatorOptions& opts,
                           const Eigen::MatrixXd& aux1_infl,
                           const Eigen::MatrixXd* aux2_infl, const std::string& method) {
    check_analysis_family(spec);
    const int n = t.n_subjects;
    const bool three_phase = aux2_infl != nullptr;

    const Eigen::MatrixXd aux1 = with_intercept(aux1_infl);
    Eigen::MatrixXd aux2;
    if (three_phase) aux2 = with_intercept(*aux2_infl);

    Eigen::VectorXd w_subject = Eigen::VectorXd::Zero(n);
    ReportDiagnostics diag;

    if (three_phase) {
        auto [w1, w2] = three_phase_calibrate(design, t, aux1, aux2, opts.distance);
        Eigen::VectorXd w1_full = Eigen::VectorXd::Zero(n), w2_full = Eigen::VectorXd::Zero(n);
        for (size_t k = 0; k < w1.units.size(); ++k) w1_full(w1.units[k]) = w1.w(k);
        for (size_t k = 0; k < w2.units.size(); ++k) w2_full(w2.units[k]) = w2.w(k);
        for (int i = 0; i < n; ++i)
            if (t.r1[i] && t.r2[i]) w_subject(i) = w1_full(i) * w2_full(i);
        diag.cal_iterations = w1.iterations + w2.iterations;
        diag.cal_residual1 = w1.residual;
        diag.cal_residual2 = w2.residual;
        diag.g1_min = w1.g.minCoeff();
        diag.g1_max = w1.g.maxCoeff();
        diag.g2_min = w2.g.minCoeff();
        diag.g2_max = w2.g.maxCoeff();
    } else {
        std::vector<std::uint8_t> R(n, 0);
        for (int i = 0; i < n; ++i) R[i] = (t.r1[i] && t.r2[i]) ? 1 : 0;
        Eigen::VectorXd d_full = Eigen::VectorXd::Ones(n);
        for (int i = 0; i < n; ++i)
            if (R[i]) d_full(i) = design.d(i);
        const Eigen::VectorXd totals = aux1.colwise().sum();
        CalibratedWeights cal = calibrate(d_full, R, aux1, totals, opts.distance);
        for (size_t k = 0; k < cal.units.size(); ++k) w_subject(cal.units[k]) = cal.w(k);
        diag.cal_iterations = cal.iterations;
        diag.cal_residual1 = cal.residual;
        diag.g1_min = cal.g.minCoeff();
        diag.g1_max = cal.g.maxCoeff();
    }

    // Weighted score equations on the validated subsample.
    const auto rows = phase_rows(t, Phase::p3);
    DesignData dd = build_design(spec, rows, t.subj, phase_resolver(t, Phase::p3, opts.roles));
    const Eigen::VectorXd w = row_weights(dd, w_subject);
    FitResult fit = fit_glm(dd, w);

    // Linearization: per-subject contributions with the calibration
    // residualized against the auxiliaries.
    const ClusterVectors s_cv = cluster_scores(dd, fit, w, /*weighted=*/false);
    const Eigen::MatrixXd s = scatter(s_cv, n); // unweighted validated scores
    const Eigen::Index p = fit.beta.size();

    Eigen::MatrixXd psi(n, p);
    if (!three_phase) {
        const Eigen::Index q = aux1.cols();
        Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p, q);
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
        for (int i = 0; i < n; ++i) {
            if (!(t.r1[i] && t.r2[i])) continue;
            const double di = design.d(i);
            cross += di * s.row(i).transpose() * aux1.row(i);
            gram += di * aux1.row(i).transpose() * aux1.row(i);
        }
        const Eigen::MatrixXd gamma = solve_gamma(cross, gram);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd ga = gamma * aux1.row(i).transpose();
            if (t.r1[i] && t.r2[i])
                psi.row(i) = (design.d(i) * (s.row(i).transpose() - ga) + ga).transpose();
            else
                psi.row(i) = ga.transpose();
        }
    } else {
        const Eigen::Index q1 = aux1.cols(), q2 = aux2.cols();
        Eigen::MatrixXd cross1 = Eigen::MatrixXd::Zero(p, q1), gram1 = Eigen::MatrixXd::Zero(q1, q1);
        Eigen::MatrixXd cross2 = Eigen::MatrixXd::Zero(p, q2), gram2 = Eigen::MatrixXd::Zero(q2, q2);
        for (int i = 0; i < n; ++i) {
            if (t.r1[i]) gram1 += design.d1(i) * aux1.row(i).transpose() * aux1.row(i);
            if (t.r1[i] && t.r2[i]) {
                cross1 += design.d(i) * s.row(i).transpose() * aux1.row(i);
                cross2 += design.d(i) * s.row(i).transpose() * aux2.row(i);
                gram2 += design.d2(i) * aux2.row(i).transpose() * aux2.row(i);
            }
        }
        const Eigen::MatrixXd gamma1 = solve_gamma(cross1, gram1);
        const Eigen::MatrixXd gamma2 = solve_gamma(cross2, gram2);
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
            const double r1 = t.r1[i] ? 1.0 : 0.0;
            const double r = (t.r1[i] && t.r2[i]) ? 1.0 : 0.0;
            if (r > 0) v += design.d(i) * s.row(i).transpose();
            v -= gamma1 * ((r1 * design.d1(i)) - 1.0) * aux1.row(i).transpose();
            if (r1 > 0) v -= gamma2 * (r * design.d2(i) - 1.0) * aux2.row(i).transpose();
            psi.row(i) = v.transpose();
        }
    }

    const Eigen::MatrixXd vcov = sandwich(fit, psi);
    EstimateReport rep = make_report(method, fit, vcov, spec);
    rep.diag = diag;
    rep.diag.converged = fit.converged;
    rep.diag.fit_iterations = fit.iterations;
    return rep;
}

} // namespace

EstimateReport two_phase_raking(const FlatTable& t, const ThreePhaseDesign& design,
                                const ModelSpec& spec, const EstimatorOptions& opts) {
    Eigen::MatrixXd aux1;
    if (opts.aux1_override) {
        aux1 = *opts.aux1_override;
    } else {
        aux1 = phase_influence(t, spec, opts.roles, Phase::p1, nullptr).infl;
    }
    return raking_core(t, design, spec, opts, aux1, nullptr, "gr2");
}

EstimateReport three_phase_raking(const FlatTable& t, const ThreePhaseDesign& design,
                                  const ModelSpec& spec, const EstimatorOptions& opts) {
    Eigen::MatrixXd aux1, aux2;
    if (opts.aux1_override) {
        aux1 = *opts.aux1_override;
    } else {
        aux1 = phase_influence(t, spec, opts.roles, Phase::p1, nullptr).infl;
    }
    if (opts.aux2_override) {
        aux2 = *opts.aux2_override;
    } else {
        // Chart-data fit accounts for phase-2 sampling via IPW with d1.
        Eigen::VectorXd d1 = Eigen::VectorXd::Zero(t.n_subjects);
        for (int i = 0; i < t.n_subjects; ++i)
            if (t.r1[i]) d1(i) = design.d1(i);
        aux2 = phase_influence(t, spec, opts.roles, Phase::p2, &d1).infl;
    }
    return raking_core(t, design, spec, opts, aux1, &aux2, "gr3");
}

EstimateReport ipw(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                   const EstimatorOptions& o) {
    return ipw(flatten(c), d, s, o);
}
EstimateReport two_phase_raking(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                                const EstimatorOptions& o) {
    return two_phase_raking(flatten(c), d, s, o);
}
EstimateReport three_phase_raking(const Cohort& c, const ThreePhaseDesign& d, const ModelSpec& s,
                                  const EstimatorOptions& o) {
    return three_phase_raking(flatten(c), d, s, o);
}

} // namespace triphase
