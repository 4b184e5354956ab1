#include "triphase/mi.hpp"

#include "triphase/domain.hpp"
#include "triphase/errors.hpp"

#include <cmath>
#include <limits>

namespace triphase {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct VarInfo {
    std::string base;        // "y", "x1", "x2"
    bool present = false;    // registry column exists with data
    bool has_chart = false;  // chart column exists
    bool imputed = false;    // error-prone: true values need imputation
    const CategoricalDict* dict = nullptr;
    double fill = 0.0;       // boundary fill (reference code for categoricals)
};

} // namespace

/// Shared imputation frame. Neighbor-month values become their own columns
/// so one pooled model covers all months; boundary months keep zeroed
/// neighbor columns with has_prev/has_next indicators.
struct MiEngine::Impl {
    const FlatTable& t;
    MiOptions opts;
    FlatTable frame; // frame columns only; shares subject structure with t
    std::vector<int> prev, next;
    VarInfo y, x1, x2;

    std::vector<int> rows_r2, rows_r1, rows_r1_not_r2, rows_not_r1, rows_not_r2;

    Impl(const FlatTable& table, const MiOptions& options) : t(table), opts(options) {
        prev = t.prev_row();
        next = t.next_row();

        y.base = "y";
        x1.base = "x1";
        x2.base = "x2";
        init_var(y, opts.roles.y_error_prone);
        init_var(x1, opts.roles.x1_error_prone);
        init_var(x2, opts.roles.x2_error_prone);
        if (!y.present || !x1.present) throw SchemaError("cohort lacks y_star/x1_star data");

        frame.subj = t.subj;
        frame.n_subjects = t.n_subjects;
        frame.subj_rows = t.subj_rows;
        frame.ids = t.ids;
        frame.r1 = t.r1;
        frame.r2 = t.r2;
        frame.stratum_p2 = t.stratum_p2;
        frame.stratum_p3 = t.stratum_p3;
        frame.x3_names = t.x3_names;

        const Eigen::Index n = t.rows();
        Eigen::VectorXd has_prev(n), has_next(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            has_prev(i) = prev[i] >= 0 ? 1.0 : 0.0;
            has_next(i) = next[i] >= 0 ? 1.0 : 0.0;
        }
        frame.cols["has_prev"] = std::move(has_prev);
        frame.cols["has_next"] = std::move(has_next);

        for (VarInfo* v : {&y, &x1, &x2}) {
            if (!v->present) continue;
            add_triple(v->base + "s", t.col(v->base + "_star"), *v);
            if (v->has_chart && v->imputed)
                add_triple(v->base + "t", t.col(v->base + "_tilde"), *v);
        }
        for (const auto& name : t.x3_names) frame.cols[name] = t.col(name);

        // Placeholders refreshed during fitting/imputation.
        for (const char* name : {"yc_p", "yc_0", "yc_n", "x1c_p", "x1c_0", "x1c_n",
                                 "resp_y", "resp_x1", "resp_x2"})
            frame.cols[name] = Eigen::VectorXd::Constant(n, kNaN);
        attach_dict("yc_p", y);
        attach_dict("yc_0", y);
        attach_dict("yc_n", y);
        attach_dict("x1c_p", x1);
        attach_dict("x1c_0", x1);
        attach_dict("x1c_n", x1);
        attach_dict("resp_x1", x1);
        attach_dict("resp_x2", x2);

        std::vector<std::uint8_t> m_r2(t.n_subjects), m_r1(t.n_subjects), m_r1n2(t.n_subjects),
            m_n1(t.n_subjects), m_n2(t.n_subjects);
        for (int i = 0; i < t.n_subjects; ++i) {
            const bool a = t.r1[i], b = t.r2[i];
            m_r2[i] = (a && b) ? 1 : 0;
            m_r1[i] = a ? 1 : 0;
            m_r1n2[i] = (a && !b) ? 1 : 0;
            m_n1[i] = a ? 0 : 1;
            m_n2[i] = (a && b) ? 0 : 1;
        }
        rows_r2 = t.rows_where_subject(m_r2);
        rows_r1 = t.rows_where_subject(m_r1);
        rows_r1_not_r2 = t.rows_where_subject(m_r1n2);
        rows_not_r1 = t.rows_where_subject(m_n1);
        rows_not_r2 = t.rows_where_subject(m_n2);
    }

    void init_var(VarInfo& v, bool error_prone) {
        const std::string star = v.base + "_star";
        v.present = t.has_col(star) && t.col(star).array().isFinite().any();
        if (!v.present) return;
        v.has_chart = t.has_col(v.base + "_tilde") && t.col(v.base + "_tilde").array().isFinite().any();
        v.imputed = error_prone;
        auto it = t.categorical.find(v.base);
        if (it != t.categorical.end()) {
            v.dict = &it->second;
            v.fill = it->second.codes.front();
        }
    }

    void attach_dict(const std::string& col, const VarInfo& v) {
        if (v.dict) frame.categorical[col] = *v.dict;
    }

    void add_triple(const std::string& base, const Eigen::VectorXd& src, const VarInfo& v) {
        const Eigen::Index n = t.rows();
        Eigen::VectorXd c0(n), cp(n), cn(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            c0(i) = src(i);
            cp(i) = prev[i] >= 0 ? src(prev[i]) : v.fill;
            cn(i) = next[i] >= 0 ? src(next[i]) : v.fill;
        }
        frame.cols[base + "_0"] = std::move(c0);
        frame.cols[base + "_p"] = std::move(cp);
        frame.cols[base + "_n"] = std::move(cn);
        attach_dict(base + "_0", v);
        attach_dict(base + "_p", v);
        attach_dict(base + "_n", v);
    }

    void refresh_triple(const std::string& base, const Eigen::VectorXd& values, double fill) {
        auto& c0 = frame.cols[base + "_0"];
        auto& cp = frame.cols[base + "_p"];
        auto& cn = frame.cols[base + "_n"];
        const Eigen::Index n = t.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            c0(i) = values(i);
            cp(i) = prev[i] >= 0 ? values(prev[i]) : fill;
            cn(i) = next[i] >= 0 ? values(next[i]) : fill;
        }
    }

    // Predictor term lists: registry triples + optional chart triples + x3.
    std::vector<Term> base_terms(bool tilde) const {
        std::vector<Term> terms;
        auto add = [&terms](const std::string& name) { terms.push_back(Term{{name}}); };
        add("has_prev");
        add("has_next");
        for (const VarInfo* v : {&y, &x1, &x2}) {
            if (!v->present) continue;
            add(v->base + "s_p");
            add(v->base + "s_0");
            add(v->base + "s_n");
        }
        if (tilde) {
            for (const VarInfo* v : {&y, &x1, &x2}) {
                if (!v->present || !v->has_chart || !v->imputed) continue;
                add(v->base + "t_p");
                add(v->base + "t_0");
                add(v->base + "t_n");
            }
        }
        for (const auto& n3 : t.x3_names) add(n3);
        return terms;
    }

    std::vector<Term> fy_terms(bool tilde) const { return base_terms(tilde); }

    std::vector<Term> gx1_terms(bool tilde) const {
        auto terms = base_terms(tilde);
        for (const char* nm : {"yc_p", "yc_0", "yc_n"}) terms.push_back(Term{{nm}});
        return terms;
    }

    std::vector<Term> gx2_terms(bool tilde) const {
        auto terms = gx1_terms(tilde);
        for (const char* nm : {"x1c_p", "x1c_0", "x1c_n"}) terms.push_back(Term{{nm}});
        return terms;
    }

    static ImpModelKind kind_for(const VarInfo& v, bool binary) {
        if (binary) return ImpModelKind::logistic;
        return v.dict ? ImpModelKind::multinomial : ImpModelKind::linear;
    }

    ImputationModel fit_model(const std::string& resp_col, ImpModelKind kind,
                              std::vector<Term> terms, const std::vector<int>& fit_rows) {
        if (fit_rows.empty()) throw SchemaError("imputation fitting subset is empty");
        ImputationModel m;
        m.kind = kind;
        m.response = resp_col;
        m.terms = std::move(terms);
        ModelSpec spec;
        spec.family = kind == ImpModelKind::logistic      ? Family::binomial
                      : kind == ImpModelKind::multinomial ? Family::multinomial
                                                          : Family::gaussian;
        spec.link = kind == ImpModelKind::logistic      ? Link::logit
                    : kind == ImpModelKind::multinomial ? Link::logit
                                                        : Link::identity;
        spec.response = m.response;
        spec.terms = m.terms;
        DesignData dd = build_design(spec, fit_rows, frame.subj, table_resolver(frame));
        FitOptions fo;
        fo.ridge = opts.ridge;
        m.fit = fit_glm(dd, Eigen::VectorXd::Ones(dd.X.rows()), fo);
        return m;
    }

    /// Imputation responses for a stage: observed true values (first stage)
    /// or the current completed values (registry stage).
    void set_responses_from_true() {
        auto copy_col = [&](const std::string& dst, const std::string& src, bool present) {
            if (!present) return;
            frame.cols[dst] = t.col(src);
        };
        copy_col("resp_y", "y_true", y.present);
        copy_col("resp_x1", "x1_true", x1.present);
        copy_col("resp_x2", "x2_true", x2.present && x2.imputed);
    }

    void set_responses_from_completed(const CompletedData& c) {
        frame.cols["resp_y"] = c.y;
        frame.cols["resp_x1"] = c.x1;
        if (x2.present && x2.imputed) frame.cols["resp_x2"] = c.x2;
    }

    ImputationModelSet fit_stage_models(StageTag stage) {
        ImputationModelSet set;
        set.stage = stage;
        const bool tilde = stage == StageTag::p3_to_p2;
        const auto& fit_rows = (stage == StageTag::p2_to_p1) ? rows_r1 : rows_r2;
        if (y.imputed)
            set.f_y = fit_model("resp_y", ImpModelKind::logistic, fy_terms(tilde), fit_rows);
        if (x1.imputed)
            set.g_x1 = fit_model("resp_x1", kind_for(x1, false), gx1_terms(tilde), fit_rows);
        if (x2.present && x2.imputed)
            set.g_x2 = fit_model("resp_x2", kind_for(x2, false), gx2_terms(tilde), fit_rows);
        return set;
    }

    Eigen::VectorXd draw_params(const ImputationModel& m, SplitRng& rng) const {
        const Eigen::Index p = m.fit.beta.size();
        if (opts.param_draw_scale == 0.0) return m.fit.beta;
        Eigen::MatrixXd v = m.fit.vcov_model;
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) {
            v.diagonal().array() += 1e-10 * (1.0 + v.diagonal().maxCoeff());
            llt.compute(v);
            if (llt.info() != Eigen::Success)
                throw SingularBread("imputation-model covariance not factorizable");
        }
        Eigen::VectorXd z(p);
        for (Eigen::Index j = 0; j < p; ++j) z(j) = rng.normal();
        const Eigen::VectorXd step = llt.matrixL() * z;
        return m.fit.beta + opts.param_draw_scale * step;
    }

    /// Draws one value per target row from the model's predictive
    /// distribution under drawn parameters, writing into `out`.
    void impute_variable(const ImputationModel& m, const std::vector<int>& target_rows,
                         Eigen::VectorXd& out, std::vector<std::uint8_t>& prov,
                         std::uint8_t stage_flag, SplitRng& rng) {
        if (target_rows.empty()) return;
        const Eigen::VectorXd theta = draw_params(m, rng);

        // Placeholder response values so the design builder sees no NaN.
        {
            auto& resp = frame.cols[m.response];
            const double fill = (m.response == "resp_x1")   ? x1.fill
                                : (m.response == "resp_x2") ? x2.fill
                                                            : 0.0;
            for (int r : target_rows)
                if (std::isnan(resp(r))) resp(r) = fill;
        }
        ModelSpec spec;
        spec.family = m.kind == ImpModelKind::logistic      ? Family::binomial
                      : m.kind == ImpModelKind::multinomial ? Family::multinomial
                                                            : Family::gaussian;
        spec.link = m.kind == ImpModelKind::linear ? Link::identity : Link::logit;
        spec.response = m.response;
        spec.terms = m.terms;
        DesignData dd = build_design(spec, target_rows, frame.subj, table_resolver(frame));

        const double sigma = std::sqrt(std::max(0.0, m.fit.sigma2));
        const int K = m.fit.n_categories;
        const Eigen::Index p = dd.X.cols();
        for (Eigen::Index k = 0; k < dd.X.rows(); ++k) {
            const int row = target_rows[static_cast<size_t>(k)];
            double value = 0.0;
            switch (m.kind) {
                case ImpModelKind::logistic: {
                    const double pr = sigmoid(dd.X.row(k).dot(theta));
                    value = rng.bernoulli(pr) ? 1.0 : 0.0;
                    break;
                }
                case ImpModelKind::linear: {
                    value = dd.X.row(k).dot(theta) + sigma * rng.normal();
                    break;
                }
                case ImpModelKind::multinomial: {
                    // Baseline-category probabilities from K-1 stacked blocks.
                    Eigen::VectorXd eta(K);
                    eta(0) = 0.0;
                    double emax = 0.0;
                    for (int q = 1; q < K; ++q) {
                        eta(q) = dd.X.row(k).dot(theta.segment((q - 1) * p, p));
                        emax = std::max(emax, eta(q));
                    }
                    double denom = 0.0;
                    for (int q = 0; q < K; ++q) denom += std::exp(eta(q) - emax);
                    double u = rng.uniform() * denom;
                    int pick = K - 1;
                    for (int q = 0; q < K; ++q) {
                        u -= std::exp(eta(q) - emax);
                        if (u <= 0) {
                            pick = q;
                            break;
                        }
                    }
                    value = dd.category_codes[pick];
                    break;
                }
            }
            out(row) = value;
            prov[row] = stage_flag;
        }
    }

    CompletedData init_completed() const {
        const Eigen::Index n = t.rows();
        CompletedData c;
        c.prov_y.assign(n, 0);
        c.prov_x1.assign(n, 0);
        c.prov_x2.assign(n, 0);
        auto fill_var = [&](const VarInfo& v, Eigen::VectorXd& dst) {
            if (!v.present) {
                dst = Eigen::VectorXd::Constant(n, kNaN);
                return;
            }
            if (!v.imputed) {
                dst = t.col(v.base + "_star"); // error-free: registry value is the truth
                return;
            }
            dst = Eigen::VectorXd::Constant(n, kNaN);
            const auto& tru = t.col(v.base + "_true");
            for (Eigen::Index i = 0; i < n; ++i)
                if (!std::isnan(tru(i))) dst(i) = tru(i);
        };
        fill_var(y, c.y);
        fill_var(x1, c.x1);
        fill_var(x2, c.x2);
        return c;
    }

    /// Imputes one stage for the target rows, refreshing the cascade
    /// columns between the y, x1 and x2 models.
    void impute_stage(const ImputationModelSet& models, const std::vector<int>& targets,
                      CompletedData& c, std::uint8_t flag, SplitRng& rng) {
        refresh_triple("yc", c.y, y.fill);
        if (models.f_y) impute_variable(*models.f_y, targets, c.y, c.prov_y, flag, rng);
        refresh_triple("yc", c.y, y.fill);
        if (models.g_x1) {
            impute_variable(*models.g_x1, targets, c.x1, c.prov_x1, flag, rng);
        }
        refresh_triple("x1c", c.x1, x1.fill);
        if (models.g_x2) impute_variable(*models.g_x2, targets, c.x2, c.prov_x2, flag, rng);
    }

    CompletedData impute_once(const ImputationModelSet& first, SplitRng rng) {
        CompletedData c = init_completed();
        if (opts.mode == MiMode::two_phase) {
            if (first.stage != StageTag::p3_to_p1)
                throw ConfigError("two-phase imputation expects p3_to_p1 models");
            SplitRng r1s = rng.child(1);
            impute_stage(first, rows_not_r2, c, 2, r1s);
            return c;
        }
        if (first.stage != StageTag::p3_to_p2)
            throw ConfigError("three-phase imputation expects p3_to_p2 first-stage models");
        SplitRng s1 = rng.child(1);
        impute_stage(first, rows_r1_not_r2, c, 1, s1);

        // Registry stage, refit on the completed phase-2 data.
        set_responses_from_completed(c);
        refresh_triple("yc", c.y, y.fill);
        refresh_triple("x1c", c.x1, x1.fill);
        ImputationModelSet second = fit_stage_models(StageTag::p2_to_p1);
        SplitRng s2 = rng.child(2);
        impute_stage(second, rows_not_r1, c, 2, s2);
        return c;
    }
};

MiEngine::MiEngine(const FlatTable& t, const MiOptions& opts)
    : impl_(std::make_unique<Impl>(t, opts)), opts_(opts) {}
MiEngine::~MiEngine() = default;
MiEngine::MiEngine(MiEngine&&) noexcept = default;

ImputationModelSet MiEngine::fit_first_stage() {
    impl_->set_responses_from_true();
    const CompletedData init = impl_->init_completed();
    impl_->refresh_triple("yc", init.y, impl_->y.fill);
    impl_->refresh_triple("x1c", init.x1, impl_->x1.fill);
    const StageTag tag =
        opts_.mode == MiMode::two_phase ? StageTag::p3_to_p1 : StageTag::p3_to_p2;
    return impl_->fit_stage_models(tag);
}

ImputationModelSet MiEngine::fit_registry_stage(const CompletedData& completed) {
    impl_->set_responses_from_completed(completed);
    impl_->refresh_triple("yc", completed.y, impl_->y.fill);
    impl_->refresh_triple("x1c", completed.x1, impl_->x1.fill);
    return impl_->fit_stage_models(StageTag::p2_to_p1);
}

CompletedData MiEngine::impute_once(const ImputationModelSet& first_stage, std::uint64_t seed) {
    return impl_->impute_once(first_stage, SplitRng(seed));
}

ImputationModelSet fit_stage(const FlatTable& t, StageTag stage, const MiOptions& opts,
                             const CompletedData* completed_chart) {
    MiOptions o = opts;
    o.mode = (stage == StageTag::p3_to_p1) ? MiMode::two_phase : MiMode::three_phase;
    MiEngine eng(t, o);
    if (stage == StageTag::p2_to_p1) {
        if (completed_chart == nullptr)
            throw ConfigError("p2_to_p1 models are fit against completed phase-2 data; "
                              "provide the completed values");
        return eng.fit_registry_stage(*completed_chart);
    }
    return eng.fit_first_stage();
}

namespace {

/// Analysis refit on one completed dataset; returns fit + per-subject data.
struct CompletedFit {
    FitResult fit;
    Eigen::MatrixXd infl;  // n_subjects x p
    Eigen::MatrixXd vcov;  // cluster sandwich
};

CompletedFit analysis_on_completed(const FlatTable& t, const ModelSpec& analysis,
                                   const VariableRoles& roles, const CompletedData& c,
                                   const std::vector<int>& rows,
                                   const Eigen::VectorXd* subject_weights) {
    const bool x2imp = roles.x2_error_prone && c.x2.allFinite();
    ColumnResolver resolver =
        completed_resolver(t, roles, &c.y, &c.x1, x2imp ? &c.x2 : nullptr);
    DesignData dd = build_design(analysis, rows, t.subj, resolver);
    Eigen::VectorXd w(dd.X.rows());
    if (subject_weights) {
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = (*subject_weights)(dd.cluster[i]);
    } else {
        w.setOnes();
    }
    CompletedFit out;
    out.fit = fit_glm(dd, w);
    ClusterVectors scores = cluster_scores(dd, out.fit, w, /*weighted=*/true);
    out.vcov = sandwich(out.fit, scores.m);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(out.fit.info);
    Eigen::MatrixXd infl = ldlt.solve(scores.m.transpose()).transpose();
    out.infl = Eigen::MatrixXd::Zero(t.n_subjects, infl.cols());
    for (size_t k = 0; k < scores.ids.size(); ++k)
        out.infl.row(scores.ids[k]) = infl.row(static_cast<Eigen::Index>(k));
    return out;
}

} // namespace

MiArtifacts mi_pass(const FlatTable& t, const ModelSpec& analysis, const MiOptions& opts,
                    bool keep_datasets, bool compute_aux, const ThreePhaseDesign* design) {
    if (opts.B < 2) throw ConfigError("multiple imputation requires B >= 2");
    if (analysis.family != Family::poisson && analysis.family != Family::binomial)
        throw ConfigError("analysis model must be poisson or binomial");

    MiEngine engine(t, opts);
    ImputationModelSet first = engine.fit_first_stage();

    const bool three = opts.mode == MiMode::three_phase;
    const bool chart_aux = compute_aux && three && design != nullptr;

    Eigen::VectorXd d1_weights;
    std::vector<int> rows_r1;
    if (chart_aux) {
        d1_weights = Eigen::VectorXd::Zero(t.n_subjects);
        for (int i = 0; i < t.n_subjects; ++i)
            if (t.r1[i]) d1_weights(i) = design->d1(i);
        std::vector<std::uint8_t> m(t.r1.begin(), t.r1.end());
        rows_r1 = t.rows_where_subject(m);
    }
    const std::vector<int> all_rows = t.all_rows();

    MiArtifacts art;
    art.imputed.B = opts.B;
    art.imputed.mode = opts.mode;

    std::vector<Eigen::VectorXd> betas;
    std::vector<std::string> analysis_colnames;
    Eigen::MatrixXd wbar, aux_emr, aux_chart;
    const SplitRng root(opts.seed);
    for (int b = 0; b < opts.B; ++b) {
        const std::uint64_t seed_b = root.child(static_cast<std::uint64_t>(b) + 1).key();
        CompletedData comp = engine.impute_once(first, seed_b);

        CompletedFit full = analysis_on_completed(t, analysis, opts.roles, comp, all_rows, nullptr);
        if (betas.empty()) {
            analysis_colnames = full.fit.colnames;
            wbar = Eigen::MatrixXd::Zero(full.vcov.rows(), full.vcov.cols());
            aux_emr = Eigen::MatrixXd::Zero(full.infl.rows(), full.infl.cols());
            if (chart_aux) aux_chart = Eigen::MatrixXd::Zero(full.infl.rows(), full.infl.cols());
        }
        betas.push_back(full.fit.beta);
        wbar += full.vcov;
        if (compute_aux) aux_emr += full.infl;

        if (chart_aux) {
            CompletedFit chart =
                analysis_on_completed(t, analysis, opts.roles, comp, rows_r1, &d1_weights);
            aux_chart += chart.infl;
        }
        if (keep_datasets) art.imputed.datasets.push_back(std::move(comp));
    }

    const int B = opts.B;
    const Eigen::Index p = betas.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    for (const auto& b : betas) mean += b;
    mean /= B;
    Eigen::MatrixXd between = Eigen::MatrixXd::Zero(p, p);
    for (const auto& b : betas) between += (b - mean) * (b - mean).transpose();
    between /= std::max(1, B - 1);
    wbar /= B;
    const Eigen::MatrixXd total = wbar + (1.0 + 1.0 / B) * between;

    EstimateReport rep;
    rep.method = three ? "mi3" : "mi2";
    rep.coef_names = analysis_colnames;
    rep.beta = mean;
    rep.vcov = total;
    rep.se.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) rep.se(j) = std::sqrt(std::max(0.0, total(j, j)));
    rep.ci_lo = rep.beta - 1.96 * rep.se;
    rep.ci_hi = rep.beta + 1.96 * rep.se;
    rep.irr_scale = (analysis.family == Family::poisson);
    rep.diag.B = B;
    rep.diag.converged = true;
    art.report = std::move(rep);
    if (compute_aux) {
        aux_emr /= B;
        art.aux_emr = std::move(aux_emr);
        if (chart_aux) {
            aux_chart /= B;
            art.aux_chart = std::move(aux_chart);
        }
    }
    return art;
}

MiResult mi_estimate(const FlatTable& t, const ModelSpec& analysis, const MiOptions& opts) {
    MiArtifacts art = mi_pass(t, analysis, opts, /*keep_datasets=*/true,
                              /*compute_aux=*/false, nullptr);
    return MiResult{std::move(art.report), std::move(art.imputed)};
}

MiResult mi_estimate(const Cohort& c, const ModelSpec& analysis, const MiOptions& opts) {
    return mi_estimate(flatten(c), analysis, opts);
}

EstimateReport raking_with_aux(const FlatTable& t, const ThreePhaseDesign& design,
                               const ModelSpec& spec, const EstimatorOptions& opts,
                               const Eigen::MatrixXd& aux_emr, const Eigen::MatrixXd* aux_chart,
                               int B_used) {
    EstimatorOptions o = opts;
    o.aux1_override = &aux_emr;
    EstimateReport rep;
    if (aux_chart != nullptr && aux_chart->size() > 0) {
        o.aux2_override = aux_chart;
        rep = three_phase_raking(t, design, spec, o);
        rep.method = "gr3_mi";
    } else {
        rep = two_phase_raking(t, design, spec, o);
        rep.method = "gr2_mi";
    }
    rep.diag.B = B_used;
    return rep;
}

EstimateReport raking_with_mi(const FlatTable& t, const ThreePhaseDesign& design,
                              const ModelSpec& spec, const ImputedCohort& imputed,
                              const EstimatorOptions& opts) {
    if (imputed.B < 1 || imputed.datasets.empty())
        throw ConfigError("raking_with_mi requires retained imputed datasets");
    const Eigen::Index n = t.rows();
    for (const auto& d : imputed.datasets) {
        if (d.y.size() != n || d.x1.size() != n)
            throw ImputationSetMismatch("completed dataset does not match the cohort rows");
        if (d.prov_y != imputed.datasets.front().prov_y)
            throw ImputationSetMismatch("imputed datasets disagree on which cells were imputed");
    }

    const bool three = imputed.mode == MiMode::three_phase;
    Eigen::VectorXd d1_weights;
    std::vector<int> rows_r1;
    if (three) {
        d1_weights = Eigen::VectorXd::Zero(t.n_subjects);
        for (int i = 0; i < t.n_subjects; ++i)
            if (t.r1[i]) d1_weights(i) = design.d1(i);
        std::vector<std::uint8_t> m(t.r1.begin(), t.r1.end());
        rows_r1 = t.rows_where_subject(m);
    }
    const std::vector<int> all_rows = t.all_rows();

    Eigen::MatrixXd aux_emr, aux_chart;
    for (const auto& comp : imputed.datasets) {
        CompletedFit full = analysis_on_completed(t, spec, opts.roles, comp, all_rows, nullptr);
        if (aux_emr.size() == 0) aux_emr = Eigen::MatrixXd::Zero(full.infl.rows(), full.infl.cols());
        aux_emr += full.infl;
        if (three) {
            CompletedFit chart =
                analysis_on_completed(t, spec, opts.roles, comp, rows_r1, &d1_weights);
            if (aux_chart.size() == 0)
                aux_chart = Eigen::MatrixXd::Zero(chart.infl.rows(), chart.infl.cols());
            aux_chart += chart.infl;
        }
    }
    const int B = static_cast<int>(imputed.datasets.size());
    aux_emr /= B;
    if (three) aux_chart /= B;
    return raking_with_aux(t, design, spec, opts, aux_emr, three ? &aux_chart : nullptr, B);
}

EstimateReport raking_with_mi(const Cohort& c, const ThreePhaseDesign& design,
                              const ModelSpec& spec, const ImputedCohort& imputed,
                              const EstimatorOptions& opts) {
    return raking_with_mi(flatten(c), design, spec, imputed, opts);
}

} // namespace triphase
