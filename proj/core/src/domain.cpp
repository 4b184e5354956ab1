#include "triphase/domain.hpp"

#include "triphase/errors.hpp"
#include "triphase/log.hpp"

#include <cmath>
#include <limits>

namespace triphase {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double opt_to_nan(const std::optional<double>& v) { return v ? *v : kNaN; }
std::optional<double> nan_to_opt(double v) {
    if (std::isnan(v)) return std::nullopt;
    return v;
}
} // namespace

int Cohort::n2() const {
    int n = 0;
    for (const auto& s : subjects) n += s.r1 ? 1 : 0;
    return n;
}

int Cohort::n3() const {
    int n = 0;
    for (const auto& s : subjects) n += (s.r1 && s.r2) ? 1 : 0;
    return n;
}

void Cohort::validate() const {
    for (const auto& s : subjects) {
        if (s.r2 && !s.r1)
            throw PhaseInconsistency("subject " + s.subject_id + " has r2=1 but r1=0");
        if (s.records.empty())
            throw PhaseInconsistency("subject " + s.subject_id + " has no months");
        int expect = s.records.front().month;
        for (const auto& m : s.records) {
            if (m.month != expect)
                throw MonthGap("subject " + s.subject_id + ": months not consecutive, gap at month " +
                               std::to_string(expect));
            ++expect;
            if (m.y_tilde.has_value() != s.r1 || m.x1_tilde.has_value() != s.r1 ||
                (m.x2_tilde.has_value() && !s.r1))
                throw PhaseInconsistency("subject " + s.subject_id + " month " +
                                         std::to_string(m.month) +
                                         ": chart values inconsistent with r1");
            const bool validated = s.r1 && s.r2;
            if (m.y_true.has_value() != validated || m.x1_true.has_value() != validated ||
                (m.x2_true.has_value() && !validated))
                throw PhaseInconsistency("subject " + s.subject_id + " month " +
                                         std::to_string(m.month) +
                                         ": validated values inconsistent with r2");
            if (!(m.offset > 0))
                throw NonPositiveOffset("subject " + s.subject_id + " month " +
                                        std::to_string(m.month) + ": offset must be positive");
        }
    }
}

Cohort intersect_followup(const Cohort& cohort) {
    Cohort out;
    out.categorical = cohort.categorical;
    out.x3_names = cohort.x3_names;
    int dropped = 0;
    for (const auto& s : cohort.subjects) {
        // Keep months observed by every phase the subject participates in.
        auto keep = [&](const MonthlyRecord& m) {
            if (s.r1 && !m.y_tilde.has_value()) return false;
            if (s.r1 && s.r2 && !m.y_true.has_value()) return false;
            return true;
        };
        SubjectRecord t = s;
        t.records.clear();
        for (const auto& m : s.records)
            if (keep(m)) t.records.push_back(m);
        if (t.records.empty()) {
            ++dropped;
            log_warn("subject " + s.subject_id + " dropped: empty follow-up intersection");
            continue;
        }
        out.subjects.push_back(std::move(t));
    }
    if (dropped > 0)
        log_warn(std::to_string(dropped) + " subject(s) dropped by follow-up intersection");
    out.validate();
    return out;
}

FlatTable flatten(const Cohort& cohort) {
    FlatTable t;
    t.categorical = cohort.categorical;
    t.x3_names = cohort.x3_names;
    t.n_subjects = cohort.n1();

    size_t rows = 0;
    for (const auto& s : cohort.subjects) rows += s.records.size();
    t.subj.reserve(rows);

    const size_t k3 = cohort.x3_names.size();
    std::vector<std::string> names = {"month",   "y_star",  "x1_star", "x2_star",
                                      "y_tilde", "x1_tilde", "x2_tilde", "y_true",
                                      "x1_true", "x2_true", "offset"};
    for (size_t j = 0; j < k3; ++j) names.push_back(cohort.x3_names[j]);
    for (const auto& n : names) t.cols[n] = Eigen::VectorXd::Constant(rows, kNaN);

    size_t r = 0;
    for (size_t si = 0; si < cohort.subjects.size(); ++si) {
        const auto& s = cohort.subjects[si];
        const int begin = static_cast<int>(r);
        for (const auto& m : s.records) {
            t.subj.push_back(static_cast<int>(si));
            t.cols["month"](r) = m.month;
            t.cols["y_star"](r) = m.y_star;
            t.cols["x1_star"](r) = m.x1_star;
            t.cols["x2_star"](r) = opt_to_nan(m.x2_star);
            t.cols["y_tilde"](r) = opt_to_nan(m.y_tilde);
            t.cols["x1_tilde"](r) = opt_to_nan(m.x1_tilde);
            t.cols["x2_tilde"](r) = opt_to_nan(m.x2_tilde);
            t.cols["y_true"](r) = opt_to_nan(m.y_true);
            t.cols["x1_true"](r) = opt_to_nan(m.x1_true);
            t.cols["x2_true"](r) = opt_to_nan(m.x2_true);
            t.cols["offset"](r) = m.offset;
            for (size_t j = 0; j < k3; ++j) t.cols[cohort.x3_names[j]](r) = m.x3[j];
            ++r;
        }
        t.subj_rows.emplace_back(begin, static_cast<int>(r));
        t.ids.push_back(s.subject_id);
        t.r1.push_back(s.r1 ? 1 : 0);
        t.r2.push_back(s.r2 ? 1 : 0);
        t.stratum_p2.push_back(s.stratum_p2);
        t.stratum_p3.push_back(s.stratum_p3);
    }
    t.validate_shape();
    return t;
}

Cohort unflatten(const FlatTable& t) {
    Cohort c;
    c.categorical = t.categorical;
    c.x3_names = t.x3_names;
    for (int si = 0; si < t.n_subjects; ++si) {
        SubjectRecord s;
        s.subject_id = t.ids[si];
        s.r1 = t.r1[si] != 0;
        s.r2 = t.r2[si] != 0;
        s.stratum_p2 = t.stratum_p2[si];
        s.stratum_p3 = t.stratum_p3[si];
        for (int r = t.subj_rows[si].first; r < t.subj_rows[si].second; ++r) {
            MonthlyRecord m;
            m.month = static_cast<int>(t.col("month")(r));
            m.y_star = t.col("y_star")(r);
            m.x1_star = t.col("x1_star")(r);
            m.x2_star = nan_to_opt(t.col("x2_star")(r));
            m.y_tilde = nan_to_opt(t.col("y_tilde")(r));
            m.x1_tilde = nan_to_opt(t.col("x1_tilde")(r));
            m.x2_tilde = nan_to_opt(t.col("x2_tilde")(r));
            m.y_true = nan_to_opt(t.col("y_true")(r));
            m.x1_true = nan_to_opt(t.col("x1_true")(r));
            m.x2_true = nan_to_opt(t.col("x2_true")(r));
            m.offset = t.col("offset")(r);
            for (const auto& n : t.x3_names) m.x3.push_back(t.col(n)(r));
            s.records.push_back(std::move(m));
        }
        c.subjects.push_back(std::move(s));
    }
    return c;
}

} // namespace triphase
