#pragma once

#include "triphase/table.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace triphase {

/// One subject-month at up to three phases of observation. Registry values
/// (the starred fields) are observed for everyone; chart values require the
/// subject's r1 = 1 and fully validated values require r2 = 1.
struct MonthlyRecord {
    int month = 0;

    double y_star = 0.0;
    double x1_star = 0.0;
    std::optional<double> x2_star;

    std::optional<double> y_tilde, x1_tilde, x2_tilde;
    std::optional<double> y_true, x1_true, x2_true;

    std::vector<double> x3;
    double offset = 1.0;

    bool operator==(const MonthlyRecord&) const = default;
};

struct SubjectRecord {
    std::string subject_id;
    std::vector<MonthlyRecord> records; // month-ascending, consecutive
    bool r1 = false;
    bool r2 = false;
    std::string stratum_p2, stratum_p3;

    bool operator==(const SubjectRecord&) const = default;
};

struct Cohort {
    std::vector<SubjectRecord> subjects;
    std::map<std::string, CategoricalDict> categorical; // "x1"/"x2" dictionaries
    std::vector<std::string> x3_names;

    int n1() const { return static_cast<int>(subjects.size()); }
    int n2() const;
    int n3() const;

    /// Checks the phase/consistency invariants of every subject.
    void validate() const;

    bool operator==(const Cohort&) const = default;
};

/// Trims every subject to the months covered by all phases the subject
/// participates in. Subjects with an empty intersection are dropped with a
/// logged warning.
Cohort intersect_followup(const Cohort& cohort);

/// Columnar conversion for the numeric routines. Column names:
/// month, y_star, x1_star, x2_star, y_tilde, x1_tilde, x2_tilde,
/// y_true, x1_true, x2_true, x3_1.., offset.
FlatTable flatten(const Cohort& cohort);
Cohort unflatten(const FlatTable& table);

} // namespace triphase
