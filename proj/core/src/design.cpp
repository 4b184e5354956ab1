#include "triphase/design.hpp"

#include "triphase/csv.hpp"
#include "triphase/errors.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace triphase {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void ThreePhaseDesign::validate(const FlatTable& t) const {
    const int n = t.n_subjects;
    if (pi1.size() != n || pi2.size() != n) throw ConfigError("design size mismatch");
    for (int i = 0; i < n; ++i) {
        if (!(pi1(i) > 0.0 && pi1(i) <= 1.0))
            throw ZeroSamplingProbability("subject " + t.ids[i] + ": pi1 out of (0,1]");
        if (t.r1[i]) {
            if (!(pi2(i) > 0.0 && pi2(i) <= 1.0))
                throw ZeroSamplingProbability("subject " + t.ids[i] + ": pi2 out of (0,1]");
            const double dd = d1(i) * d2(i);
            if (std::abs(d(i) - dd) > 1e-12 * std::abs(dd))
                throw ConfigError("d != d1*d2 for subject " + t.ids[i]);
        }
    }
}

ThreePhaseDesign design_from_counts(const FlatTable& t) {
    const int n = t.n_subjects;
    ThreePhaseDesign ds;
    ds.pi1.setConstant(n, kNaN);
    ds.pi2.setConstant(n, kNaN);

    // Phase 2: counts by stratum over the full cohort.
    std::map<std::string, std::pair<int, int>> p2; // stratum -> (size, sampled)
    for (int i = 0; i < n; ++i) {
        auto& c = p2[t.stratum_p2[i]];
        c.first += 1;
        c.second += t.r1[i] ? 1 : 0;
    }
    for (const auto& [name, c] : p2)
        if (c.second == 0)
            throw ZeroSamplingProbability("phase-2 stratum '" + name +
                                          "' has no sampled subject");
    for (int i = 0; i < n; ++i) {
        const auto& c = p2[t.stratum_p2[i]];
        ds.pi1(i) = static_cast<double>(c.second) / static_cast<double>(c.first);
    }

    // Phase 3: counts by stratum within the r1 = 1 subsample.
    std::map<std::string, std::pair<int, int>> p3;
    for (int i = 0; i < n; ++i) {
        if (!t.r1[i]) continue;
        auto& c = p3[t.stratum_p3[i]];
        c.first += 1;
        c.second += t.r2[i] ? 1 : 0;
    }
    for (const auto& [name, c] : p3)
        if (c.second == 0)
            throw ZeroSamplingProbability("phase-3 stratum '" + name +
                                          "' has no sampled subject");
    for (int i = 0; i < n; ++i) {
        if (!t.r1[i]) continue;
        const auto& c = p3[t.stratum_p3[i]];
        ds.pi2(i) = static_cast<double>(c.second) / static_cast<double>(c.first);
    }

    ds.d1 = ds.pi1.cwiseInverse();
    ds.d2 = ds.pi2.cwiseInverse();
    ds.d = ds.d1.cwiseProduct(ds.d2);
    ds.validate(t);
    return ds;
}

void apply_probability_overrides(ThreePhaseDesign& design, const FlatTable& t,
                                 const std::string& path) {
    const CsvTable csv = read_csv(path);
    const int c_id = csv.column("subject_id");
    const int c_p1 = csv.column("pi1");
    const int c_p2 = csv.column("pi2");
    if (c_id < 0 || c_p1 < 0 || c_p2 < 0)
        throw MissingColumn("override file needs subject_id, pi1, pi2 columns");

    std::map<std::string, int> index;
    for (int i = 0; i < t.n_subjects; ++i) index[t.ids[i]] = i;

    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const auto it = index.find(row[c_id]);
        if (it == index.end())
            throw SchemaError("override row " + std::to_string(r + 2) + ": unknown subject '" +
                              row[c_id] + "'");
        const int i = it->second;
        design.pi1(i) = parse_double(row[c_p1], "pi1 override");
        const auto p2 = parse_optional_double(row[c_p2], "pi2 override");
        if (p2) design.pi2(i) = *p2;
        else if (t.r1[i])
            throw SchemaError("override row " + std::to_string(r + 2) +
                              ": pi2 required for an r1=1 subject");
    }
    design.d1 = design.pi1.cwiseInverse();
    design.d2 = design.pi2.cwiseInverse();
    design.d = design.d1.cwiseProduct(design.d2);
    design.validate(t);
}

} // namespace triphase
