#include "triphase/domain_io.hpp"

#include "triphase/csv.hpp"
#include "triphase/errors.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace triphase {

namespace {

const char* kRequired[] = {"subject_id", "month",   "r1",      "r2",
                           "y_star",     "x1_star", "y_tilde", "x1_tilde",
                           "y_true",     "x1_true", "offset",  "stratum_p2",
                           "stratum_p3"};
const char* kOptional[] = {"x2_star", "x2_tilde", "x2_true"};

std::optional<double> read_binary(const std::string& cell, int row, const std::string& col) {
    if (cell.empty()) return std::nullopt;
    if (cell == "0") return 0.0;
    if (cell == "1") return 1.0;
    throw SchemaError("row " + std::to_string(row) + ": binary column " + col +
                      " must be 0, 1 or blank (got '" + cell + "')");
}

CategoricalDict parse_dict(const std::string& body) {
    CategoricalDict d;
    std::istringstream in(body);
    std::string pair;
    while (std::getline(in, pair, ';')) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) throw SchemaError("bad category entry '" + pair + "'");
        d.codes.push_back(static_cast<int>(parse_long(pair.substr(0, eq), "category code")));
        d.labels.push_back(pair.substr(eq + 1));
    }
    if (d.codes.empty()) throw SchemaError("empty category dictionary");
    return d;
}

} // namespace

Cohort ingest(const std::string& path, const IngestSchema& schema) {
    const CsvTable t = read_csv(path);

    Cohort cohort;
    for (const auto& m : t.meta) {
        std::istringstream in(m);
        std::string kind;
        in >> kind;
        if (kind == "categorical") {
            std::string var, body;
            in >> var >> body;
            if (var != "x1" && var != "x2")
                throw SchemaError("categorical metadata supports x1/x2 only, got '" + var + "'");
            cohort.categorical[var] = parse_dict(body);
        }
        // Unknown metadata lines are ignored so files stay forward-compatible.
    }

    std::map<std::string, int> idx;
    for (const char* name : kRequired) {
        const int j = t.column(schema.col(name));
        if (j < 0) throw MissingColumn("missing required column '" + schema.col(name) + "'");
        idx[name] = j;
    }
    for (const char* name : kOptional) idx[name] = t.column(schema.col(name));
    for (size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j].rfind("x3_", 0) == 0) cohort.x3_names.push_back(t.header[j]);
    std::vector<int> x3_idx;
    for (const auto& n : cohort.x3_names) x3_idx.push_back(t.column(n));

    auto cell = [&](const std::vector<std::string>& row, const char* name) -> const std::string& {
        static const std::string empty;
        const int j = idx.at(name);
        if (j < 0 || j >= static_cast<int>(row.size())) return empty;
        return row[j];
    };

    std::map<std::string, int> subject_slot;
    std::vector<std::string> r_violations;

    for (size_t ri = 0; ri < t.rows.size(); ++ri) {
        const auto& row = t.rows[ri];
        const int file_row = static_cast<int>(ri) + 2; // 1-based, after header
        const std::string ctx = "row " + std::to_string(file_row);

        const std::string& sid = cell(row, "subject_id");
        if (sid.empty()) throw SchemaError(ctx + ": empty subject_id");

        auto [it, inserted] = subject_slot.try_emplace(sid, static_cast<int>(cohort.subjects.size()));
        if (inserted) {
            SubjectRecord s;
            s.subject_id = sid;
            const auto r1v = read_binary(cell(row, "r1"), file_row, "r1");
            const auto r2v = read_binary(cell(row, "r2"), file_row, "r2");
            if (!r1v || !r2v) throw SchemaError(ctx + ": r1/r2 must not be blank");
            s.r1 = *r1v == 1.0;
            s.r2 = *r2v == 1.0;
            s.stratum_p2 = cell(row, "stratum_p2");
            s.stratum_p3 = cell(row, "stratum_p3");
            cohort.subjects.push_back(std::move(s));
        }
        SubjectRecord& s = cohort.subjects[it->second];

        {
            const auto r1v = read_binary(cell(row, "r1"), file_row, "r1");
            const auto r2v = read_binary(cell(row, "r2"), file_row, "r2");
            if (!r1v || !r2v || (*r1v == 1.0) != s.r1 || (*r2v == 1.0) != s.r2)
                r_violations.push_back(ctx + ": r1/r2 differ from the subject's other rows");
        }
        if (s.r2 && !s.r1) r_violations.push_back(ctx + ": r2=1 requires r1=1");

        MonthlyRecord m;
        m.month = static_cast<int>(parse_long(cell(row, "month"), ctx + " month"));
        if (m.month < 1) throw SchemaError(ctx + ": month must be >= 1");
        if (!s.records.empty() && m.month != s.records.back().month + 1)
            throw MonthGap("subject " + sid + ": months not consecutive, gap at month " +
                           std::to_string(s.records.back().month + 1) + " (" + ctx + ")");

        const auto ys = read_binary(cell(row, "y_star"), file_row, "y_star");
        if (!ys) throw SchemaError(ctx + ": y_star must not be blank");
        m.y_star = *ys;
        const std::string& x1s = cell(row, "x1_star");
        if (x1s.empty()) throw SchemaError(ctx + ": x1_star must not be blank");
        m.x1_star = parse_double(x1s, ctx + " x1_star");
        m.x2_star = parse_optional_double(cell(row, "x2_star"), ctx + " x2_star");

        m.y_tilde = read_binary(cell(row, "y_tilde"), file_row, "y_tilde");
        m.x1_tilde = parse_optional_double(cell(row, "x1_tilde"), ctx + " x1_tilde");
        m.x2_tilde = parse_optional_double(cell(row, "x2_tilde"), ctx + " x2_tilde");
        m.y_true = read_binary(cell(row, "y_true"), file_row, "y_true");
        m.x1_true = parse_optional_double(cell(row, "x1_true"), ctx + " x1_true");
        m.x2_true = parse_optional_double(cell(row, "x2_true"), ctx + " x2_true");

        if (!s.r1 && (m.y_tilde || m.x1_tilde || m.x2_tilde))
            r_violations.push_back(ctx + ": chart value present but r1=0");
        if (!(s.r1 && s.r2) && (m.y_true || m.x1_true || m.x2_true))
            r_violations.push_back(ctx + ": validated value present but r2=0");

        const std::string& off = cell(row, "offset");
        if (off.empty()) throw NonPositiveOffset(ctx + ": offset must not be blank");
        m.offset = parse_double(off, ctx + " offset");
        if (!(m.offset > 0)) throw NonPositiveOffset(ctx + ": offset must be positive");

        m.x3.resize(x3_idx.size());
        for (size_t j = 0; j < x3_idx.size(); ++j) {
            const std::string& v = row.size() > static_cast<size_t>(x3_idx[j])
                                       ? row[x3_idx[j]]
                                       : std::string();
            if (v.empty()) throw SchemaError(ctx + ": " + cohort.x3_names[j] + " must not be blank");
            m.x3[j] = parse_double(v, ctx + " x3");
        }
        s.records.push_back(std::move(m));
    }

    if (!r_violations.empty()) {
        std::string msg = "phase-consistency violations:";
        const size_t cap = std::min<size_t>(r_violations.size(), 20);
        for (size_t i = 0; i < cap; ++i) msg += "\n  " + r_violations[i];
        if (r_violations.size() > cap)
            msg += "\n  ... and " + std::to_string(r_violations.size() - cap) + " more";
        throw PhaseInconsistency(msg);
    }
    if (cohort.subjects.empty()) throw SchemaError("no data rows in " + path);
    return cohort;
}

void export_cohort(const Cohort& cohort, const std::string& path) {
    std::string out;
    for (const auto& [var, dict] : cohort.categorical) {
        out += "#% categorical " + var + " ";
        for (size_t i = 0; i < dict.codes.size(); ++i) {
            if (i) out.push_back(';');
            out += std::to_string(dict.codes[i]) + "=" + dict.labels[i];
        }
        out.push_back('\n');
    }
    std::vector<std::string> header = {"subject_id", "month",   "r1",       "r2",
                                       "y_star",     "x1_star", "x2_star",  "y_tilde",
                                       "x1_tilde",   "x2_tilde", "y_true",  "x1_true",
                                       "x2_true"};
    for (const auto& n : cohort.x3_names) header.push_back(n);
    header.insert(header.end(), {"offset", "stratum_p2", "stratum_p3"});
    out += join_csv(header);
    out.push_back('\n');

    auto fmt_opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const auto& s : cohort.subjects) {
        for (const auto& m : s.records) {
            std::vector<std::string> row = {s.subject_id,
                                            std::to_string(m.month),
                                            s.r1 ? "1" : "0",
                                            s.r2 ? "1" : "0",
                                            format_double(m.y_star),
                                            format_double(m.x1_star),
                                            fmt_opt(m.x2_star),
                                            fmt_opt(m.y_tilde),
                                            fmt_opt(m.x1_tilde),
                                            fmt_opt(m.x2_tilde),
                                            fmt_opt(m.y_true),
                                            fmt_opt(m.x1_true),
                                            fmt_opt(m.x2_true)};
            for (double v : m.x3) row.push_back(format_double(v));
            row.push_back(format_double(m.offset));
            row.push_back(s.stratum_p2);
            row.push_back(s.stratum_p3);
            out += join_csv(row);
            out.push_back('\n');
        }
    }
    write_text_atomic(path, out);
}

} // namespace triphase
