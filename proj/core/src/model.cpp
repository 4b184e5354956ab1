#include "triphase/model.hpp"

#include "triphase/errors.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace triphase {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

std::string Term::label() const {
    std::string s;
    for (size_t i = 0; i < vars.size(); ++i) {
        if (i) s.push_back(':');
        s += vars[i];
    }
    return s;
}

ModelSpec ModelSpec::parse(Family family, const std::string& formula, const std::string& offset_col) {
    ModelSpec spec;
    spec.family = family;
    switch (family) {
        case Family::poisson: spec.link = Link::log_link; break;
        case Family::binomial:
        case Family::multinomial: spec.link = Link::logit; break;
        case Family::gaussian: spec.link = Link::identity; break;
    }
    spec.offset_col = offset_col;

    const auto tilde = formula.find('~');
    if (tilde == std::string::npos)
        throw ConfigError("formula must contain '~': " + formula);
    spec.response = trim(formula.substr(0, tilde));
    if (spec.response.empty()) throw ConfigError("formula has empty response: " + formula);

    for (const auto& piece : split(formula.substr(tilde + 1), '+')) {
        if (piece.empty() || piece == "1") continue; // intercept is implicit
        Term t;
        for (const auto& v : split(piece, ':')) {
            if (v.empty()) throw ConfigError("empty variable in term '" + piece + "'");
            t.vars.push_back(v);
        }
        spec.terms.push_back(std::move(t));
    }
    spec.validate();
    return spec;
}

void ModelSpec::validate() const {
    const bool ok = (family == Family::poisson && link == Link::log_link) ||
                    (family == Family::binomial && link == Link::logit) ||
                    (family == Family::multinomial && link == Link::logit) ||
                    (family == Family::gaussian && link == Link::identity);
    if (!ok) throw ConfigError("unsupported family/link pairing");
    if (!offset_col.empty() && family != Family::poisson)
        throw ConfigError("offset is only supported for the poisson family");
}

Family ModelSpec::family_from_string(const std::string& s) {
    if (s == "poisson") return Family::poisson;
    if (s == "binomial") return Family::binomial;
    if (s == "multinomial") return Family::multinomial;
    if (s == "gaussian") return Family::gaussian;
    throw ConfigError("unknown family '" + s + "'");
}

std::string ModelSpec::family_to_string(Family f) {
    switch (f) {
        case Family::poisson: return "poisson";
        case Family::binomial: return "binomial";
        case Family::multinomial: return "multinomial";
        case Family::gaussian: return "gaussian";
    }
    return "?";
}

namespace {

// Expansion of one variable: one numeric column, or K-1 level indicators.
struct Expanded {
    std::vector<Eigen::VectorXd> cols;
    std::vector<std::string> names;
};

Expanded expand_variable(const std::string& var, const std::vector<int>& row_ids,
                         const ColumnResolver& resolve) {
    const ColumnRef ref = resolve(var);
    if (ref.values == nullptr) throw MissingColumn("cannot resolve variable '" + var + "'");
    const auto n = static_cast<Eigen::Index>(row_ids.size());
    Expanded ex;
    if (ref.dict == nullptr) {
        Eigen::VectorXd c(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = (*ref.values)(row_ids[i]);
            if (std::isnan(v))
                throw SchemaError("missing value for '" + var + "' at table row " +
                                  std::to_string(row_ids[i]));
            c(i) = v;
        }
        ex.cols.push_back(std::move(c));
        ex.names.push_back(var);
    } else {
        const auto& dict = *ref.dict;
        const int k = static_cast<int>(dict.codes.size());
        std::vector<Eigen::VectorXd> dummies(std::max(0, k - 1), Eigen::VectorXd::Zero(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = (*ref.values)(row_ids[i]);
            if (std::isnan(v))
                throw SchemaError("missing value for '" + var + "' at table row " +
                                  std::to_string(row_ids[i]));
            const int idx = dict.index_of(static_cast<int>(v));
            if (idx < 0)
                throw SchemaError("code " + std::to_string(static_cast<int>(v)) +
                                  " of '" + var + "' not in its category dictionary");
            if (idx > 0) dummies[idx - 1](i) = 1.0;
        }
        for (int j = 1; j < k; ++j) {
            ex.cols.push_back(std::move(dummies[j - 1]));
            ex.names.push_back(var + "=" + dict.labels[j]);
        }
    }
    return ex;
}

} // namespace

DesignData build_design(const ModelSpec& spec, const std::vector<int>& row_ids,
                        const std::vector<int>& subj_of_row, const ColumnResolver& resolve) {
    spec.validate();
    DesignData dd;
    dd.family = spec.family;
    dd.link = spec.link;
    dd.rows = row_ids;
    const auto n = static_cast<Eigen::Index>(row_ids.size());

    dd.cluster.resize(row_ids.size());
    for (size_t i = 0; i < row_ids.size(); ++i) dd.cluster[i] = subj_of_row[row_ids[i]];

    // Intercept plus expanded terms.
    std::vector<Eigen::VectorXd> xcols;
    xcols.push_back(Eigen::VectorXd::Ones(n));
    dd.colnames.push_back("(intercept)");
    for (const auto& term : spec.terms) {
        std::vector<Eigen::VectorXd> acc{Eigen::VectorXd::Ones(n)};
        std::vector<std::string> acc_names{""};
        for (const auto& var : term.vars) {
            Expanded ex = expand_variable(var, row_ids, resolve);
            std::vector<Eigen::VectorXd> nxt;
            std::vector<std::string> nxt_names;
            for (size_t a = 0; a < acc.size(); ++a) {
                for (size_t b = 0; b < ex.cols.size(); ++b) {
                    nxt.push_back(acc[a].cwiseProduct(ex.cols[b]));
                    nxt_names.push_back(acc_names[a].empty() ? ex.names[b]
                                                             : acc_names[a] + ":" + ex.names[b]);
                }
            }
            acc = std::move(nxt);
            acc_names = std::move(nxt_names);
        }
        for (size_t a = 0; a < acc.size(); ++a) {
            xcols.push_back(std::move(acc[a]));
            dd.colnames.push_back(acc_names[a]);
        }
    }

    dd.X.resize(n, static_cast<Eigen::Index>(xcols.size()));
    for (size_t j = 0; j < xcols.size(); ++j) dd.X.col(static_cast<Eigen::Index>(j)) = xcols[j];

    // Response.
    const ColumnRef yref = resolve(spec.response);
    if (yref.values == nullptr) throw MissingColumn("cannot resolve response '" + spec.response + "'");
    dd.y.resize(n);
    if (spec.family == Family::multinomial) {
        if (yref.dict == nullptr)
            throw ConfigError("multinomial response '" + spec.response + "' must be categorical");
        dd.n_categories = static_cast<int>(yref.dict->codes.size());
        dd.category_codes = yref.dict->codes;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = (*yref.values)(row_ids[i]);
            if (std::isnan(v)) throw SchemaError("missing response at row " + std::to_string(row_ids[i]));
            const int idx = yref.dict->index_of(static_cast<int>(v));
            if (idx < 0) throw SchemaError("response code not in dictionary");
            dd.y(i) = idx;
        }
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = (*yref.values)(row_ids[i]);
            if (std::isnan(v)) throw SchemaError("missing response at row " + std::to_string(row_ids[i]));
            dd.y(i) = v;
        }
    }

    // Offset.
    dd.offset_log = Eigen::VectorXd::Zero(n);
    if (!spec.offset_col.empty()) {
        const ColumnRef oref = resolve(spec.offset_col);
        if (oref.values == nullptr)
            throw MissingColumn("cannot resolve offset '" + spec.offset_col + "'");
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = (*oref.values)(row_ids[i]);
            if (std::isnan(v) || !(v > 0.0))
                throw NonPositiveOffset("offset must be positive at row " + std::to_string(row_ids[i]));
            dd.offset_log(i) = std::log(v);
        }
    }
    return dd;
}

ColumnResolver table_resolver(const FlatTable& t) {
    return [&t](const std::string& name) -> ColumnRef {
        ColumnRef ref;
        auto it = t.cols.find(name);
        if (it == t.cols.end()) return ref;
        ref.values = &it->second;
        auto dit = t.categorical.find(name);
        if (dit != t.categorical.end()) ref.dict = &dit->second;
        return ref;
    };
}

} // namespace triphase
