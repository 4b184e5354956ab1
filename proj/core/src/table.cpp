#include "triphase/table.hpp"

#include "triphase/errors.hpp"

#include <numeric>

namespace triphase {

const Eigen::VectorXd& FlatTable::col(const std::string& name) const {
    auto it = cols.find(name);
    if (it == cols.end()) throw MissingColumn("no column '" + name + "'");
    return it->second;
}

Eigen::VectorXd& FlatTable::add_col(const std::string& name) {
    auto& c = cols[name];
    c = Eigen::VectorXd::Constant(rows(), std::numeric_limits<double>::quiet_NaN());
    return c;
}

std::vector<int> FlatTable::prev_row() const {
    std::vector<int> prev(subj.size(), -1);
    for (size_t i = 1; i < subj.size(); ++i)
        if (subj[i] == subj[i - 1]) prev[i] = static_cast<int>(i - 1);
    return prev;
}

std::vector<int> FlatTable::next_row() const {
    std::vector<int> next(subj.size(), -1);
    for (size_t i = 0; i + 1 < subj.size(); ++i)
        if (subj[i] == subj[i + 1]) next[i] = static_cast<int>(i + 1);
    return next;
}

std::vector<int> FlatTable::rows_where_subject(const std::vector<std::uint8_t>& keep) const {
    std::vector<int> out;
    out.reserve(subj.size());
    for (size_t i = 0; i < subj.size(); ++i)
        if (keep[subj[i]]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> FlatTable::all_rows() const {
    std::vector<int> out(subj.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

void FlatTable::validate_shape() const {
    const auto n = rows();
    for (const auto& [name, c] : cols)
        if (c.size() != n) throw SchemaError("column '" + name + "' has wrong length");
    if (static_cast<int>(subj_rows.size()) != n_subjects ||
        static_cast<int>(r1.size()) != n_subjects || static_cast<int>(r2.size()) != n_subjects)
        throw SchemaError("subject-level vectors inconsistent with n_subjects");
}

} // namespace triphase
