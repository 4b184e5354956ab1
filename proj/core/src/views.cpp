#include "triphase/views.hpp"

#include "triphase/errors.hpp"

namespace triphase {

namespace {

ColumnRef make_ref(const FlatTable& t, const std::string& concrete, const std::string& base) {
    ColumnRef ref;
    auto it = t.cols.find(concrete);
    if (it == t.cols.end()) return ref;
    ref.values = &it->second;
    auto dit = t.categorical.find(base);
    if (dit != t.categorical.end()) ref.dict = &dit->second;
    return ref;
}

} // namespace

ColumnResolver phase_resolver(const FlatTable& t, Phase phase, const VariableRoles& roles) {
    return [&t, phase, roles](const std::string& name) -> ColumnRef {
        if (name == "y" || name == "x1" || name == "x2") {
            const char* suffix = "_star";
            if (roles.error_prone(name)) {
                switch (phase) {
                    case Phase::p1: suffix = "_star"; break;
                    case Phase::p2: suffix = "_tilde"; break;
                    case Phase::p3: suffix = "_true"; break;
                }
            }
            return make_ref(t, name + suffix, name);
        }
        // x3 covariates, offset, or any raw column name.
        return make_ref(t, name, name);
    };
}

std::vector<int> phase_rows(const FlatTable& t, Phase phase) {
    if (phase == Phase::p1) return t.all_rows();
    std::vector<std::uint8_t> keep(t.n_subjects, 0);
    for (int i = 0; i < t.n_subjects; ++i) {
        if (phase == Phase::p2)
            keep[i] = t.r1[i];
        else
            keep[i] = (t.r1[i] && t.r2[i]) ? 1 : 0;
    }
    return t.rows_where_subject(keep);
}

ColumnResolver completed_resolver(const FlatTable& t, const VariableRoles& roles,
                                  const Eigen::VectorXd* y_comp, const Eigen::VectorXd* x1_comp,
                                  const Eigen::VectorXd* x2_comp) {
    return [&t, roles, y_comp, x1_comp, x2_comp](const std::string& name) -> ColumnRef {
        auto completed = [&](const Eigen::VectorXd* vec) -> ColumnRef {
            ColumnRef ref;
            ref.values = vec;
            auto dit = t.categorical.find(name);
            if (dit != t.categorical.end()) ref.dict = &dit->second;
            return ref;
        };
        if (name == "y" && roles.y_error_prone && y_comp) return completed(y_comp);
        if (name == "x1" && roles.x1_error_prone && x1_comp) return completed(x1_comp);
        if (name == "x2" && roles.x2_error_prone && x2_comp) return completed(x2_comp);
        if (name == "y" || name == "x1" || name == "x2") return make_ref(t, name + "_star", name);
        return make_ref(t, name, name);
    };
}

} // namespace triphase
