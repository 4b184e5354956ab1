#include "triphase/runconfig.hpp"

#include "triphase/csv.hpp"
#include "triphase/errors.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace triphase {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

/// Typed accessors over one section with strict unknown-key rejection.
class Section {
public:
    Section(const std::string& name, const std::map<std::string, std::string>* kv)
        : name_(name), kv_(kv) {}

    bool has(const std::string& key) const { return kv_ && kv_->count(key); }

    std::string str(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return kv_->at(key);
    }
    long integer(const std::string& key, long fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return parse_long(kv_->at(key), "[" + name_ + "] " + key);
    }
    double real(const std::string& key, double fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return parse_double(kv_->at(key), "[" + name_ + "] " + key);
    }
    bool boolean(const std::string& key, bool fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const std::string v = kv_->at(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("[" + name_ + "] " + key + " must be true/false");
    }

    void reject_unknown() const {
        if (!kv_) return;
        for (const auto& [key, value] : *kv_)
            if (!used_.count(key))
                throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
    }

private:
    std::string name_;
    const std::map<std::string, std::string>* kv_;
    std::set<std::string> used_;
};

const std::map<std::string, std::string>* find_section(const KvConfig& cfg,
                                                       const std::string& name) {
    auto it = cfg.sections.find(name);
    return it == cfg.sections.end() ? nullptr : &it->second;
}

void reject_unknown_sections(const KvConfig& cfg, const std::set<std::string>& allowed) {
    for (const auto& [name, kv] : cfg.sections)
        if (!allowed.count(name)) throw ConfigError("unknown section [" + name + "]");
}

LogLevel verbosity_from_string(const std::string& s) {
    if (s == "quiet") return LogLevel::quiet;
    if (s == "warn") return LogLevel::warn;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw ConfigError("unknown verbosity '" + s + "'");
}

std::string verbosity_to_string(LogLevel v) {
    switch (v) {
        case LogLevel::quiet: return "quiet";
        case LogLevel::warn: return "warn";
        case LogLevel::info: return "info";
        case LogLevel::debug: return "debug";
    }
    return "warn";
}

std::string join_list(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(',');
        out += v[i];
    }
    return out;
}

} // namespace

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
            section = trim(t.substr(1, t.size() - 2));
            cfg.sections[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside a section");
        if (!cfg.sections[section].try_emplace(key, value).second)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

void apply_env_seed(std::uint64_t& seed) {
    if (const char* env = std::getenv("TRIPHASE_SEED")) {
        seed = static_cast<std::uint64_t>(parse_long(env, "TRIPHASE_SEED"));
    }
}

SimulateConfig SimulateConfig::from_file(const std::string& path) {
    const KvConfig cfg = KvConfig::parse_file(path);
    reject_unknown_sections(cfg, {"run", "sim"});

    SimulateConfig out;
    Section run("run", find_section(cfg, "run"));
    out.sim.seed = static_cast<std::uint64_t>(run.integer("seed", 1));
    out.sim.jobs = static_cast<int>(run.integer("jobs", 0));
    out.verbosity = verbosity_from_string(run.str("verbosity", "warn"));
    run.reject_unknown();

    Section sim("sim", find_section(cfg, "sim"));
    out.sim.setting = setting_from_string(sim.str("setting", "s1"));
    out.sim.n1 = static_cast<int>(sim.integer("n1", out.sim.n1));
    out.sim.n2 = static_cast<int>(sim.integer("n2", out.sim.n2));
    out.sim.n3 = static_cast<int>(sim.integer("n3", out.sim.n3));
    out.sim.n_sims = static_cast<int>(sim.integer("n_sims", out.sim.n_sims));
    out.sim.B = static_cast<int>(sim.integer("B", out.sim.B));
    out.sim.months_max = static_cast<int>(sim.integer("months_max", out.sim.months_max));
    out.sim.n_periods = static_cast<int>(sim.integer("n_periods", out.sim.n_periods));
    out.sim.period_len_max =
        static_cast<int>(sim.integer("period_len_max", out.sim.period_len_max));
    out.sim.weibull_shape = sim.real("weibull_shape", out.sim.weibull_shape);
    out.sim.weibull_scale_base = sim.real("weibull_scale_base", out.sim.weibull_scale_base);
    out.sim.gamma1 = sim.real("gamma1", out.sim.gamma1);
    out.sim.gamma2 = sim.real("gamma2", out.sim.gamma2);
    out.sim.ystar_intercept = sim.real("ystar_intercept", out.sim.ystar_intercept);
    out.sim.ystar_slope = sim.real("ystar_slope", out.sim.ystar_slope);
    out.sim.ytilde_intercept = sim.real("ytilde_intercept", out.sim.ytilde_intercept);
    out.sim.ytilde_slope = sim.real("ytilde_slope", out.sim.ytilde_slope);
    out.sim.var_ustar = sim.real("var_ustar", out.sim.var_ustar);
    out.sim.var_utilde = sim.real("var_utilde", out.sim.var_utilde);
    if (sim.has("estimators")) out.sim.estimators = split_list(sim.str("estimators", ""));
    else sim.str("estimators", "");
    sim.reject_unknown();

    apply_env_seed(out.sim.seed);
    out.sim = out.sim.resolved();
    out.sim.validate();
    return out;
}

std::string SimulateConfig::resolved_text() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "seed = " << sim.seed << "\n";
    os << "jobs = " << sim.jobs << "\n";
    os << "verbosity = " << verbosity_to_string(verbosity) << "\n\n";
    os << "[sim]\n";
    os << "setting = " << setting_to_string(sim.setting) << "\n";
    os << "n1 = " << sim.n1 << "\n";
    os << "n2 = " << sim.n2 << "\n";
    os << "n3 = " << sim.n3 << "\n";
    os << "n_sims = " << sim.n_sims << "\n";
    os << "B = " << sim.B << "\n";
    os << "months_max = " << sim.months_max << "\n";
    os << "n_periods = " << sim.n_periods << "\n";
    os << "period_len_max = " << sim.period_len_max << "\n";
    os << "weibull_shape = " << format_double(sim.weibull_shape) << "\n";
    os << "weibull_scale_base = " << format_double(sim.weibull_scale_base) << "\n";
    os << "gamma1 = " << format_double(sim.gamma1) << "\n";
    os << "gamma2 = " << format_double(sim.gamma2) << "\n";
    os << "ystar_intercept = " << format_double(sim.ystar_intercept) << "\n";
    os << "ystar_slope = " << format_double(sim.ystar_slope) << "\n";
    os << "ytilde_intercept = " << format_double(sim.ytilde_intercept) << "\n";
    os << "ytilde_slope = " << format_double(sim.ytilde_slope) << "\n";
    os << "var_ustar = " << format_double(sim.var_ustar) << "\n";
    os << "var_utilde = " << format_double(sim.var_utilde) << "\n";
    os << "estimators = " << join_list(sim.estimators) << "\n";
    return os.str();
}

EstimateConfig EstimateConfig::from_file(const std::string& path) {
    const KvConfig cfg = KvConfig::parse_file(path);
    reject_unknown_sections(cfg, {"run", "estimate"});

    EstimateConfig out;
    Section run("run", find_section(cfg, "run"));
    out.seed = static_cast<std::uint64_t>(run.integer("seed", 1));
    out.jobs = static_cast<int>(run.integer("jobs", 0));
    out.verbosity = verbosity_from_string(run.str("verbosity", "warn"));
    run.reject_unknown();

    Section est("estimate", find_section(cfg, "estimate"));
    if (est.has("estimators")) out.estimators = split_list(est.str("estimators", ""));
    else est.str("estimators", "");
    out.family = ModelSpec::family_from_string(est.str("family", "binomial"));
    out.formula = est.str("formula", out.formula);
    out.use_offset = est.boolean("offset", out.use_offset);
    out.B = static_cast<int>(est.integer("B", out.B));
    out.distance = distance_from_string(est.str("distance", "poisson_deviance"));
    out.error_free = split_list(est.str("error_free", ""));
    out.pi_override = est.str("pi_override", "");
    est.reject_unknown();

    apply_env_seed(out.seed);
    static const std::set<std::string> known = {"ipw",    "gr2", "gr3", "gr2_mi",
                                                "gr3_mi", "mi2", "mi3"};
    if (out.estimators.empty()) throw ConfigError("estimator list is empty");
    for (const auto& e : out.estimators)
        if (!known.count(e)) throw ConfigError("unknown estimator '" + e + "'");
    for (const auto& v : out.error_free)
        if (v != "y" && v != "x1" && v != "x2")
            throw ConfigError("error_free supports y/x1/x2, got '" + v + "'");
    if (out.B < 2) throw ConfigError("B must be >= 2");
    out.analysis_spec(); // validates formula and family pairing
    return out;
}

std::string EstimateConfig::resolved_text() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "seed = " << seed << "\n";
    os << "jobs = " << jobs << "\n";
    os << "verbosity = " << verbosity_to_string(verbosity) << "\n\n";
    os << "[estimate]\n";
    os << "estimators = " << join_list(estimators) << "\n";
    os << "family = " << ModelSpec::family_to_string(family) << "\n";
    os << "formula = " << formula << "\n";
    os << "offset = " << (use_offset ? "true" : "false") << "\n";
    os << "B = " << B << "\n";
    os << "distance = " << distance_to_string(distance) << "\n";
    os << "error_free = " << join_list(error_free) << "\n";
    os << "pi_override = " << pi_override << "\n";
    return os.str();
}

VariableRoles EstimateConfig::roles() const {
    VariableRoles r;
    for (const auto& v : error_free) {
        if (v == "y") r.y_error_prone = false;
        if (v == "x1") r.x1_error_prone = false;
        if (v == "x2") r.x2_error_prone = false;
    }
    return r;
}

ModelSpec EstimateConfig::analysis_spec() const {
    return ModelSpec::parse(family, formula, use_offset ? "offset" : "");
}

} // namespace triphase
