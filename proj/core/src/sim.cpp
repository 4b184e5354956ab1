#include "triphase/sim.hpp"

#include "triphase/design.hpp"
#include "triphase/errors.hpp"
#include "triphase/estimators.hpp"
#include "triphase/log.hpp"
#include "triphase/mi.hpp"
#include "triphase/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

namespace triphase {

SimSetting setting_from_string(const std::string& s) {
    if (s == "s1") return SimSetting::s1;
    if (s == "s2") return SimSetting::s2;
    if (s == "high_error") return SimSetting::high_error;
    if (s == "misspecified") return SimSetting::misspecified;
    throw ConfigError("unknown setting '" + s + "'");
}

std::string setting_to_string(SimSetting s) {
    switch (s) {
        case SimSetting::s1: return "s1";
        case SimSetting::s2: return "s2";
        case SimSetting::high_error: return "high_error";
        case SimSetting::misspecified: return "misspecified";
    }
    return "?";
}

SimConfig SimConfig::resolved() const {
    SimConfig c = *this;
    if (c.setting == SimSetting::high_error) {
        c.ystar_intercept = -2.5;
        c.ystar_slope = 1.75;
    }
    return c;
}

void SimConfig::validate() const {
    if (n1 < 1 || n2 < 1 || n3 < 1) throw ConfigError("n1/n2/n3 must be positive");
    if (!(n3 <= n2 && n2 <= n1)) throw ConfigError("need n3 <= n2 <= n1");
    if (var_ustar <= 0 || var_utilde <= 0) throw ConfigError("error variances must be positive");
    if (weibull_shape <= 0 || weibull_scale_base <= 0)
        throw ConfigError("weibull parameters must be positive");
    if (n_periods < 1 || period_len_max < 1 || months_max < 1)
        throw ConfigError("period structure must be positive");
    if (n_sims < 1) throw ConfigError("n_sims must be >= 1");
    if (B < 2) throw ConfigError("B must be >= 2");
    static const std::vector<std::string> known = {"ipw",    "gr2", "gr3", "gr2_mi",
                                                   "gr3_mi", "mi2", "mi3"};
    if (estimators.empty()) throw ConfigError("estimator list is empty");
    for (const auto& e : estimators)
        if (std::find(known.begin(), known.end(), e) == known.end())
            throw ConfigError("unknown estimator '" + e + "'");
}

Cohort generate_cohort(const SimConfig& config, std::uint64_t seed) {
    const SimConfig cfg = config.resolved();
    cfg.validate();
    SplitRng rng = SplitRng(seed).child(11);

    const double inv_shape = 1.0 / cfg.weibull_shape;
    const double p_star1 = std::exp(cfg.ystar_intercept + cfg.ystar_slope);
    const double p_star0 = std::exp(cfg.ystar_intercept);
    const double p_til1 = std::exp(cfg.ytilde_intercept + cfg.ytilde_slope);
    const double p_til0 = std::exp(cfg.ytilde_intercept);
    if (p_star1 > 1 || p_til1 > 1)
        throw ConfigError("error-model parameters give Pr > 1");
    const double sd_ustar = std::sqrt(cfg.var_ustar);
    const double sd_utilde = std::sqrt(cfg.var_utilde);

    Cohort cohort;
    cohort.subjects.reserve(cfg.n1);
    for (int i = 0; i < cfg.n1; ++i) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(i + 1);
        s.r1 = true;
        s.r2 = true;
        int month = 0;
        for (int j = 0; j < cfg.n_periods && month < cfg.months_max; ++j) {
            const double x2 = rng.normal();
            for (int k = 0; k < cfg.period_len_max && month < cfg.months_max; ++k) {
                double x1;
                if (cfg.setting == SimSetting::misspecified) {
                    const double z = rng.gamma(10.0, 1.0);
                    x1 = std::log(z) + 0.5 * x2 + 0.1 * x2 * x2;
                } else {
                    x1 = rng.normal();
                }
                const double rate =
                    cfg.weibull_scale_base * std::exp(cfg.gamma1 * x1 + cfg.gamma2 * x2);
                const double t_event = std::pow(rng.exponential(1.0) / rate, inv_shape);
                const bool y = t_event <= 1.0;

                MonthlyRecord m;
                m.month = ++month;
                m.offset = 1.0;
                m.y_true = y ? 1.0 : 0.0;
                m.x1_true = x1;
                m.x2_true = x2;
                m.y_star = rng.bernoulli(y ? p_star1 : p_star0) ? 1.0 : 0.0;
                m.y_tilde = rng.bernoulli(y ? p_til1 : p_til0) ? 1.0 : 0.0;
                m.x1_star = x1 + rng.normal(0.0, sd_ustar);
                m.x1_tilde = x1 + rng.normal(0.0, sd_utilde);
                m.x2_star = x2; // error-free covariate, identical at all phases
                m.x2_tilde = x2;
                s.records.push_back(std::move(m));
                if (y) break; // follow-up pauses at the event; next period restarts
            }
        }
        cohort.subjects.push_back(std::move(s));
    }
    return cohort;
}

namespace {

/// Exact stratified simple random sample; an oversized request takes the
/// whole stratum with a logged downgrade.
void sample_stratified(const std::vector<std::string>& labels, const std::vector<int>& eligible,
                       int per_stratum, SplitRng& rng, std::vector<std::uint8_t>& selected) {
    std::map<std::string, std::vector<int>> pools;
    for (int i : eligible) pools[labels[i]].push_back(i);
    for (auto& [label, pool] : pools) {
        int k = per_stratum;
        if (k > static_cast<int>(pool.size())) {
            log_warn("stratum '" + label + "' exhausted: wanted " + std::to_string(k) + " of " +
                     std::to_string(pool.size()) + "; taking the whole stratum");
            k = static_cast<int>(pool.size());
        }
        for (int idx : rng.sample_without_replacement(pool, k)) selected[idx] = 1;
    }
}

} // namespace

Cohort sample_phases(Cohort cohort, const SimConfig& config, std::uint64_t seed) {
    const SimConfig cfg = config.resolved();
    const int n = cohort.n1();
    SplitRng rng = SplitRng(seed).child(23);

    std::vector<std::uint8_t> estar(n, 0), etilde(n, 0);
    for (int i = 0; i < n; ++i) {
        for (const auto& m : cohort.subjects[i].records) {
            if (m.y_star == 1.0) estar[i] = 1;
            if (m.y_tilde && *m.y_tilde == 1.0) etilde[i] = 1;
        }
    }

    // Phase 2: equal allocation over the registry-event strata.
    std::vector<std::string> strata_p2(n);
    for (int i = 0; i < n; ++i) strata_p2[i] = estar[i] ? "estar1" : "estar0";
    std::vector<int> everyone(n);
    for (int i = 0; i < n; ++i) everyone[i] = i;
    std::vector<std::uint8_t> r1(n, 0);
    sample_stratified(strata_p2, everyone, cfg.n2 / 2, rng, r1);

    // Phase 3 strata among the phase-2 sample.
    const bool joint = cfg.setting == SimSetting::s2;
    std::vector<std::string> strata_p3(n);
    for (int i = 0; i < n; ++i) {
        if (joint)
            strata_p3[i] = std::string("e") + (estar[i] ? "1" : "0") + "t" + (etilde[i] ? "1" : "0");
        else
            strata_p3[i] = estar[i] ? "estar1" : "estar0";
    }
    std::vector<int> phase2;
    for (int i = 0; i < n; ++i)
        if (r1[i]) phase2.push_back(i);
    std::vector<std::uint8_t> r2(n, 0);
    sample_stratified(strata_p3, phase2, cfg.n3 / (joint ? 4 : 2), rng, r2);

    for (int i = 0; i < n; ++i) {
        auto& s = cohort.subjects[i];
        s.r1 = r1[i] != 0;
        s.r2 = r2[i] != 0;
        s.stratum_p2 = strata_p2[i];
        s.stratum_p3 = s.r1 ? strata_p3[i] : "";
        for (auto& m : s.records) {
            if (!s.r1) {
                m.y_tilde.reset();
                m.x1_tilde.reset();
                m.x2_tilde.reset();
            }
            if (!(s.r1 && s.r2)) {
                m.y_true.reset();
                m.x1_true.reset();
                m.x2_true.reset();
            }
        }
    }
    cohort.validate();
    return cohort;
}

namespace {

RawEstimate to_raw(int replicate, const EstimateReport& rep) {
    RawEstimate r;
    r.replicate = replicate;
    r.estimator = rep.method;
    if (rep.beta.size() < 3) throw ConfigError("unexpected coefficient count");
    r.alpha = rep.beta(0);
    r.beta1 = rep.beta(1);
    r.se1 = rep.se(1);
    r.beta2 = rep.beta(2);
    r.se2 = rep.se(2);
    return r;
}

std::string sanitize(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    if (s.size() > 120) s.resize(120);
    return s;
}

RawEstimate failed_raw(int replicate, const std::string& estimator, const std::string& why) {
    RawEstimate r;
    r.replicate = replicate;
    r.estimator = estimator;
    r.status = "failed:" + sanitize(why);
    return r;
}

std::vector<RawEstimate> run_replicate(const SimConfig& cfg, int rep_index, std::uint64_t root) {
    const SplitRng rep_rng = SplitRng(root).child(static_cast<std::uint64_t>(rep_index) + 1);
    const std::uint64_t gen_seed = rep_rng.child(1).key();
    const std::uint64_t sample_seed = rep_rng.child(2).key();
    const std::uint64_t mi2_seed = rep_rng.child(3).key();
    const std::uint64_t mi3_seed = rep_rng.child(4).key();

    Cohort census = generate_cohort(cfg, gen_seed);
    Cohort observed = sample_phases(std::move(census), cfg, sample_seed);
    const FlatTable flat = flatten(observed);
    const ThreePhaseDesign design = design_from_counts(flat);

    const ModelSpec analysis = ModelSpec::parse(Family::binomial, "y ~ x1 + x2");
    EstimatorOptions eopts;
    eopts.roles.x2_error_prone = false;

    auto wanted = [&cfg](const std::string& name) {
        return std::find(cfg.estimators.begin(), cfg.estimators.end(), name) !=
               cfg.estimators.end();
    };

    std::map<std::string, RawEstimate> out;
    auto attempt = [&](const std::string& name, auto&& fn) {
        if (!wanted(name)) return;
        try {
            out[name] = to_raw(rep_index, fn());
        } catch (const std::exception& e) {
            out[name] = failed_raw(rep_index, name, e.what());
        }
    };

    attempt("ipw", [&] { return ipw(flat, design, analysis, eopts); });
    attempt("gr2", [&] { return two_phase_raking(flat, design, analysis, eopts); });
    attempt("gr3", [&] { return three_phase_raking(flat, design, analysis, eopts); });

    // The MI passes are shared between the MI estimator and the raking+MI
    // auxiliaries of the same phase count.
    auto mi_block = [&](MiMode mode, std::uint64_t seed, const std::string& mi_name,
                        const std::string& gr_name) {
        if (!wanted(mi_name) && !wanted(gr_name)) return;
        MiOptions mo;
        mo.B = cfg.B;
        mo.mode = mode;
        mo.seed = seed;
        mo.roles = eopts.roles;
        try {
            const bool need_aux = wanted(gr_name);
            MiArtifacts art = mi_pass(flat, analysis, mo, /*keep_datasets=*/false, need_aux,
                                      mode == MiMode::three_phase ? &design : nullptr);
            if (wanted(mi_name)) out[mi_name] = to_raw(rep_index, art.report);
            if (wanted(gr_name)) {
                try {
                    const bool three = mode == MiMode::three_phase;
                    EstimateReport rep =
                        raking_with_aux(flat, design, analysis, eopts, art.aux_emr,
                                        three ? &art.aux_chart : nullptr, cfg.B);
                    out[gr_name] = to_raw(rep_index, rep);
                } catch (const std::exception& e) {
                    out[gr_name] = failed_raw(rep_index, gr_name, e.what());
                }
            }
        } catch (const std::exception& e) {
            if (wanted(mi_name)) out[mi_name] = failed_raw(rep_index, mi_name, e.what());
            if (wanted(gr_name)) out[gr_name] = failed_raw(rep_index, gr_name, e.what());
        }
    };
    mi_block(MiMode::two_phase, mi2_seed, "mi2", "gr2_mi");
    mi_block(MiMode::three_phase, mi3_seed, "mi3", "gr3_mi");

    std::vector<RawEstimate> rows;
    for (const auto& name : cfg.estimators)
        if (auto it = out.find(name); it != out.end()) rows.push_back(it->second);
    return rows;
}

} // namespace

McResult run_monte_carlo(const SimConfig& config) {
    const SimConfig cfg = config.resolved();
    cfg.validate();

    std::vector<std::vector<RawEstimate>> per_rep(cfg.n_sims);
    std::atomic<int> next{0};
    int jobs = cfg.jobs > 0 ? cfg.jobs
                            : static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min(jobs, cfg.n_sims);

    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.n_sims) return;
            try {
                per_rep[r] = run_replicate(cfg, r, cfg.seed);
            } catch (const std::exception& e) {
                // Replicate-level failure (generation itself failed).
                per_rep[r].clear();
                for (const auto& name : cfg.estimators)
                    per_rep[r].push_back(failed_raw(r, name, e.what()));
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    McResult res;
    for (auto& rows : per_rep)
        for (auto& r : rows) res.raws.push_back(std::move(r));
    res.metrics = reduce_raws(res.raws, cfg.gamma1, cfg.gamma2);
    return res;
}

} // namespace triphase
