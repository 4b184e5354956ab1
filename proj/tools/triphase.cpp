// Command-line front end: `simulate` runs the Monte Carlo comparison,
// `estimate` applies the estimators to a subject-month file, `report`
// recomputes summary metrics from a raw-estimates file.

#include "triphase/csv.hpp"
#include "triphase/design.hpp"
#include "triphase/domain_io.hpp"
#include "triphase/errors.hpp"
#include "triphase/estimators.hpp"
#include "triphase/log.hpp"
#include "triphase/metrics.hpp"
#include "triphase/mi.hpp"
#include "triphase/runconfig.hpp"
#include "triphase/sim.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>

namespace {

using namespace triphase;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int classify(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
        dynamic_cast<const MissingColumn*>(&e) || dynamic_cast<const PhaseInconsistency*>(&e) ||
        dynamic_cast<const NonPositiveOffset*>(&e) || dynamic_cast<const MonthGap*>(&e) ||
        dynamic_cast<const ZeroSamplingProbability*>(&e) ||
        dynamic_cast<const ImputationSetMismatch*>(&e))
        return kExitData;
    if (dynamic_cast<const Error*>(&e)) return kExitNumeric;
    return 1;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
}

int cmd_simulate(const std::string& config_path, const std::string& out, int jobs_flag) {
    SimulateConfig cfg = SimulateConfig::from_file(config_path);
    if (jobs_flag > 0) cfg.sim.jobs = jobs_flag;
    set_log_level(cfg.verbosity);
    ensure_out_dir(out);
    write_text_atomic(out + "/config_resolved.ini", cfg.resolved_text());

    log_info("simulate: setting " + setting_to_string(cfg.sim.setting) + ", n_sims " +
             std::to_string(cfg.sim.n_sims));
    const McResult res = run_monte_carlo(cfg.sim);
    write_text_atomic(out + "/estimates_raw.csv",
                      raws_to_csv(res.raws, cfg.sim.gamma1, cfg.sim.gamma2));
    write_text_atomic(out + "/metrics.csv", metrics_to_csv(res.metrics));
    return kExitOk;
}

std::string report_rows(const EstimateReport& rep) {
    std::string out;
    for (Eigen::Index j = 0; j < rep.beta.size(); ++j) {
        out += join_csv({rep.method, rep.coef_names[j], format_double(rep.beta(j)),
                         format_double(rep.se(j)), format_double(rep.ci_lo(j)),
                         format_double(rep.ci_hi(j)),
                         rep.irr_scale ? format_double(std::exp(rep.beta(j))) : std::string()});
        out.push_back('\n');
    }
    return out;
}

std::string diag_row(const std::string& method, const ReportDiagnostics& d,
                     const std::string& status) {
    return join_csv({method, d.converged ? "1" : "0", std::to_string(d.fit_iterations),
                     std::to_string(d.B), format_double(d.cal_residual1),
                     format_double(d.cal_residual2), format_double(d.g1_min),
                     format_double(d.g1_max), format_double(d.g2_min), format_double(d.g2_max),
                     status}) +
           "\n";
}

int cmd_estimate(const std::string& data_path, const std::string& config_path,
                 const std::string& out) {
    EstimateConfig cfg = EstimateConfig::from_file(config_path);
    set_log_level(cfg.verbosity);
    ensure_out_dir(out);
    write_text_atomic(out + "/config_resolved.ini", cfg.resolved_text());

    const Cohort cohort = intersect_followup(ingest(data_path));
    const FlatTable flat = flatten(cohort);
    ThreePhaseDesign design = design_from_counts(flat);
    if (!cfg.pi_override.empty()) apply_probability_overrides(design, flat, cfg.pi_override);

    const ModelSpec analysis = cfg.analysis_spec();
    EstimatorOptions eopts;
    eopts.roles = cfg.roles();
    eopts.distance = cfg.distance;

    std::string reports = "method,coef,beta,se,ci_lo,ci_hi,irr\n";
    std::string diagnostics =
        "method,converged,iterations,B,cal_residual1,cal_residual2,g1_min,g1_max,g2_min,g2_max,"
        "status\n";
    int succeeded = 0;

    auto wanted = [&cfg](const std::string& name) {
        return std::find(cfg.estimators.begin(), cfg.estimators.end(), name) !=
               cfg.estimators.end();
    };
    auto attempt = [&](const std::string& name, auto&& fn) {
        if (!wanted(name)) return;
        try {
            const EstimateReport rep = fn();
            reports += report_rows(rep);
            diagnostics += diag_row(name, rep.diag, "ok");
            ++succeeded;
        } catch (const std::exception& e) {
            log_warn(name + " failed: " + e.what());
            diagnostics += diag_row(name, ReportDiagnostics{}, std::string("failed: ") + e.what());
        }
    };

    attempt("ipw", [&] { return ipw(flat, design, analysis, eopts); });
    attempt("gr2", [&] { return two_phase_raking(flat, design, analysis, eopts); });
    attempt("gr3", [&] { return three_phase_raking(flat, design, analysis, eopts); });

    auto mi_block = [&](MiMode mode, const std::string& mi_name, const std::string& gr_name) {
        if (!wanted(mi_name) && !wanted(gr_name)) return;
        MiOptions mo;
        mo.B = cfg.B;
        mo.mode = mode;
        mo.seed = cfg.seed + (mode == MiMode::three_phase ? 1 : 0);
        mo.roles = eopts.roles;
        try {
            const bool three = mode == MiMode::three_phase;
            MiArtifacts art = mi_pass(flat, analysis, mo, /*keep_datasets=*/false,
                                      /*compute_aux=*/wanted(gr_name), three ? &design : nullptr);
            if (wanted(mi_name)) {
                reports += report_rows(art.report);
                diagnostics += diag_row(mi_name, art.report.diag, "ok");
                ++succeeded;
            }
            if (wanted(gr_name)) {
                try {
                    const EstimateReport rep =
                        raking_with_aux(flat, design, analysis, eopts, art.aux_emr,
                                        three ? &art.aux_chart : nullptr, cfg.B);
                    reports += report_rows(rep);
                    diagnostics += diag_row(gr_name, rep.diag, "ok");
                    ++succeeded;
                } catch (const std::exception& e) {
                    log_warn(gr_name + " failed: " + e.what());
                    diagnostics +=
                        diag_row(gr_name, ReportDiagnostics{}, std::string("failed: ") + e.what());
                }
            }
        } catch (const std::exception& e) {
            log_warn(mi_name + " pass failed: " + e.what());
            if (wanted(mi_name))
                diagnostics +=
                    diag_row(mi_name, ReportDiagnostics{}, std::string("failed: ") + e.what());
            if (wanted(gr_name))
                diagnostics +=
                    diag_row(gr_name, ReportDiagnostics{}, std::string("failed: ") + e.what());
        }
    };
    mi_block(MiMode::two_phase, "mi2", "gr2_mi");
    mi_block(MiMode::three_phase, "mi3", "gr3_mi");

    write_text_atomic(out + "/reports.csv", reports);
    write_text_atomic(out + "/diagnostics.csv", diagnostics);
    if (succeeded == 0) {
        log_warn("all requested estimators failed");
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_report(const std::string& raws_path, const std::string& out) {
    const RawsFile f = read_raws_csv(raws_path);
    ensure_out_dir(out);
    const MetricsTable m = reduce_raws(f.raws, f.truth1, f.truth2);
    write_text_atomic(out + "/metrics.csv", metrics_to_csv(m));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Design-based and imputation estimators for three-phase validation studies"};
    app.require_subcommand(1);

    std::string config_path, data_path, raws_path, out_dir;
    int jobs_flag = 0;

    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo comparison");
    sim->add_option("--config", config_path, "Run configuration file")->required();
    sim->add_option("--out", out_dir, "Output directory")->required();
    sim->add_option("--jobs", jobs_flag, "Worker threads (overrides config)");

    auto* est = app.add_subcommand("estimate", "Estimate from a subject-month file");
    est->add_option("--data", data_path, "Input data file")->required();
    est->add_option("--config", config_path, "Run configuration file")->required();
    est->add_option("--out", out_dir, "Output directory")->required();

    auto* rep = app.add_subcommand("report", "Summarize a raw-estimates file");
    rep->add_option("--raws", raws_path, "Raw estimates file")->required();
    rep->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, out_dir, jobs_flag);
        if (est->parsed()) return cmd_estimate(data_path, config_path, out_dir);
        if (rep->parsed()) return cmd_report(raws_path, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify(e);
    }
    return kExitConfig;
}
