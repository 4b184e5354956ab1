#pragma once

#include "triphase/domain.hpp"
#include "triphase/metrics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace triphase {

/// Simulation settings: s1 samples phase 3 on registry events alone, s2 on
/// the (registry, chart) event combination, high_error raises the phase-1
/// outcome error rate, misspecified generates x1 from a skewed model the
/// imputation keeps treating as normal-linear.
enum class SimSetting { s1, s2, high_error, misspecified };

SimSetting setting_from_string(const std::string& s);
std::string setting_to_string(SimSetting s);

struct SimConfig {
    int n1 = 15000, n2 = 2500, n3 = 250;
    int months_max = 18, n_periods = 3, period_len_max = 6;
    double weibull_shape = 0.5;
    double weibull_scale_base = 2.5e-3;
    double gamma1 = 0.5, gamma2 = 0.5;
    double ystar_intercept = -3.5, ystar_slope = 3.25;   // Pr(Y*=1|Y) = exp(a + b Y)
    double ytilde_intercept = -5.0, ytilde_slope = 4.75; // Pr(Yt=1|Y) = exp(a + b Y)
    double var_ustar = 1.0, var_utilde = 0.1;
    SimSetting setting = SimSetting::s1;
    int n_sims = 1000;
    int B = 50;
    std::uint64_t seed = 1;
    int jobs = 0; // 0 = hardware concurrency
    std::vector<std::string> estimators = {"ipw", "gr2", "gr3", "gr2_mi", "gr3_mi", "mi2", "mi3"};

    /// Applies the setting-specific parameter overrides (high_error
    /// replaces the Y* error parameters with -2.5/1.75).
    SimConfig resolved() const;
    void validate() const;
};

/// Generates the full (census) cohort: every subject carries true,
/// registry and chart values for every month, r1 = r2 = 1. Monthly event
/// clock: T ~ Weibull(shape, rate-scale base*exp(gamma'x)), an event in the
/// month when T <= 1; an event ends the current period and a fresh
/// period-level x2 is drawn.
Cohort generate_cohort(const SimConfig& config, std::uint64_t seed);

/// Stratified-without-replacement phase sampling; assigns r1/r2 and the
/// stratum labels, then masks chart values for r1 = 0 and validated values
/// for r2 = 0. Oversized requests take the whole stratum with a warning.
Cohort sample_phases(Cohort cohort, const SimConfig& config, std::uint64_t seed);

struct McResult {
    MetricsTable metrics;
    std::vector<RawEstimate> raws;
};

/// Runs the Monte Carlo comparison over n_sims replicates (parallel across
/// replicates, deterministic for a given config and seed).
McResult run_monte_carlo(const SimConfig& config);

} // namespace triphase
