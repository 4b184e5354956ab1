#pragma once

#include "triphase/calibration.hpp"
#include "triphase/log.hpp"
#include "triphase/model.hpp"
#include "triphase/sim.hpp"
#include "triphase/views.hpp"

#include <map>
#include <string>
#include <vector>

namespace triphase {

/// Flat key-value configuration with [section] headers and '#' comments.
struct KvConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text, const std::string& origin);
};

/// Resolved `simulate` run: every key has a value, unknown keys rejected.
struct SimulateConfig {
    SimConfig sim;
    LogLevel verbosity = LogLevel::warn;

    static SimulateConfig from_file(const std::string& path);
    std::string resolved_text() const;
};

/// Resolved `estimate` run.
struct EstimateConfig {
    std::vector<std::string> estimators = {"ipw", "gr2", "gr3", "gr2_mi", "gr3_mi", "mi2", "mi3"};
    Family family = Family::binomial;
    std::string formula = "y ~ x1 + x2";
    bool use_offset = false;
    int B = 5;
    std::uint64_t seed = 1;
    int jobs = 0;
    Distance distance = Distance::poisson_deviance;
    std::vector<std::string> error_free; // abstract variables without error
    std::string pi_override;             // optional probability-override file
    LogLevel verbosity = LogLevel::warn;

    static EstimateConfig from_file(const std::string& path);
    std::string resolved_text() const;
    VariableRoles roles() const;
    ModelSpec analysis_spec() const;
};

/// TRIPHASE_SEED environment override, applied after file parsing.
void apply_env_seed(std::uint64_t& seed);

} // namespace triphase
