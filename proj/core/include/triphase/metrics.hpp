#pragma once

#include <string>
#include <vector>

namespace triphase {

/// One estimator result on one Monte Carlo replicate. `status` is "ok" or
/// "failed:<reason>"; failed rows carry no usable estimates.
struct RawEstimate {
    int replicate = 0;
    std::string estimator;
    double alpha = 0, beta1 = 0, se1 = 0, beta2 = 0, se2 = 0;
    std::string status = "ok";
};

struct MetricsRow {
    std::string estimator;
    std::string coef; // "beta1" or "beta2"
    double bias = 0, variance = 0, mse = 0, sq_bias_share = 0;
    int n_failures = 0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
};

/// Deterministic reduction of raw estimates to bias/variance/MSE against
/// the generating coefficients. Population variance (divide by R) so that
/// mse = bias^2 + variance exactly; failed replicates are excluded and
/// counted. Estimators appear in order of first appearance in `raws`.
MetricsTable reduce_raws(const std::vector<RawEstimate>& raws, double truth1, double truth2);

std::string metrics_to_csv(const MetricsTable& m);
std::string raws_to_csv(const std::vector<RawEstimate>& raws, double truth1, double truth2);

struct RawsFile {
    std::vector<RawEstimate> raws;
    double truth1 = 0, truth2 = 0;
};
RawsFile read_raws_csv(const std::string& path);

} // namespace triphase
