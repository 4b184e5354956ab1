#pragma once

#include "triphase/design.hpp"
#include "triphase/table.hpp"

#include <Eigen/Dense>
#include <vector>

namespace triphase {

/// Distance between calibrated and design weights.
///   chi_square:       D(w,d) = (w-d)^2 / 2d      (closed-form solution)
///   poisson_deviance: D(w,d) = w{log(w)-log(d)} + (d-w)   (positive weights)
enum class Distance { chi_square, poisson_deviance };

Distance distance_from_string(const std::string& s);
std::string distance_to_string(Distance d);

struct CalibrationOptions {
    double tol = 1e-10;  // relative constraint tolerance for the Newton solve
    int max_iter = 200;
};

/// Result of one calibration solve. Vectors are over the included units
/// (R = 1), in the order given by `units`.
struct CalibratedWeights {
    std::vector<int> units;  // indices of the included units
    Eigen::VectorXd d;       // input design weights
    Eigen::VectorXd g;       // adjustment factors
    Eigen::VectorXd w;       // g .* d
    Eigen::VectorXd lambda;
    double residual = 0.0;   // max-abs constraint violation / scale
    int iterations = 0;
    bool negative_weights = false; // chi-square diagnostic, reported not fatal
};

/// Solves min sum_i D(w_i, d_i) subject to sum_{R=1} w_i a_i = totals.
/// `d` and `R` are over all units; `aux` has one row per unit. Chi-square
/// is solved in closed form via its Lagrange-multiplier expression;
/// Poisson deviance by damped Newton on lambda with g = exp(-lambda'a).
CalibratedWeights calibrate(const Eigen::VectorXd& d, const std::vector<std::uint8_t>& R,
                            const Eigen::MatrixXd& aux, const Eigen::VectorXd& totals,
                            Distance distance, const CalibrationOptions& opts = {});

/// Two-stage calibration of a three-phase design:
///   stage 1 calibrates d1 over {r1=1} to the full-cohort totals of aux_p1;
///   stage 2 calibrates d2 over {r=1} to the unweighted {r1=1} totals of
///   aux_p2. The final analysis weight of a fully validated subject is
///   w1 * w2.
std::pair<CalibratedWeights, CalibratedWeights> three_phase_calibrate(
    const ThreePhaseDesign& design, const FlatTable& t, const Eigen::MatrixXd& aux_p1,
    const Eigen::MatrixXd& aux_p2, Distance distance, const CalibrationOptions& opts = {});

} // namespace triphase
