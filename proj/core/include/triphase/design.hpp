#pragma once

#include "triphase/table.hpp"

#include <Eigen/Dense>
#include <string>

namespace triphase {

/// Per-subject sampling probabilities and design weights of the three-phase
/// design. pi1 applies to everyone; pi2 (and the products) are defined only
/// for subjects with r1 = 1 and are NaN otherwise.
struct ThreePhaseDesign {
    Eigen::VectorXd pi1, pi2;
    Eigen::VectorXd d1, d2, d; // 1/pi1, 1/pi2, d1*d2

    void validate(const FlatTable& t) const;
};

/// Derives probabilities from realized stratum counts: pi1 = (number
/// sampled in the subject's phase-2 stratum) / (stratum size), and pi2
/// analogously within the r1 = 1 subsample. A stratum with members but no
/// sampled subject violates positivity and raises ZeroSamplingProbability.
ThreePhaseDesign design_from_counts(const FlatTable& t);

/// Replaces probabilities for the subjects listed in a
/// subject_id,pi1,pi2 file (pi2 may be blank for r1 = 0 subjects).
void apply_probability_overrides(ThreePhaseDesign& design, const FlatTable& t,
                                 const std::string& path);

} // namespace triphase
