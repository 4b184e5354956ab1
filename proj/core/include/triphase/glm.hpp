#pragma once

#include "triphase/model.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace triphase {

struct FitOptions {
    int max_iter = 100;
    double dev_tol = 1e-10;   // relative deviance change
    double score_tol = 1e-8;  // max-abs weighted score
    double ridge = 0.0;       // >0 stabilizes imputation models; disables the separation error
    double rank_tol = 1e-10;  // relative to the leading pivot
};

/// Converged weighted fit. `info` is the negative Jacobian of the weighted
/// score at beta (X'WX, plus any ridge), `vcov_model` its inverse.
/// For a multinomial response with K categories, beta stacks the K-1
/// baseline-category coefficient blocks and `mu_cat` holds fitted
/// category probabilities.
struct FitResult {
    Eigen::VectorXd beta;
    Eigen::MatrixXd info;
    Eigen::MatrixXd vcov_model;
    bool converged = false;
    int iterations = 0;
    double deviance = 0.0;
    bool separation_risk = false;

    Eigen::VectorXd eta;      // linear predictor per design row
    Eigen::VectorXd mu;       // fitted mean (binomial/poisson/gaussian)
    Eigen::MatrixXd mu_cat;   // multinomial fitted probabilities (n x K)

    std::vector<std::string> colnames;
    int n_categories = 0;
    double sigma2 = 0.0;      // gaussian residual variance (n - p denominator adjusted)

    // Filled by influence()/sandwich() when requested.
    Eigen::MatrixXd cluster_infl;
    Eigen::MatrixXd vcov_sandwich;
};

/// Per-cluster vectors with their cluster ids (subject indices), in order
/// of first appearance in the design rows.
struct ClusterVectors {
    std::vector<int> ids;
    Eigen::MatrixXd m; // n_clusters x dim
};

/// Solves the weighted score equations sum_i w_i S_i(beta) = 0 by
/// iteratively reweighted least squares (full Newton for multinomial).
/// Throws RankDeficient, NonConvergence or Separation.
FitResult fit_glm(const DesignData& dd, const Eigen::VectorXd& weights,
                  const FitOptions& opts = {});

/// Per-cluster score sums at the fitted beta. With `weighted` the unit
/// weights multiply each contribution (the estimating-equation pieces);
/// without, the raw score sums (used to build auxiliary proxies).
ClusterVectors cluster_scores(const DesignData& dd, const FitResult& fit,
                              const Eigen::VectorXd& weights, bool weighted);

/// Influence function per cluster: info^{-1} times the cluster score.
/// Their sum is the zero vector at the fitted beta. Fills fit.cluster_infl.
ClusterVectors influence(const DesignData& dd, FitResult& fit,
                         const Eigen::VectorXd& weights, bool weighted = true);

/// Robust covariance info^{-1} (sum_c u_c u_c') info^{-1} from per-cluster
/// contributions evaluated at the fitted beta.
Eigen::MatrixXd sandwich(FitResult& fit, const Eigen::MatrixXd& contribs);

/// Gaussian linear model helper (used by imputation models): least squares
/// with optional ridge; vcov = sigma2 * (X'X + ridge I)^{-1}.
FitResult fit_linear(const DesignData& dd, const Eigen::VectorXd& weights,
                     const FitOptions& opts = {});

} // namespace triphase
