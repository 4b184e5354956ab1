#include "triphase/calibration.hpp"

#include "triphase/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace triphase {

Distance distance_from_string(const std::string& s) {
    if (s == "chi_square") return Distance::chi_square;
    if (s == "poisson_deviance") return Distance::poisson_deviance;
    throw ConfigError("unknown distance '" + s + "'");
}

std::string distance_to_string(Distance d) {
    return d == Distance::chi_square ? "chi_square" : "poisson_deviance";
}

namespace {

Eigen::VectorXd constraint_scales(const Eigen::VectorXd& totals,
                                  const Eigen::VectorXd& achieved0) {
    Eigen::VectorXd s(totals.size());
    for (Eigen::Index j = 0; j < s.size(); ++j)
        s(j) = std::max({1.0, std::abs(totals(j)), std::abs(achieved0(j))});
    return s;
}

double relative_residual(const Eigen::VectorXd& gap, const Eigen::VectorXd& scales) {
    double r = 0.0;
    for (Eigen::Index j = 0; j < gap.size(); ++j) r = std::max(r, std::abs(gap(j)) / scales(j));
    return r;
}

} // namespace

CalibratedWeights calibrate(const Eigen::VectorXd& d, const std::vector<std::uint8_t>& R,
                            const Eigen::MatrixXd& aux, const Eigen::VectorXd& totals,
                            Distance distance, const CalibrationOptions& opts) {
    const int n = static_cast<int>(R.size());
    if (d.size() != n || aux.rows() != n) throw ConfigError("calibrate: size mismatch");
    const Eigen::Index q = aux.cols();
    if (totals.size() != q) throw ConfigError("calibrate: totals dimension mismatch");
    if (!totals.allFinite()) throw ConfigError("calibrate: totals must be finite");

    CalibratedWeights cw;
    for (int i = 0; i < n; ++i)
        if (R[i]) cw.units.push_back(i);
    const Eigen::Index m = static_cast<Eigen::Index>(cw.units.size());
    if (m == 0) throw NoFeasibleWeights("no included units");

    Eigen::MatrixXd A(m, q);
    cw.d.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        A.row(k) = aux.row(cw.units[k]);
        cw.d(k) = d(cw.units[k]);
        if (!(cw.d(k) > 0)) throw ConfigError("calibrate: design weights must be positive");
    }
    if (!A.allFinite()) throw ConfigError("calibrate: auxiliary values must be finite");

    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (qr.rank() < q)
            throw CollinearAuxiliaries("auxiliary matrix over the included units is rank " +
                                       std::to_string(qr.rank()) + " of " + std::to_string(q));
    }

    const Eigen::VectorXd base = A.transpose() * cw.d; // sum R d a
    const Eigen::VectorXd scales = constraint_scales(totals, base);

    // Column rescaling for conditioning; lambda is reported in the
    // original coordinates (g depends only on a'lambda, which is scale
    // invariant).
    Eigen::VectorXd colscale(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        colscale(j) = A.col(j).cwiseAbs().maxCoeff();
        if (!(colscale(j) > 0)) colscale(j) = 1.0;
    }
    const Eigen::MatrixXd As = A * colscale.cwiseInverse().asDiagonal();

    if (distance == Distance::chi_square) {
        // g = 1 - lambda'a with lambda = (sum R d a a')^{-1} (sum R d a - totals).
        const Eigen::MatrixXd M = As.transpose() * cw.d.asDiagonal() * As;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
        if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14))
            throw CollinearAuxiliaries("chi-square normal matrix numerically singular");
        const Eigen::VectorXd lam_s =
            ldlt.solve(colscale.cwiseInverse().asDiagonal() * (base - totals));
        cw.lambda = colscale.cwiseInverse().asDiagonal() * lam_s;
        cw.g = Eigen::VectorXd::Ones(m) - A * cw.lambda;
        cw.iterations = 0;
    } else {
        // Damped Newton minimizing the convex dual
        //   phi(lambda) = sum R d exp(-a'lambda) + lambda' totals,
        // whose stationary point solves sum R d exp(-a'lambda) a = totals.
        Eigen::VectorXd lam = Eigen::VectorXd::Zero(q); // scaled coordinates
        Eigen::VectorXd g(m);
        auto eval_g = [&](const Eigen::VectorXd& l, Eigen::VectorXd& gout) {
            bool clipped = false;
            for (Eigen::Index k = 0; k < m; ++k) {
                double e = -As.row(k).dot(l);
                if (e > 60.0) {
                    e = 60.0;
                    clipped = true;
                }
                gout(k) = std::exp(e);
            }
            return clipped;
        };
        const Eigen::VectorXd ts = colscale.cwiseInverse().asDiagonal() * totals;
        auto phi = [&](const Eigen::VectorXd& l, const Eigen::VectorXd& gv) {
            return cw.d.dot(gv) + l.dot(ts);
        };
        eval_g(lam, g);
        double obj = phi(lam, g);
        int it = 0;
        bool converged = false;
        for (; it < opts.max_iter; ++it) {
            const Eigen::VectorXd dg = (cw.d.array() * g.array()).matrix();
            const Eigen::VectorXd F = As.transpose() * dg - ts; // -grad phi
            const double res = relative_residual(colscale.asDiagonal() * F, scales);
            if (res <= opts.tol) {
                converged = true;
                break;
            }
            const Eigen::MatrixXd H = As.transpose() * dg.asDiagonal() * As;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            if (ldlt.info() != Eigen::Success)
                throw NoFeasibleWeights("raking Newton step singular at iteration " +
                                        std::to_string(it));
            const Eigen::VectorXd step = ldlt.solve(F);
            const double slope = -F.dot(step); // directional derivative of phi
            double alpha = 1.0;
            bool improved = false;
            Eigen::VectorXd lam_new, g_new(m);
            for (int h = 0; h < 50; ++h) {
                lam_new = lam + alpha * step;
                eval_g(lam_new, g_new);
                const double obj_new = phi(lam_new, g_new);
                if (std::isfinite(obj_new) && obj_new <= obj + 1e-4 * alpha * slope) {
                    lam = lam_new;
                    g = g_new;
                    obj = obj_new;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!improved)
                throw NoFeasibleWeights("raking line search stalled; totals may be infeasible");
        }
        if (!converged)
            throw NoFeasibleWeights("raking did not converge in " + std::to_string(opts.max_iter) +
                                    " iterations");
        cw.lambda = colscale.cwiseInverse().asDiagonal() * lam;
        cw.g = g;
        cw.iterations = it;
    }

    cw.w = cw.g.cwiseProduct(cw.d);
    cw.negative_weights = (cw.w.array() <= 0).any();
    if (distance == Distance::poisson_deviance && cw.negative_weights)
        throw NoFeasibleWeights("nonpositive raking weight"); // cannot happen with g = exp(.)
    cw.residual = relative_residual(A.transpose() * cw.w - totals, scales);
    if (cw.residual > 1e-8)
        throw NoFeasibleWeights("calibration constraints violated beyond tolerance");
    return cw;
}

std::pair<CalibratedWeights, CalibratedWeights> three_phase_calibrate(
    const ThreePhaseDesign& design, const FlatTable& t, const Eigen::MatrixXd& aux_p1,
    const Eigen::MatrixXd& aux_p2, Distance distance, const CalibrationOptions& opts) {
    const int n = t.n_subjects;
    if (aux_p1.rows() != n || aux_p2.rows() != n)
        throw ConfigError("three_phase_calibrate: aux matrices must have one row per subject");

    std::vector<std::uint8_t> in_p2(t.r1.begin(), t.r1.end());
    std::vector<std::uint8_t> in_p3(n, 0);
    for (int i = 0; i < n; ++i) in_p3[i] = (t.r1[i] && t.r2[i]) ? 1 : 0;

    // Stage 1: full-cohort totals of the phase-1 auxiliaries.
    const Eigen::VectorXd totals1 = aux_p1.colwise().sum();
    Eigen::VectorXd d1 = Eigen::VectorXd::Ones(n);
    for (int i = 0; i < n; ++i)
        if (t.r1[i]) d1(i) = design.d1(i);
    CalibratedWeights w1 = calibrate(d1, in_p2, aux_p1, totals1, distance, opts);

    // Stage 2: unweighted phase-2 totals of the phase-2 auxiliaries.
    Eigen::VectorXd totals2 = Eigen::VectorXd::Zero(aux_p2.cols());
    for (int i = 0; i < n; ++i)
        if (t.r1[i]) totals2 += aux_p2.row(i).transpose();
    Eigen::VectorXd d2 = Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd aux2 = Eigen::MatrixXd::Zero(n, aux_p2.cols());
    for (int i = 0; i < n; ++i)
        if (in_p3[i]) {
            d2(i) = design.d2(i);
            aux2.row(i) = aux_p2.row(i);
        }
    CalibratedWeights w2 = calibrate(d2, in_p3, aux2, totals2, distance, opts);
    return {std::move(w1), std::move(w2)};
}

} // namespace triphase
