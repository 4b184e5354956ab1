#include "triphase/glm.hpp"

#include "triphase/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace triphase {

namespace {

double log1pexp(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Column rank check on the rows with positive weight; names aliased columns.
void check_rank(const DesignData& dd, const Eigen::VectorXd& w, double tol) {
    const Eigen::Index n = dd.X.rows(), p = dd.X.cols();
    Eigen::Index m = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) > 0) ++m;
    if (m < p) throw RankDeficient("fewer positive-weight rows than columns");
    Eigen::MatrixXd Xp(m, p);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) > 0) Xp.row(r++) = dd.X.row(i);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xp);
    qr.setThreshold(tol);
    const Eigen::Index rank = qr.rank();
    if (rank < p) {
        const auto perm = qr.colsPermutation().indices();
        std::ostringstream msg;
        msg << "design matrix is rank deficient (rank " << rank << " of " << p
            << "); aliased:";
        for (Eigen::Index j = rank; j < p; ++j) msg << " " << dd.colnames[perm(j)];
        throw RankDeficient(msg.str());
    }
}

double binomial_deviance(const DesignData& dd, const Eigen::VectorXd& w,
                         const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        ll += w(i) * (dd.y(i) * eta(i) - log1pexp(eta(i)));
    return -2.0 * ll;
}

double poisson_deviance(const DesignData& dd, const Eigen::VectorXd& w,
                        const Eigen::VectorXd& mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double y = dd.y(i);
        double t = mu(i) - y;
        if (y > 0) t += y * std::log(y / mu(i));
        dev += 2.0 * w(i) * t;
    }
    return dev;
}

/// Ridge penalty mask: intercepts stay unpenalized. `block` is the number
/// of coefficients per category block (multinomial stacks blocks).
Eigen::VectorXd ridge_mask(Eigen::Index dim, Eigen::Index block, double ridge) {
    Eigen::VectorXd m = Eigen::VectorXd::Constant(dim, ridge);
    for (Eigen::Index j = 0; j < dim; j += block) m(j) = 0.0;
    return m;
}

FitResult fit_binomial_poisson(const DesignData& dd, const Eigen::VectorXd& w,
                               const FitOptions& opts) {
    const Eigen::Index n = dd.X.rows(), p = dd.X.cols();
    const bool binom = dd.family == Family::binomial;
    const Eigen::VectorXd penalty = ridge_mask(p, p, opts.ridge);

    FitResult fit;
    fit.colnames = dd.colnames;
    fit.beta = Eigen::VectorXd::Zero(p);

    // Analytic intercept start.
    const double wsum = w.sum();
    if (wsum > 0) {
        if (binom) {
            const double ybar = std::min(0.999, std::max(1e-3, w.dot(dd.y) / wsum));
            fit.beta(0) = std::log(ybar / (1.0 - ybar));
        } else {
            const double num = w.dot(dd.y);
            const double den = (w.array() * dd.offset_log.array().exp()).sum();
            fit.beta(0) = std::log(std::max(num, 0.1) / std::max(den, 1e-12));
        }
    }

    Eigen::VectorXd eta(n), mu(n), wvar(n), resid(n);
    // Penalized deviance: deviance + ridge * |beta_nonintercept|^2.
    auto refresh = [&](const Eigen::VectorXd& beta) {
        eta = dd.X * beta + dd.offset_log;
        if (binom) {
            for (Eigen::Index i = 0; i < n; ++i) mu(i) = sigmoid(eta(i));
            wvar = w.array() * mu.array() * (1.0 - mu.array());
        } else {
            mu = eta.array().min(300.0).exp();
            wvar = w.array() * mu.array();
        }
        resid = w.array() * (dd.y - mu).array();
        const double dev = binom ? binomial_deviance(dd, w, eta) : poisson_deviance(dd, w, mu);
        return dev + penalty.dot(beta.cwiseProduct(beta));
    };

    double dev = refresh(fit.beta);
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Eigen::VectorXd score = dd.X.transpose() * resid;
        score -= penalty.cwiseProduct(fit.beta); // half-gradient of the penalty term
        if (score.lpNorm<Eigen::Infinity>() < opts.score_tol) {
            converged = true;
            break;
        }
        Eigen::MatrixXd H = dd.X.transpose() * wvar.asDiagonal() * dd.X;
        H.diagonal() += penalty;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw RankDeficient("information matrix factorization failed");
        const Eigen::VectorXd delta = ldlt.solve(score);

        // Step-halve if the penalized deviance does not improve.
        double step = 1.0;
        Eigen::VectorXd beta_new;
        double dev_new = 0.0;
        for (int h = 0; h < 40; ++h) {
            beta_new = fit.beta + step * delta;
            dev_new = refresh(beta_new);
            if (std::isfinite(dev_new) && dev_new <= dev + 1e-8 * (std::abs(dev) + 1.0)) break;
            step *= 0.5;
        }
        const double dev_old = dev;
        fit.beta = beta_new;
        dev = dev_new;
        if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < opts.dev_tol) {
            converged = true;
            ++it;
            break;
        }
    }
    refresh(fit.beta);

    fit.iterations = it;
    fit.converged = converged;
    fit.deviance = dev;
    fit.eta = eta;
    fit.mu = mu;
    if (binom)
        fit.separation_risk =
            (mu.minCoeff() < 1e-8 || mu.maxCoeff() > 1.0 - 1e-8);
    if (!converged) throw NonConvergence("IRLS did not converge in " +
                                         std::to_string(opts.max_iter) + " iterations");
    if (binom && opts.ridge == 0 && fit.separation_risk &&
        fit.beta.lpNorm<Eigen::Infinity>() > 12.0)
        throw Separation("fitted probabilities pinned at 0/1 with diverging coefficients");

    fit.info = dd.X.transpose() * wvar.asDiagonal() * dd.X;
    fit.info.diagonal() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.info);
    fit.vcov_model = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    return fit;
}

FitResult fit_multinomial(const DesignData& dd, const Eigen::VectorXd& w,
                          const FitOptions& opts) {
    const Eigen::Index n = dd.X.rows(), p = dd.X.cols();
    const int K = dd.n_categories;
    if (K < 2) throw ConfigError("multinomial response needs at least 2 categories");
    const int Q = K - 1;
    const Eigen::Index np = p * Q;
    const Eigen::VectorXd penalty = ridge_mask(np, p, opts.ridge);

    // Every category level must appear in the fitting subset.
    {
        std::vector<int> seen(K, 0);
        for (Eigen::Index i = 0; i < n; ++i)
            if (w(i) > 0) seen[static_cast<int>(dd.y(i))] = 1;
        for (int k = 0; k < K; ++k)
            if (!seen[k])
                throw SparseCategory("category code " + std::to_string(dd.category_codes[k]) +
                                     " absent from the fitting subset");
    }

    FitResult fit;
    fit.colnames.reserve(np);
    for (int q = 0; q < Q; ++q)
        for (Eigen::Index j = 0; j < p; ++j)
            fit.colnames.push_back("cat" + std::to_string(dd.category_codes[q + 1]) + ":" +
                                   dd.colnames[j]);
    fit.n_categories = K;
    fit.beta = Eigen::VectorXd::Zero(np);

    Eigen::MatrixXd P(n, K); // fitted probabilities
    auto refresh = [&](const Eigen::VectorXd& beta) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double denom = 1.0;
            double emax = 0.0; // baseline eta = 0
            Eigen::VectorXd etas(Q);
            for (int q = 0; q < Q; ++q) {
                etas(q) = dd.X.row(i).dot(beta.segment(q * p, p));
                emax = std::max(emax, etas(q));
            }
            denom = std::exp(-emax);
            for (int q = 0; q < Q; ++q) denom += std::exp(etas(q) - emax);
            P(i, 0) = std::exp(-emax) / denom;
            for (int q = 0; q < Q; ++q) P(i, q + 1) = std::exp(etas(q) - emax) / denom;
            ll += w(i) * std::log(std::max(P(i, static_cast<int>(dd.y(i))), 1e-300));
        }
        return -2.0 * ll + penalty.dot(beta.cwiseProduct(beta));
    };

    double dev = refresh(fit.beta);
    bool converged = false;
    int it = 0;
    Eigen::VectorXd score(np);
    Eigen::MatrixXd H(np, np);
    for (; it < opts.max_iter; ++it) {
        // Score and Hessian blocks.
        score.setZero();
        for (int q = 0; q < Q; ++q) {
            Eigen::VectorXd rq(n);
            for (Eigen::Index i = 0; i < n; ++i)
                rq(i) = w(i) * ((static_cast<int>(dd.y(i)) == q + 1 ? 1.0 : 0.0) - P(i, q + 1));
            score.segment(q * p, p) = dd.X.transpose() * rq;
        }
        score -= penalty.cwiseProduct(fit.beta);
        if (score.lpNorm<Eigen::Infinity>() < opts.score_tol) {
            converged = true;
            break;
        }
        for (int q = 0; q < Q; ++q) {
            for (int s = q; s < Q; ++s) {
                Eigen::VectorXd wqs(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double mq = P(i, q + 1), ms = P(i, s + 1);
                    wqs(i) = w(i) * (q == s ? mq * (1.0 - mq) : -mq * ms);
                }
                const Eigen::MatrixXd block = dd.X.transpose() * wqs.asDiagonal() * dd.X;
                H.block(q * p, s * p, p, p) = block;
                if (s != q) H.block(s * p, q * p, p, p) = block.transpose();
            }
        }
        H.diagonal() += penalty;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw RankDeficient("multinomial information factorization failed");
        const Eigen::VectorXd delta = ldlt.solve(score);
        double step = 1.0;
        Eigen::VectorXd beta_new;
        double dev_new = 0.0;
        for (int h = 0; h < 40; ++h) {
            beta_new = fit.beta + step * delta;
            dev_new = refresh(beta_new);
            if (std::isfinite(dev_new) && dev_new <= dev + 1e-8 * (std::abs(dev) + 1.0)) break;
            step *= 0.5;
        }
        const double dev_old = dev;
        fit.beta = beta_new;
        dev = dev_new;
        if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < opts.dev_tol) {
            converged = true;
            ++it;
            break;
        }
    }
    refresh(fit.beta);
    fit.iterations = it;
    fit.converged = converged;
    fit.deviance = dev;
    fit.mu_cat = P;
    fit.separation_risk = (P.minCoeff() < 1e-8 || P.maxCoeff() > 1.0 - 1e-8);
    if (!converged) throw NonConvergence("multinomial Newton did not converge");
    if (opts.ridge == 0 && fit.separation_risk && fit.beta.lpNorm<Eigen::Infinity>() > 12.0)
        throw Separation("multinomial probabilities pinned at 0/1 with diverging coefficients");

    // Final information matrix.
    for (int q = 0; q < Q; ++q) {
        for (int s = q; s < Q; ++s) {
            Eigen::VectorXd wqs(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double mq = P(i, q + 1), ms = P(i, s + 1);
                wqs(i) = w(i) * (q == s ? mq * (1.0 - mq) : -mq * ms);
            }
            const Eigen::MatrixXd block = dd.X.transpose() * wqs.asDiagonal() * dd.X;
            H.block(q * p, s * p, p, p) = block;
            if (s != q) H.block(s * p, q * p, p, p) = block.transpose();
        }
    }
    H.diagonal() += penalty;
    fit.info = H;
    fit.vcov_model = Eigen::LDLT<Eigen::MatrixXd>(H).solve(Eigen::MatrixXd::Identity(np, np));
    return fit;
}

} // namespace

FitResult fit_glm(const DesignData& dd, const Eigen::VectorXd& weights, const FitOptions& opts) {
    if (weights.size() != dd.X.rows()) throw ConfigError("weights length mismatch");
    if ((weights.array() < 0).any()) throw ConfigError("negative unit weight");
    if (opts.ridge == 0) check_rank(dd, weights, opts.rank_tol);

    switch (dd.family) {
        case Family::binomial:
        case Family::poisson: return fit_binomial_poisson(dd, weights, opts);
        case Family::multinomial: return fit_multinomial(dd, weights, opts);
        case Family::gaussian: return fit_linear(dd, weights, opts);
    }
    throw ConfigError("unsupported family");
}

FitResult fit_linear(const DesignData& dd, const Eigen::VectorXd& weights, const FitOptions& opts) {
    if (weights.size() != dd.X.rows()) throw ConfigError("weights length mismatch");
    if (opts.ridge == 0) check_rank(dd, weights, opts.rank_tol);
    const Eigen::Index p = dd.X.cols();

    FitResult fit;
    fit.colnames = dd.colnames;
    Eigen::MatrixXd G = dd.X.transpose() * weights.asDiagonal() * dd.X;
    G.diagonal() += ridge_mask(p, p, opts.ridge);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success) throw RankDeficient("normal equations factorization failed");
    fit.beta = ldlt.solve(dd.X.transpose() * (weights.asDiagonal() * dd.y));
    fit.eta = dd.X * fit.beta;
    fit.mu = fit.eta;

    double rss = 0.0, nw = 0.0;
    for (Eigen::Index i = 0; i < dd.X.rows(); ++i) {
        const double r = dd.y(i) - fit.mu(i);
        rss += weights(i) * r * r;
        if (weights(i) > 0) nw += 1.0;
    }
    fit.deviance = rss;
    fit.sigma2 = rss / std::max(1.0, nw - static_cast<double>(p));
    fit.vcov_model = fit.sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.info = G / fit.sigma2;
    fit.converged = true;
    fit.iterations = 1;
    return fit;
}

ClusterVectors cluster_scores(const DesignData& dd, const FitResult& fit,
                              const Eigen::VectorXd& weights, bool weighted) {
    const Eigen::Index n = dd.X.rows(), p = dd.X.cols();
    const int Q = fit.n_categories > 0 ? fit.n_categories - 1 : 1;
    const Eigen::Index dim = p * Q;

    ClusterVectors cv;
    std::unordered_map<int, int> slot;
    slot.reserve(dd.cluster.size());
    std::vector<Eigen::VectorXd> acc;
    int last_cluster = -1, last_slot = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = dd.cluster[i];
        int s;
        if (c == last_cluster) {
            s = last_slot;
        } else {
            auto [it, inserted] = slot.try_emplace(c, static_cast<int>(acc.size()));
            if (inserted) {
                acc.emplace_back(Eigen::VectorXd::Zero(dim));
                cv.ids.push_back(c);
            }
            s = it->second;
            last_cluster = c;
            last_slot = s;
        }
        const double mult = weighted ? weights(i) : 1.0;
        if (fit.n_categories > 0) {
            for (int q = 0; q < Q; ++q) {
                const double r =
                    mult * ((static_cast<int>(dd.y(i)) == q + 1 ? 1.0 : 0.0) - fit.mu_cat(i, q + 1));
                acc[s].segment(q * p, p) += r * dd.X.row(i).transpose();
            }
        } else {
            const double r = mult * (dd.y(i) - fit.mu(i));
            acc[s] += r * dd.X.row(i).transpose();
        }
    }
    cv.m.resize(static_cast<Eigen::Index>(acc.size()), dim);
    for (size_t k = 0; k < acc.size(); ++k) cv.m.row(static_cast<Eigen::Index>(k)) = acc[k];
    return cv;
}

ClusterVectors influence(const DesignData& dd, FitResult& fit, const Eigen::VectorXd& weights,
                         bool weighted) {
    if (!fit.converged) throw NotConverged("influence requires a converged fit");
    ClusterVectors cv = cluster_scores(dd, fit, weights, weighted);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.info);
    if (ldlt.info() != Eigen::Success) throw SingularBread("information matrix not factorizable");
    cv.m = ldlt.solve(cv.m.transpose()).transpose();
    fit.cluster_infl = cv.m;
    return cv;
}

Eigen::MatrixXd sandwich(FitResult& fit, const Eigen::MatrixXd& contribs) {
    if (contribs.rows() < 2)
        throw SingularBread("need at least two independent units for a sandwich variance");
    if (contribs.cols() != fit.info.rows())
        throw ConfigError("contribution dimension does not match the information matrix");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.info);
    if (ldlt.info() != Eigen::Success) throw SingularBread("bread matrix not factorizable");
    const double rcond = ldlt.rcond();
    if (!(rcond > 1e-14)) throw SingularBread("bread matrix numerically singular");
    const Eigen::MatrixXd meat = contribs.transpose() * contribs;
    Eigen::MatrixXd v = ldlt.solve(ldlt.solve(meat).transpose());
    v = 0.5 * (v + v.transpose()).eval();
    fit.vcov_sandwich = v;
    return v;
}

} // namespace triphase
