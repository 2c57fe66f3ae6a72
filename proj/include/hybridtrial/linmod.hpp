#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "hybridtrial/error.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

inline double expit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Non-covariate regressors a design may carry.
enum class Regressor { z, a };

/// Column layout of a regression design: optional intercept, selected
/// covariates, squared covariates, then the z / a indicators.
struct DesignSpec {
    bool intercept = true;
    std::vector<std::size_t> covariates;
    std::vector<std::size_t> squares;
    std::vector<Regressor> extras;

    static DesignSpec main_effects(std::size_t p, bool with_intercept = true) {
        DesignSpec spec;
        spec.intercept = with_intercept;
        for (std::size_t j = 0; j < p; ++j) spec.covariates.push_back(j);
        return spec;
    }

    static DesignSpec intercept_only() { return DesignSpec{}; }

    DesignSpec with(Regressor r) const {
        DesignSpec out = *this;
        out.extras.push_back(r);
        return out;
    }

    std::size_t n_columns() const {
        return (intercept ? 1u : 0u) + covariates.size() + squares.size() + extras.size();
    }

    void check(std::size_t p) const {
        auto check_indices = [p](const std::vector<std::size_t>& idx, const char* what) {
            std::set<std::size_t> seen;
            for (auto j : idx) {
                if (j >= p)
                    throw DimensionMismatch(std::string(what) + " index " + std::to_string(j) +
                                            " out of range for " + std::to_string(p) + " covariates");
                if (!seen.insert(j).second)
                    throw DimensionMismatch(std::string("duplicate ") + what + " index " +
                                            std::to_string(j));
            }
        };
        check_indices(covariates, "covariate");
        check_indices(squares, "squared covariate");
        std::set<Regressor> seen;
        for (auto r : extras)
            if (!seen.insert(r).second) throw DimensionMismatch("duplicate extra regressor");
    }

    /// One design row from a covariate row and indicator values.
    template <typename Row, typename Out>
    void fill_row(const Row& x, int z, int a, Out&& out) const {
        Eigen::Index c = 0;
        if (intercept) out[c++] = 1.0;
        for (auto j : covariates) out[c++] = x[static_cast<Eigen::Index>(j)];
        for (auto j : squares) {
            const double v = x[static_cast<Eigen::Index>(j)];
            out[c++] = v * v;
        }
        for (auto r : extras) out[c++] = r == Regressor::z ? z : a;
    }

    Eigen::MatrixXd build(const TrialDataset& d, const std::vector<std::size_t>& rows) const {
        check(d.n_covariates());
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_columns()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto i = static_cast<Eigen::Index>(rows[r]);
            fill_row(d.x.row(i), d.z[i], d.a[i], m.row(static_cast<Eigen::Index>(r)));
        }
        return m;
    }

    Eigen::MatrixXd build(const TrialDataset& d) const {
        std::vector<std::size_t> rows(d.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return build(d, rows);
    }

    /// Design evaluated at every row's covariates with the indicators fixed.
    Eigen::MatrixXd build_at(const Eigen::MatrixXd& x, int z = 0, int a = 0) const {
        check(static_cast<std::size_t>(x.cols()));
        Eigen::MatrixXd m(x.rows(), static_cast<Eigen::Index>(n_columns()));
        for (Eigen::Index i = 0; i < x.rows(); ++i) fill_row(x.row(i), z, a, m.row(i));
        return m;
    }
};

struct FittedLinear {
    Eigen::VectorXd coefficients;
    double residual_variance = 0.0;
};

struct FittedLogistic {
    Eigen::VectorXd coefficients;
    bool converged = false;
    int iterations = 0;
    /// Log-likelihood after each accepted step, starting from the initial point.
    std::vector<double> loglik_trace;

    double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

struct IrlsOptions {
    int max_iter = 100;
    /// Largest |score component| / n accepted as converged.
    double score_tol = 1e-10;
    int max_halvings = 20;
    double prob_floor = 1e-10;
    double max_coef_norm = 1e4;
    /// Consecutive iterations with escaped probabilities that count as separation.
    int escape_patience = 5;
};

/// Relative pivot threshold below which a design is treated as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

namespace detail {

inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const Eigen::MatrixXd& design) {
    if (design.rows() < design.cols() || design.cols() == 0) throw RankDeficient(0.0);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const auto k = design.cols();
    const Eigen::VectorXd diag = qr.matrixQR().diagonal().head(k).cwiseAbs();
    const double largest = diag.maxCoeff();
    const double smallest = diag.minCoeff();
    if (!(largest > 0.0) || smallest < kRankTolerance * largest) throw RankDeficient(smallest);
    return qr;
}

inline double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + exp(eta)) computed without overflow
        const double e = eta[i];
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y[i] * e - softplus;
    }
    return ll;
}

} // namespace detail

/// Least squares through a column-pivoted Householder QR of the (row-scaled)
/// design. Throws RankDeficient when the smallest |R_kk| falls below
/// 1e-10 times the largest.
inline FittedLinear fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    if (design.rows() != y.size())
        throw DimensionMismatch("design has " + std::to_string(design.rows()) + " rows, y has " +
                                std::to_string(y.size()));
    const auto qr = detail::checked_qr(design);
    FittedLinear fit;
    fit.coefficients = qr.solve(y);
    const double rss = (y - design * fit.coefficients).squaredNorm();
    const auto dof = design.rows() - design.cols();
    fit.residual_variance = dof > 0 ? rss / static_cast<double>(dof) : 0.0;
    return fit;
}

inline FittedLinear fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights) {
    if (weights.size() != y.size()) throw DimensionMismatch("weights length differs from y");
    if ((weights.array() < 0.0).any()) throw DimensionMismatch("negative weight");
    const Eigen::VectorXd sw = weights.cwiseSqrt();
    const Eigen::MatrixXd scaled = sw.asDiagonal() * design;
    const Eigen::VectorXd ys = sw.cwiseProduct(y);
    FittedLinear fit = fit_ols(scaled, ys);
    const double rss = (ys - scaled * fit.coefficients).squaredNorm();
    const auto dof = design.rows() - design.cols();
    fit.residual_variance = dof > 0 ? rss / static_cast<double>(dof) : 0.0;
    return fit;
}

/// Maximum-likelihood logistic regression by Newton/IRLS with step-halving.
inline FittedLogistic fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                   const IrlsOptions& opt = {}) {
    if (design.rows() != y.size())
        throw DimensionMismatch("design has " + std::to_string(design.rows()) + " rows, y has " +
                                std::to_string(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw DimensionMismatch("logistic response must be 0/1");
    const double ybar = y.size() > 0 ? y.mean() : 0.0;
    if (ybar <= 0.0 || ybar >= 1.0) throw Separation("response has a single class");
    detail::checked_qr(design);

    const auto k = design.cols();
    FittedLogistic fit;
    fit.coefficients = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(design.rows());
    double ll = detail::bernoulli_loglik(eta, y);
    fit.loglik_trace.push_back(ll);

    int escaped_run = 0;
    for (int iter = 0; iter <= opt.max_iter; ++iter) {
        Eigen::VectorXd p(eta.size());
        bool escaped = false;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            p[i] = expit(eta[i]);
            if (p[i] < opt.prob_floor || p[i] > 1.0 - opt.prob_floor) escaped = true;
        }
        escaped_run = escaped ? escaped_run + 1 : 0;
        if (escaped_run >= opt.escape_patience)
            throw Separation("fitted probabilities left [1e-10, 1-1e-10] for " +
                             std::to_string(escaped_run) + " iterations");

        const Eigen::VectorXd score = design.transpose() * (y - p);
        const double score_max = score.cwiseAbs().maxCoeff() / static_cast<double>(y.size());
        if (score_max <= opt.score_tol) {
            if (escaped) throw Separation("converged to boundary probabilities");
            fit.converged = true;
            fit.iterations = iter;
            return fit;
        }
        if (iter == opt.max_iter) break;

        const Eigen::VectorXd w = p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p);
        const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd step = ldlt.solve(score);
        if (!step.allFinite()) throw Separation("singular information matrix");

        Eigen::VectorXd beta_new = fit.coefficients + step;
        Eigen::VectorXd eta_new = design * beta_new;
        double ll_new = detail::bernoulli_loglik(eta_new, y);
        const double slack = 1e-12 * (1.0 + std::abs(ll));
        int halvings = 0;
        while (!(ll_new >= ll - slack) && halvings < opt.max_halvings) {
            step *= 0.5;
            beta_new = fit.coefficients + step;
            eta_new = design * beta_new;
            ll_new = detail::bernoulli_loglik(eta_new, y);
            ++halvings;
        }
        if (!(ll_new >= ll - slack)) {
            // no ascent direction left at working precision
            fit.iterations = iter + 1;
            if (score_max <= 1e3 * opt.score_tol && !escaped) {
                fit.converged = true;
                return fit;
            }
            throw NoConvergence(opt.max_iter);
        }

        fit.coefficients = beta_new;
        eta = eta_new;
        ll = ll_new;
        fit.loglik_trace.push_back(ll);
        if (fit.coefficients.norm() > opt.max_coef_norm)
            throw Separation("coefficient norm exceeded 1e4");
    }
    throw NoConvergence(opt.max_iter);
}

inline Eigen::VectorXd predict(const FittedLinear& fit, const Eigen::MatrixXd& design) {
    if (design.cols() != fit.coefficients.size())
        throw DimensionMismatch("design has " + std::to_string(design.cols()) +
                                " columns, fit has " + std::to_string(fit.coefficients.size()));
    return design * fit.coefficients;
}

inline Eigen::VectorXd predict(const FittedLogistic& fit, const Eigen::MatrixXd& design) {
    if (design.cols() != fit.coefficients.size())
        throw DimensionMismatch("design has " + std::to_string(design.cols()) +
                                " columns, fit has " + std::to_string(fit.coefficients.size()));
    Eigen::VectorXd eta = design * fit.coefficients;
    return eta.unaryExpr([](double e) { return expit(e); });
}

enum class MeanLink { identity, logit };

/// A fitted conditional-mean function of the covariates alone.
struct FittedMean {
    DesignSpec design;
    Eigen::VectorXd coefficients;
    MeanLink link = MeanLink::identity;

    template <typename Row>
    double operator()(const Row& x) const {
        Eigen::RowVectorXd r(static_cast<Eigen::Index>(design.n_columns()));
        design.fill_row(x, 0, 0, r);
        const double eta = r.dot(coefficients);
        return link == MeanLink::logit ? expit(eta) : eta;
    }

    Eigen::VectorXd evaluate(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd eta = design.build_at(x) * coefficients;
        if (link == MeanLink::logit) eta = eta.unaryExpr([](double e) { return expit(e); });
        return eta;
    }
};

/// OLS (identity link) or logistic (logit link) fit of y on `design` over `rows`.
/// The design must not carry z / a regressors.
inline FittedMean fit_mean(const TrialDataset& d, const std::vector<std::size_t>& rows,
                           const DesignSpec& design, const Eigen::VectorXd& y, MeanLink link) {
    if (!design.extras.empty())
        throw DimensionMismatch("mean models are functions of the covariates only");
    const Eigen::MatrixXd m = design.build(d, rows);
    FittedMean fm;
    fm.design = design;
    fm.link = link;
    fm.coefficients = link == MeanLink::logit ? fit_logistic(m, y).coefficients : fit_ols(m, y).coefficients;
    return fm;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        out[static_cast<Eigen::Index>(r)] = v[static_cast<Eigen::Index>(rows[r])];
    return out;
}

} // namespace hybridtrial
