#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hybridtrial/error.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/outcome_models.hpp"
#include "hybridtrial/propensity.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

enum class EstimandName { ATT, ATE, ATC, ATO, Custom };

inline const char* to_string(EstimandName e) {
    switch (e) {
    case EstimandName::ATT: return "ATT";
    case EstimandName::ATE: return "ATE";
    case EstimandName::ATC: return "ATC";
    case EstimandName::ATO: return "ATO";
    case EstimandName::Custom: return "Custom";
    }
    return "?";
}

/// Tilting function h(e_z) defining a weighted average treatment effect,
/// with its analytic derivative.
struct EstimandSpec {
    EstimandName name = EstimandName::ATT;
    std::function<double(double)> h;
    std::function<double(double)> h_prime;

    static EstimandSpec att() {
        return {EstimandName::ATT, [](double e) { return e; }, [](double) { return 1.0; }};
    }
    static EstimandSpec ate() {
        return {EstimandName::ATE, [](double) { return 1.0; }, [](double) { return 0.0; }};
    }
    static EstimandSpec atc() {
        return {EstimandName::ATC, [](double e) { return 1.0 - e; }, [](double) { return -1.0; }};
    }
    static EstimandSpec ato() {
        return {EstimandName::ATO, [](double e) { return e * (1.0 - e); },
                [](double e) { return 1.0 - 2.0 * e; }};
    }
    static EstimandSpec custom(std::function<double(double)> h, std::function<double(double)> h_prime) {
        return {EstimandName::Custom, std::move(h), std::move(h_prime)};
    }
    static EstimandSpec from_name(EstimandName n) {
        switch (n) {
        case EstimandName::ATT: return att();
        case EstimandName::ATE: return ate();
        case EstimandName::ATC: return atc();
        case EstimandName::ATO: return ato();
        case EstimandName::Custom: break;
        }
        throw DimensionMismatch("custom estimands need explicit h and h'");
    }
};

struct EstimateResult {
    std::string estimator_id;
    EstimandName estimand = EstimandName::ATT;
    double point = 0.0;
    std::map<std::string, double> diagnostics;
    std::vector<std::string> flags;
};

inline constexpr double kDegenerateDenominatorTol = 1e-12;

namespace detail {

inline void require_cell(const ArmCounts& c, int z, int a) {
    const std::size_t n = z == 1 ? (a == 1 ? c.n11 : c.n10) : c.n00;
    if (n == 0) throw EmptyCell(z, a);
}

inline void require_open_unit(const Eigen::VectorXd& e, const char* which) {
    for (Eigen::Index i = 0; i < e.size(); ++i)
        if (!(e[i] > 0.0 && e[i] < 1.0))
            throw OverlapViolation(static_cast<std::size_t>(i), std::string(which) + " outside (0, 1)");
}

inline void require_rows(const TrialDataset& d, const FittedPropensities& fp) {
    if (static_cast<std::size_t>(fp.e_z.size()) != d.size() || static_cast<std::size_t>(fp.e_a.size()) != d.size())
        throw DimensionMismatch("propensities do not match the dataset");
}

inline EstimateResult make_result(std::string id, EstimandName estimand, double point, const ArmCounts& c) {
    EstimateResult r;
    r.estimator_id = std::move(id);
    r.estimand = estimand;
    r.point = point;
    r.diagnostics["N1"] = static_cast<double>(c.trial());
    r.diagnostics["N0"] = static_cast<double>(c.n00);
    if (!std::isfinite(point)) throw DegenerateDenominator(point);
    return r;
}

} // namespace detail

/// Difference of arm means within the concurrent trial.
inline EstimateResult estimate_md(const TrialDataset& d) {
    const ArmCounts c = validate(d);
    detail::require_cell(c, 1, 1);
    detail::require_cell(c, 1, 0);
    double s11 = 0.0, s10 = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (d.in_cell(i, 1, 1)) s11 += d.y[k];
        if (d.in_cell(i, 1, 0)) s10 += d.y[k];
    }
    return detail::make_result("MD", EstimandName::ATT,
                               s11 / static_cast<double>(c.n11) - s10 / static_cast<double>(c.n10), c);
}

/// Mean over trial subjects of mu11(x) - mu10(x).
inline EstimateResult estimate_mdp(const TrialDataset& d, const OutcomeModels& models) {
    const ArmCounts c = validate(d);
    detail::require_cell(c, 1, 1);
    detail::require_cell(c, 1, 0);
    const Eigen::VectorXd delta = models.eval11(d.x) - models.eval10(d.x);
    double s = 0.0;
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (d.z[i] == 1) s += delta[i];
    return detail::make_result("MDP", EstimandName::ATT, s / static_cast<double>(c.trial()), c);
}

/// Weighted contrast of trial-treated against all controls, external controls
/// reweighted by the odds e_z / (1 - e_z).
inline EstimateResult estimate_ps(const TrialDataset& d, const FittedPropensities& fp) {
    const ArmCounts c = validate(d);
    detail::require_rows(d, fp);
    detail::require_cell(c, 1, 1);
    double num_t = 0.0, den_t = 0.0, num_c = 0.0, den_c = 0.0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        double w = 1.0;
        if (d.z[i] == 0) {
            const double e = fp.e_z[i];
            if (!(e > 0.0 && e < 1.0)) throw OverlapViolation(static_cast<std::size_t>(i), "e_z outside (0, 1)");
            w = e / (1.0 - e);
        }
        if (d.z[i] == 1 && d.a[i] == 1) {
            num_t += w * d.y[i];
            den_t += w;
        } else {
            num_c += w * d.y[i];
            den_c += w;
        }
    }
    if (den_c <= 0.0) throw EmptyCell(1, 0);
    EstimateResult r = detail::make_result("PS", EstimandName::ATT, num_t / den_t - num_c / den_c, c);
    r.diagnostics["sum_weights_control"] = den_c;
    return r;
}

/// Augmented IPW contrast within the trial, using outcome models typically fit
/// under mean exchangeability.
inline EstimateResult estimate_dr(const TrialDataset& d, const FittedPropensities& fp,
                                  const OutcomeModels& models_me) {
    const ArmCounts c = validate(d);
    detail::require_rows(d, fp);
    detail::require_cell(c, 1, 1);
    detail::require_cell(c, 1, 0);
    detail::require_open_unit(fp.e_a, "e_a");
    const Eigen::VectorXd m11 = models_me.eval11(d.x);
    const Eigen::VectorXd m10 = models_me.eval10(d.x);
    double s = 0.0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        if (d.z[i] != 1) continue;
        const double ea = fp.e_a[i];
        s += m11[i] - m10[i];
        if (d.a[i] == 1)
            s += (d.y[i] - m11[i]) / ea;
        else
            s -= (d.y[i] - m10[i]) / (1.0 - ea);
    }
    return detail::make_result("DR", EstimandName::ATT, s / static_cast<double>(c.trial()), c);
}

/// Coefficient of A in the OLS fit Y ~ 1 + X + A (+ Z) over every subject.
inline EstimateResult estimate_ancova(const TrialDataset& d, bool include_z_intercept) {
    const ArmCounts c = validate(d);
    DesignSpec design = DesignSpec::main_effects(d.n_covariates()).with(Regressor::a);
    if (include_z_intercept) design = design.with(Regressor::z);
    const FittedLinear fit = fit_ols(design.build(d), d.y);
    const auto a_col = static_cast<Eigen::Index>(1 + d.n_covariates());
    return detail::make_result(include_z_intercept ? "ANCOVA-const" : "ANCOVA-ME", EstimandName::ATT,
                               fit.coefficients[a_col], c);
}

/// Per-subject pieces of the weighted estimator: tilting weight h(e_z),
/// lambda, Delta = mu11 - mu10 and the residual term T.
struct WateTerms {
    Eigen::VectorXd h;
    Eigen::VectorXd lambda;
    Eigen::VectorXd delta;
    Eigen::VectorXd t;
    double denominator = 0.0;  // sum of h * lambda
    double tau = 0.0;
};

inline WateTerms wate_terms(const TrialDataset& d, const FittedPropensities& fp, const OutcomeModels& models,
                            const EstimandSpec& estimand) {
    validate(d);
    detail::require_rows(d, fp);
    detail::require_open_unit(fp.e_a, "e_a");
    const auto n = d.y.size();
    const Eigen::VectorXd m11 = models.eval11(d.x);
    const Eigen::VectorXd m10 = models.eval10(d.x);
    const Eigen::VectorXd m00 = models.eval00(d.x);

    WateTerms w;
    w.h.resize(n);
    w.lambda.resize(n);
    w.delta = m11 - m10;
    w.t.resize(n);
    double num = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ez = fp.e_z[i];
        const double ea = fp.e_a[i];
        const double pe = ez * ea;
        if (!(ez > 0.0) || !(pe < 1.0))
            throw OverlapViolation(static_cast<std::size_t>(i), "e_z * e_a outside (0, 1)");
        const double zi = d.z[i];
        const double ai = d.a[i];
        const double r11 = zi * ai * (d.y[i] - m11[i]);
        const double r10 = zi * (1.0 - ai) * (d.y[i] - m10[i]);
        const double r00 = (1.0 - zi) * (d.y[i] - m00[i]);
        const double hi = estimand.h(ez);
        w.h[i] = hi;
        w.lambda[i] = (zi - ez) * estimand.h_prime(ez) / hi + 1.0;
        w.t[i] = r11 / pe - (r10 + r00) / (1.0 - pe);
        w.denominator += hi * w.lambda[i];
        num += hi * (w.lambda[i] * w.delta[i] + w.t[i]);
    }
    if (!(std::abs(w.denominator) >= kDegenerateDenominatorTol)) throw DegenerateDenominator(w.denominator);
    w.tau = num / w.denominator;
    return w;
}

/// Locally efficient weighted-average-treatment-effect estimator combining
/// trial and external controls; ATT with h = e reproduces the augmented
/// ATT estimator.
inline EstimateResult estimate_wate(const TrialDataset& d, const FittedPropensities& fp,
                                    const OutcomeModels& models, const EstimandSpec& estimand) {
    const ArmCounts c = validate(d);
    const WateTerms w = wate_terms(d, fp, models, estimand);
    EstimateResult r = detail::make_result(std::string("aug-") + to_string(models.bias.spec.kind),
                                           estimand.name, w.tau, c);
    r.diagnostics["sum_h"] = w.h.sum();
    r.diagnostics["sum_h_lambda"] = w.denominator;
    r.diagnostics["sum_weights"] = w.h.cwiseProduct(w.lambda).cwiseAbs().sum();
    if (fp.clamped > 0) r.flags.push_back("propensities clamped: " + std::to_string(fp.clamped));
    return r;
}

/// Population weighted effect sum h(e_z) * effect / sum h(e_z) given true
/// trial-membership probabilities and individual effects.
inline double true_wate(const Eigen::VectorXd& e_z_true, const Eigen::VectorXd& effect, const EstimandSpec& estimand) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < effect.size(); ++i) {
        const double h = estimand.h(e_z_true[i]);
        num += h * effect[i];
        den += h;
    }
    return num / den;
}

} // namespace hybridtrial
